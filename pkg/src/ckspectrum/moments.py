"""Limiting spectral moments of the conjugate kernel model.

Three independent evaluation routes. The main expansion sums
noncrossing partitions of the outer cycle against cached inner group
sums, so it works for every supported weight law. The second-moment
shortcut collapses every coefficient to two scalar functionals and is
only valid for light tails, where it is exact and fast. The quotient
oracle re-derives small moments directly from contracted cycle graphs
with no partition-level simplification at all; it is slow and capped
low, which is the point: it shares no combinatorial shortcuts with the
main route, so agreement between the two is a real consistency check.

Every report carries a per-term breakdown that sums back to the
reported moment exactly, plus linearly propagated error estimates from
the underlying coefficient evaluations.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .activations import theta1, theta2
from .coefficients import CoefficientRequest, Degree, Family, c_degree, c_family
from .graphs import (
    SubsetFamily,
    classify,
    cycle_graph,
    enumerate_admissible_decompositions,
    induced_subgraph,
    quotient,
    w_mu_finest,
    w_pi_subsets,
)
from .partitions import (
    EnumerationLimitError,
    enumerate_noncrossing,
    enumerate_set_partitions,
    partition_stats,
)
from .weightlaws import GaussianWeights, Stable

__all__ = [
    "ROUTE_A_MAX",
    "ROUTE_C_MAX",
    "ModelParams",
    "MomentReport",
    "Tau0Result",
    "hankel_check",
    "moments",
    "moments_gauss",
    "moments_main",
    "moments_oracle",
    "tau0_limit",
]

ROUTE_A_MAX = 6
ROUTE_C_MAX = 4


@dataclass(frozen=True)
class ModelParams:
    """Model aspect ratios and the entry distribution of the kernel."""

    phi: float
    psi: float
    activation: object
    law: object
    sigma_x: float = 1.0

    def __post_init__(self):
        for name in ("phi", "psi", "sigma_x"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite")


@dataclass(frozen=True)
class Tau0Result:
    value: float
    error: float
    admissible: bool


@dataclass(frozen=True)
class MomentReport:
    engine: str
    k_values: tuple
    moments: tuple
    errors: tuple
    breakdown: tuple  # one tuple of term dicts per k
    params_summary: dict

    def moment(self, k):
        if not 1 <= k <= len(self.moments):
            raise ValueError(f"moment index {k} outside computed range")
        return self.moments[k - 1]

    def to_json(self):
        doc = {
            "engine": self.engine,
            "params": self.params_summary,
            "moments": [
                {
                    "k": k,
                    "value": self.moments[k - 1],
                    "error": self.errors[k - 1],
                    "breakdown": list(self.breakdown[k - 1]),
                }
                for k in self.k_values
            ],
        }
        return json.dumps(doc, sort_keys=True)

    def to_csv(self):
        lines = ["k,m_k,error,engine"]
        for k in self.k_values:
            lines.append(
                f"{k},{self.moments[k - 1]:.17g},"
                f"{self.errors[k - 1]:.17g},{self.engine}"
            )
        return "\n".join(lines) + "\n"


def _workers():
    try:
        return max(1, int(os.environ.get("CK_WORKERS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    """Order-preserving map, threaded when CK_WORKERS asks for it.

    Results are reduced in input order, so the worker count never
    changes the output.
    """
    items = list(items)
    n = _workers()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _gauss_sigma(law):
    """Effective Gaussian scale of a light-tailed law, else None."""
    if isinstance(law, GaussianWeights):
        return law.sigma_w
    if isinstance(law, Stable) and law.alpha == 2.0:
        return law.sigma * math.sqrt(2.0)
    return None


def _product_error(factors):
    """Product of (value, error) pairs with first-order error."""
    value = 1.0
    for v, _ in factors:
        value *= v
    err = 0.0
    for i, (_, e) in enumerate(factors):
        partial = e
        for j, (v, _) in enumerate(factors):
            if j != i:
                partial *= abs(v)
        err += partial
    return value, err


def _check_cap(k_max, cap, label):
    if not isinstance(k_max, int) or k_max < 1:
        raise ValueError("k_max must be a positive integer")
    if k_max > cap:
        raise EnumerationLimitError(
            f"{label} supports k_max <= {cap}, got {k_max}"
        )


def _summary(params):
    return {
        "phi": params.phi,
        "psi": params.psi,
        "sigma_x": params.sigma_x,
        "activation": params.activation.name,
        "law": repr(params.law),
        "sup_norm": params.activation.sup_norm,
    }


def _finalize(engine, params, k_max, per_k):
    ks, ms, es, bds = [], [], [], []
    for k, (terms,) in zip(range(1, k_max + 1), per_k):
        value = math.fsum(t["value"] for t in terms)
        error = math.fsum(t["error"] for t in terms)
        if value < -(error + 1e-9 * (1.0 + error)):
            raise RuntimeError(
                f"m_{k} = {value} fell below its error bar {error}"
            )
        ks.append(k)
        ms.append(value)
        es.append(error)
        bds.append(tuple(terms))
    return MomentReport(
        engine=engine,
        k_values=tuple(ks),
        moments=tuple(ms),
        errors=tuple(es),
        breakdown=tuple(bds),
        params_summary=_summary(params),
    )


def _blocks_json(p):
    return [list(b) for b in p.blocks]


# ---------------------------------------------------------------------------
# tau0: contribution of one contracted cycle graph


def tau0_limit(g, params, *, mc_outer=None, mc_inner=None, method="auto",
               seed=0):
    """Limiting contribution of a single contracted graph.

    Non-admissible graphs contribute exactly zero. Otherwise the value
    is a ratio power prefactor times one coefficient factor per block:
    a degree coefficient for single-W blocks, a sum of family
    coefficients over all admissible decompositions for the rest.
    """
    dec = classify(g)
    if not dec.admissible:
        return Tau0Result(0.0, 0.0, False)
    total = g.total_edges()
    half, rem = divmod(total, 2)
    if rem:
        raise RuntimeError("admissible graph with odd edge count")
    pref = params.phi ** (half - len(g.v_ids)) / params.psi ** (
        len(g.w_ids) - 1
    )
    mc = {"mc_outer": mc_outer, "mc_inner": mc_inner, "method": method,
          "seed": seed}
    factors = []
    for blk in dec.blocks:
        if len(blk.w_ids) == 1:
            w = blk.w_ids[0]
            cv = c_degree(
                CoefficientRequest(params.activation, params.law,
                                   params.sigma_x, Degree(blk.degree(w))),
                **mc,
            )
            factors.append((cv.value, cv.abs_error_estimate))
        else:
            val = 0.0
            err = 0.0
            for fam in enumerate_admissible_decompositions(
                    g, frozenset(blk.w_ids)):
                cv = c_family(
                    CoefficientRequest(params.activation, params.law,
                                       params.sigma_x, Family(g, fam)),
                    **mc,
                )
                val += cv.value
                err += cv.abs_error_estimate
            factors.append((val, err))
    prod, perr = _product_error(factors)
    return Tau0Result(pref * prod, abs(pref) * perr, True)


# ---------------------------------------------------------------------------
# route A: main expansion


def _group_sum(n, params, mc):
    """Inner sum over all partitions of one w-group of size n.

    The one-block partition contributes a plain degree coefficient of
    order 2n. Every other partition contracts the group cycle, reads
    off the large finest subsets, and sums family coefficients over all
    ways of merging them, keeping only merges whose unions stay
    connected.
    """
    req = lambda target: CoefficientRequest(
        params.activation, params.law, params.sigma_x, target
    )
    terms = []
    for mu in enumerate_set_partitions(n):
        mu_json = _blocks_json(mu)
        if len(mu) == 1:
            cv = c_degree(req(Degree(2 * n)), **mc)
            wgt = params.psi ** (n - 1)
            terms.append({
                "mu": mu_json,
                "kind": "degree",
                "psi_power": n - 1,
                "value": wgt * cv.value,
                "error": wgt * cv.abs_error_estimate,
            })
            continue
        g = quotient(cycle_graph(n), None, mu)
        large = [s for s in w_mu_finest(n, mu) if len(s) >= 2]
        wgt = params.psi ** (n - len(mu))
        fam_terms = []
        val = 0.0
        err = 0.0
        for merge in enumerate_set_partitions(len(large)):
            subsets = tuple(
                frozenset().union(*(large[i - 1] for i in blk))
                for blk in merge.blocks
            )
            entry = {"P": _blocks_json(merge)}
            if any(not induced_subgraph(g, s).is_connected()
                   for s in subsets):
                entry.update(connected=False, value=0.0, error=0.0)
            else:
                cv = c_family(req(Family(g, SubsetFamily(g, subsets))), **mc)
                entry.update(connected=True, value=cv.value,
                             error=cv.abs_error_estimate)
                val += cv.value
                err += cv.abs_error_estimate
            fam_terms.append(entry)
        terms.append({
            "mu": mu_json,
            "kind": "family",
            "psi_power": n - len(mu),
            "family_terms": fam_terms,
            "value": wgt * val,
            "error": wgt * err,
        })
    value = math.fsum(t["value"] for t in terms)
    error = math.fsum(t["error"] for t in terms)
    return value, error, tuple(terms)


def _pi_term(k, pi, params, c2, group_sums):
    S, R = partition_stats(pi, "V-cycle")
    groups = [s for s in w_pi_subsets(k, pi) if len(s) >= 2]
    if len(groups) != R:
        raise RuntimeError("group count disagrees with partition stats")
    pref = params.phi ** (k - len(pi)) / params.psi ** (k - 1)
    factors = []
    if S:
        factors.append((c2.value ** S,
                        S * abs(c2.value) ** (S - 1) * c2.abs_error_estimate))
    groups_json = []
    for s in groups:
        n = len(s)
        gval, gerr, gterms = group_sums[n]
        factors.append((gval, gerr))
        groups_json.append({
            "w_group": sorted(s, key=lambda w: int(w[1:])),
            "size": n,
            "value": gval,
            "error": gerr,
            "mu_terms": list(gterms),
        })
    prod, perr = _product_error(factors) if factors else (1.0, 0.0)
    return {
        "partition": _blocks_json(pi),
        "phi_power": k - len(pi),
        "psi_power": -(k - 1),
        "S": S,
        "R": R,
        "c2_value": c2.value,
        "groups": groups_json,
        "value": pref * prod,
        "error": abs(pref) * perr,
    }


def moments_main(params, k_max, *, mc_outer=None, mc_inner=None,
                 method="auto", seed=0):
    """Moments m_1..m_k_max by the general partition expansion."""
    _check_cap(k_max, ROUTE_A_MAX, "the main moment expansion")
    mc = {"mc_outer": mc_outer, "mc_inner": mc_inner, "method": method,
          "seed": seed}
    c2 = c_degree(
        CoefficientRequest(params.activation, params.law, params.sigma_x,
                           Degree(2)),
        **mc,
    )
    group_sums = {}
    per_k = []
    for k in range(1, k_max + 1):
        pis = enumerate_noncrossing(k)
        needed = sorted({
            len(s) for pi in pis for s in w_pi_subsets(k, pi) if len(s) >= 2
        })
        for n in needed:
            if n not in group_sums:
                group_sums[n] = _group_sum(n, params, mc)
        terms = _pmap(
            lambda pi: _pi_term(k, pi, params, c2, group_sums), pis
        )
        per_k.append((terms,))
    return _finalize("route-A", params, k_max, per_k)


# ---------------------------------------------------------------------------
# route B: second-moment shortcut


def _group_sum_gauss(n, psi, th1, tau2):
    terms = []
    for mu in enumerate_noncrossing(n):
        s_mu, _ = partition_stats(mu, "W-cycle")
        wgt = psi ** (n - len(mu))
        terms.append({
            "mu": _blocks_json(mu),
            "kind": "closed",
            "psi_power": n - len(mu),
            "value": wgt * th1 ** s_mu * tau2 ** (n - s_mu),
            "error": 0.0,
        })
    value = math.fsum(t["value"] for t in terms)
    return value, 0.0, tuple(terms)


def moments_gauss(params, k_max):
    """Moments under a light-tailed law, via the two scalar functionals.

    Valid only when the weight law has a finite second moment; heavier
    laws need the main expansion. All coefficients collapse to powers
    of th1 = E[f(Z)^2] and tau2 = s^2 (E[f'(Z)])^2 at the effective
    scale s, so there is no sampling error to propagate.
    """
    sigma_w = _gauss_sigma(params.law)
    if sigma_w is None:
        raise ValueError(
            "second-moment shortcut requires a light-tailed law"
        )
    _check_cap(k_max, ROUTE_A_MAX, "the second-moment shortcut")
    s = sigma_w * params.sigma_x
    th1 = theta1(params.activation, s)
    tau2 = s * s * theta2(params.activation, s)
    c2 = th1
    group_sums = {
        n: _group_sum_gauss(n, params.psi, th1, tau2)
        for n in range(2, k_max + 1)
    }
    per_k = []
    for k in range(1, k_max + 1):
        terms = []
        for pi in enumerate_noncrossing(k):
            S, R = partition_stats(pi, "V-cycle")
            groups = [s_ for s_ in w_pi_subsets(k, pi) if len(s_) >= 2]
            pref = params.phi ** (k - len(pi)) / params.psi ** (k - 1)
            val = c2 ** S
            groups_json = []
            for grp in groups:
                gval, _, gterms = group_sums[len(grp)]
                val *= gval
                groups_json.append({
                    "w_group": sorted(grp, key=lambda w: int(w[1:])),
                    "size": len(grp),
                    "value": gval,
                    "error": 0.0,
                    "mu_terms": list(gterms),
                })
            terms.append({
                "partition": _blocks_json(pi),
                "phi_power": k - len(pi),
                "psi_power": -(k - 1),
                "S": S,
                "R": R,
                "c2_value": c2,
                "groups": groups_json,
                "value": pref * val,
                "error": 0.0,
            })
        per_k.append((terms,))
    return _finalize("route-B", params, k_max, per_k)


# ---------------------------------------------------------------------------
# route C: quotient oracle


def moments_oracle(params, k_max, *, mc_outer=None, mc_inner=None,
                   method="auto", seed=0):
    """Moments by brute enumeration of contracted cycle graphs.

    Sums tau0 over every pair of set partitions of the cycle's V- and
    W-vertices, with no noncrossing restriction and no reuse of the
    main route's group structure. Quadratically slower, hence the low
    cap, but structurally independent.
    """
    _check_cap(k_max, ROUTE_C_MAX, "the quotient oracle")
    mc = {"mc_outer": mc_outer, "mc_inner": mc_inner, "method": method,
          "seed": seed}
    per_k = []
    for k in range(1, k_max + 1):
        base = cycle_graph(k)
        parts = enumerate_set_partitions(k)
        pairs = [(pi, mu) for pi in parts for mu in parts]

        def entry(pair):
            pi, mu = pair
            g = quotient(base, pi, mu)
            res = tau0_limit(g, params, **mc)
            return {
                "pi": _blocks_json(pi),
                "mu": _blocks_json(mu),
                "admissible": res.admissible,
                "value": res.value,
                "error": res.error,
            }

        per_k.append((_pmap(entry, pairs),))
    return _finalize("route-C", params, k_max, per_k)


# ---------------------------------------------------------------------------
# dispatch and validation


def moments(params, k_max, engine="auto", **kwargs):
    """Moment report by the requested engine.

    "auto" picks the second-moment shortcut when the law allows it and
    the main expansion otherwise. "main", "gauss" and "oracle" force a
    route; keyword arguments reach the sampling engines untouched.
    """
    if engine == "auto":
        engine = "gauss" if _gauss_sigma(params.law) is not None else "main"
    if engine == "gauss":
        if kwargs:
            raise ValueError(
                "the second-moment shortcut takes no sampling options"
            )
        return moments_gauss(params, k_max)
    if engine == "main":
        return moments_main(params, k_max, **kwargs)
    if engine == "oracle":
        return moments_oracle(params, k_max, **kwargs)
    raise ValueError(f"unknown engine {engine!r}")


def hankel_check(report, tol=1e-10):
    """Moment-sequence sanity: Hankel positivity within error bars.

    Prepends m_0 = 1, then requires the plain and once-shifted Hankel
    matrices to be positive semidefinite up to the summed error bars
    plus a small slack, and m_1 to respect the sup-norm bound when the
    activation is bounded.
    """
    k = len(report.moments)
    if k < 2:
        raise ValueError("hankel_check needs moments up to k >= 2")
    ms = (1.0,) + tuple(report.moments)
    es = (0.0,) + tuple(report.errors)
    sup = report.params_summary.get("sup_norm", math.inf)
    if math.isfinite(sup) and ms[1] > sup * sup + es[1] + tol:
        return False
    scale = max(1.0, max(abs(m) for m in ms))
    for shift in (0, 1):
        size = (k - shift) // 2 + 1
        idx = np.arange(size)
        H = np.array([[ms[i + j + shift] for j in idx] for i in idx])
        slack = sum(es[i + j + shift] for i in idx for j in idx)
        slack += tol * scale
        if np.linalg.eigvalsh(H).min() < -slack:
            return False
    return True
