"""Evaluation of the limit coefficients attached to degrees and families.

The degree coefficient C_d is an expectation of f^2 powers against a
symmetric stable marginal.  The family coefficient is a Fourier-side
integral with one variable per edge slot: the product of transform
values, damped by each W-vertex's averaged characteristic exponent,
weighted by one joint expectation per subset.

In the second-moment regime (alpha = 2, or Gaussian weights) the joint
expectations are polynomials in the edge variables by Wick contraction,
and the whole integral collapses to a finite sum of one-dimensional
Gaussian quadratures.  Heavy-tailed and sparse laws go through
importance-sampled Monte Carlo with per-coordinate proposals
proportional to |f_hat|.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, stats

from .activations import fourier_l1, gauss_expect, theta1
from .graphs import BipartiteMultigraph, SubsetFamily, induced_subgraph
from .weightlaws import (
    GaussianWeights,
    SparseWigner,
    Stable,
    beta_alpha,
    keyed_rng,
    stable_equivalent,
)

MC_OUTER = 4096
MC_INNER = 512

_EXPANSION_CAP = 200_000
_TABLE_POINTS = 16384


@dataclass(frozen=True)
class Degree:
    """Target C_d: one W-vertex with d/2 doubled edges."""

    d: int


@dataclass(frozen=True)
class Family:
    """Target C_{(W_k)}: a subset family over a bipartite multigraph."""

    graph: BipartiteMultigraph
    subsets: SubsetFamily


@dataclass(frozen=True)
class CoefficientRequest:
    activation: object
    law: object
    sigma_x: float
    target: object


@dataclass(frozen=True)
class CoefficientValue:
    value: float
    abs_error_estimate: float
    method: str
    samples_used: int
    imag_residual: float = 0.0
    imag_se: float = 0.0
    warning: str | None = None


_memo = {}
_tables = {}


def _nat(label):
    return (len(label), label)


def _target_key(target):
    if isinstance(target, Degree):
        return ("degree", target.d)
    if isinstance(target, Family):
        edges = tuple(sorted(target.graph.edges.items()))
        subs = tuple(
            sorted(tuple(sorted(s, key=_nat)) for s in target.subsets.subsets)
        )
        return ("family", edges, subs)
    raise ValueError(f"unknown coefficient target {target!r}")


def _digest(req):
    blob = repr((
        req.activation.name,
        req.activation.smoothness_note,
        repr(req.law),
        float(req.sigma_x),
        _target_key(req.target),
    ))
    return hashlib.sha256(blob.encode()).hexdigest()


def _try_stable(law):
    if isinstance(law, (Stable, GaussianWeights)):
        return stable_equivalent(law)
    return None


def _is_second_moment(law):
    st = _try_stable(law)
    return st is not None and st.alpha == 2.0


def _phi_pointwise(law, lam):
    # the characteristic exponent applied elementwise
    if isinstance(law, Stable):
        return -(law.sigma ** law.alpha) * np.abs(lam) ** law.alpha
    if isinstance(law, GaussianWeights):
        return -0.5 * law.sigma_w**2 * lam * lam
    if law.z_law == "rademacher":
        return law.q * (np.cos(lam) - 1.0)
    return law.q * (np.exp(-0.5 * np.square(law.sigma_z * lam)) - 1.0)


def _mean_phi(law, norms, sigma_x):
    # E[Phi(N(0, (sigma_x * norm)^2))], elementwise in the norms
    v = sigma_x * np.asarray(norms, dtype=float)
    st = _try_stable(law)
    if st is not None:
        return -(st.sigma**st.alpha) * beta_alpha(st.alpha) * v**st.alpha
    if law.z_law == "rademacher":
        damp = np.exp(-0.5 * v * v)
    else:
        damp = 1.0 / np.sqrt(1.0 + np.square(law.sigma_z * v))
    return law.q * (damp - 1.0)


class _Layout:
    """Flattened edge/slot view of a coefficient target."""

    def __init__(self, w_ids, v_ids, edges, subsets):
        self.w_ids = list(w_ids)
        self.v_ids = list(v_ids)
        self.edges = list(edges)  # (w, v, multiplicity)
        w_pos = {w: i for i, w in enumerate(self.w_ids)}
        v_pos = {v: i for i, v in enumerate(self.v_ids)}
        self.edge_w = np.array([w_pos[w] for w, _, _ in edges], dtype=int)
        self.edge_v = np.array([v_pos[v] for _, v, _ in edges], dtype=int)
        self.mult = np.array([m for _, _, m in edges], dtype=int)
        self.slots = int(self.mult.sum())
        self.offsets = np.concatenate(([0], np.cumsum(self.mult)[:-1]))
        self.subsets = [tuple(sorted(w_pos[w] for w in s)) for s in subsets]
        self.neighbors = [[] for _ in self.w_ids]
        for i, (w, v, _) in enumerate(edges):
            self.neighbors[w_pos[w]].append((v_pos[v], i))


def _degree_layout(d):
    v_ids = [f"v{i}" for i in range(1, d // 2 + 1)]
    return _Layout(["w1"], v_ids, [("w1", v, 2) for v in v_ids], [])


def _family_layout(fam):
    union_w = sorted(set().union(*fam.subsets), key=_nat)
    g = induced_subgraph(fam.parent, union_w)
    edges = [(w, v, m) for (w, v), m in sorted(g.edges.items())]
    subsets = [tuple(sorted(s, key=_nat)) for s in fam.subsets]
    return _Layout(list(g.w_ids), list(g.v_ids), edges, subsets), g


# ---------------------------------------------------------------------------
# transform proposal tables

def _fhat_vals(act, ts):
    """f_hat on an array, batching the quadrature for numeric transforms."""
    ts = np.asarray(ts, dtype=float)
    if act.f_hat is not None:
        return np.asarray(act.f_hat(ts), dtype=complex)
    if act.f_hat_kind == "none":
        raise ValueError(f"activation {act.name!r} has no integrable transform")
    upper = 12.0 * act.trunc_scale
    n = 16384
    x = np.linspace(0.0, upper, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    fw = act.integrand(x) * (w * (x[1] - x[0]) / 3.0)
    flat = ts.ravel()
    res = np.empty(flat.size)
    for lo in range(0, flat.size, 128):
        tt = flat[lo:lo + 128]
        res[lo:lo + 128] = np.sin(np.outer(tt, x)) @ fw
    return (-2j * res).reshape(ts.shape)


def _find_upper(act):
    # smallest dyadic T whose tail carries < 1e-12 of the transform peak
    upper = 8.0 / max(act.trunc_scale, 0.25)
    for _ in range(24):
        mags = np.abs(_fhat_vals(act, np.linspace(0.0, upper, 257)))
        peak = mags.max()
        if peak == 0.0 or mags[-16:].max() < 1e-12 * peak:
            return upper
        upper *= 2.0
    raise RuntimeError(f"transform of {act.name!r} fails to decay")


def _proposal(act):
    key = (act.name, act.smoothness_note)
    tab = _tables.get(key)
    if tab is None:
        ts = np.linspace(0.0, _find_upper(act), _TABLE_POINTS + 1)
        vals = _fhat_vals(act, ts)
        hvals = -np.imag(vals)  # f_hat = -i h with h real and odd
        mag = np.abs(hvals)
        dt = ts[1] - ts[0]
        masses = 0.5 * (mag[1:] + mag[:-1]) * dt
        cdf = np.concatenate(([0.0], np.cumsum(masses)))
        dens = masses / dt
        tab = (ts, cdf, dens, float(cdf[-1]), hvals, act.f_hat is not None)
        _tables[key] = tab
    return tab


def _sample_slots(act, tab, rng, shape):
    """Draw slot variables from |f_hat| and return them with h/p weights."""
    ts, cdf, dens, norm, hvals, closed = tab
    u = rng.random(shape) * norm
    x = np.interp(u, cdf, ts)
    idx = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, dens.size - 1)
    p = dens[idx] / (2.0 * norm)  # exact density of the signed draw
    sign = rng.integers(0, 2, shape) * 2.0 - 1.0
    if closed:
        h = -np.imag(np.asarray(act.f_hat(x), dtype=complex))
    else:
        h = np.interp(x, ts, hvals)
    return x * sign, sign * h / p


# ---------------------------------------------------------------------------
# inner expectations over the data vectors

def _subset_matchings(lay, widx):
    """Pairings of two copies of each member, skipping decoupled pairs."""
    vsets = [frozenset(v for v, _ in lay.neighbors[w]) for w in widx]

    def ok(a, b):
        return a == b or bool(vsets[a] & vsets[b])

    n2 = 2 * len(widx)
    items = [t // 2 for t in range(n2)]
    out = []

    def rec(free, acc):
        if not free:
            out.append(tuple(acc))
            return
        i = free[0]
        for pos in range(1, len(free)):
            j = free[pos]
            if ok(items[i], items[j]):
                rec(free[1:pos] + free[pos + 1:], acc + [(items[i], items[j])])

    rec(tuple(range(n2)), [])
    return out


def _wick_numeric(bk, sigma_w, sigma_x, matchings):
    # E[prod Z_w] for quadratic exponents: sum over pairings of the Gram matrix
    gram = sigma_x**2 * np.einsum("nwv,nuv->nwu", bk, bk)
    out = np.zeros(bk.shape[0])
    for pairs in matchings:
        term = np.ones(bk.shape[0])
        for a, b in pairs:
            term = term * gram[:, a, b]
        out += term
    return (-0.5 * sigma_w**2) ** bk.shape[1] * out


def _inner_mc(bk, law, sigma_x, mc_inner, rng):
    n, _, nv = bk.shape
    out = np.empty(n)
    step = max(1, 2_000_000 // max(1, mc_inner * nv))
    for lo in range(0, n, step):
        b = bk[lo:lo + step]
        x = sigma_x * rng.standard_normal((b.shape[0], mc_inner, nv))
        z = _phi_pointwise(law, np.einsum("cwv,csv->csw", b, x))
        out[lo:lo + step] = z.prod(axis=2).mean(axis=1)
    return out


def _mc_value(act, law, sigma_x, lay, mc_outer, mc_inner, rng):
    """Importance-sampled slot integral.

    Per-coordinate phases are exactly -i times a sign, so for even total
    multiplicity the estimator is purely real; odd totals are screened
    out earlier by symmetry.
    """
    tab = _proposal(act)
    second = _is_second_moment(law)
    if second:
        sigma_w = stable_equivalent(law).sigma * math.sqrt(2.0)
        matchings = [_subset_matchings(lay, widx) for widx in lay.subsets]
    n_w, n_v = len(lay.w_ids), len(lay.v_ids)
    chunk = max(64, 8_000_000 // max(1, mc_inner * max(n_v, 1) * max(len(lay.subsets), 1)))
    pieces = []
    done = 0
    while done < mc_outer:
        n = min(chunk, mc_outer - done)
        gam, ratio = _sample_slots(act, tab, rng, (n, lay.slots))
        val = ratio.prod(axis=1)
        edge_sums = np.add.reduceat(gam, lay.offsets, axis=1)
        b = np.zeros((n, n_w, n_v))
        b[:, lay.edge_w, lay.edge_v] = edge_sums
        norms = np.sqrt(np.square(b).sum(axis=2))
        val = val * np.exp(_mean_phi(law, norms, sigma_x).sum(axis=1))
        for k, widx in enumerate(lay.subsets):
            bk = b[:, widx, :]
            if second:
                val = val * _wick_numeric(bk, sigma_w, sigma_x, matchings[k])
            else:
                val = val * _inner_mc(bk, law, sigma_x, mc_inner, rng)
        pieces.append(val)
        done += n
    samples = np.concatenate(pieces)
    scale = (-1.0) ** (lay.slots // 2) / (2.0 * math.pi) ** lay.slots
    mean = float(samples.mean()) * scale
    se = float(samples.std(ddof=1) / math.sqrt(samples.size)) * abs(scale)
    return mean, se


# ---------------------------------------------------------------------------
# closed form in the second-moment regime

class _ExpansionTooBig(Exception):
    pass


def _mono_mul(a, b):
    out = dict(a)
    for e, p in b:
        out[e] = out.get(e, 0) + p
    return tuple(sorted(out.items()))


def _pair_poly(lay, wa, wb, sigma_x):
    """E[L_a L_b] as a polynomial in the per-edge variables."""
    c = sigma_x**2
    terms = {}
    if wa == wb:
        for _, e in lay.neighbors[wa]:
            terms[((e, 2),)] = c
    else:
        other = {v: e for v, e in lay.neighbors[wb]}
        for v, ea in lay.neighbors[wa]:
            eb = other.get(v)
            if eb is not None:
                terms[tuple(sorted(((ea, 1), (eb, 1))))] = c
    return terms


def _wick_poly(lay, widx, sigma_x):
    items = [w for w in widx for _ in range(2)]

    def rec(free):
        if not free:
            return {(): 1.0}
        acc = {}
        i = free[0]
        for pos in range(1, len(free)):
            pp = _pair_poly(lay, items[i], items[free[pos]], sigma_x)
            if not pp:
                continue
            for m1, c1 in rec(free[1:pos] + free[pos + 1:]).items():
                for m2, c2 in pp.items():
                    m = _mono_mul(m1, m2)
                    acc[m] = acc.get(m, 0.0) + c1 * c2
            if len(acc) > _EXPANSION_CAP:
                raise _ExpansionTooBig
        return acc

    return rec(tuple(range(2 * len(widx))))


def _q_poly(n, s):
    # E[g^(n)(Y)] = E[g(Y) q_n(Y)] for Y ~ N(0, s^2), by parts
    q = Polynomial([1.0])
    y = Polynomial([0.0, 1.0])
    for _ in range(n):
        q = y * q * (1.0 / s**2) - q.deriv()
    return q


def _closed_family_value(act, law, sigma_x, lay):
    sigma_w = stable_equivalent(law).sigma * math.sqrt(2.0)
    s = sigma_w * sigma_x
    poly = {(): 1.0}
    for widx in lay.subsets:
        sub = _wick_poly(lay, widx, sigma_x)
        pref = (-0.5 * sigma_w**2) ** len(widx)
        nxt = {}
        for m1, c1 in poly.items():
            for m2, c2 in sub.items():
                m = _mono_mul(m1, m2)
                nxt[m] = nxt.get(m, 0.0) + c1 * c2 * pref
                if len(nxt) > _EXPANSION_CAP:
                    raise _ExpansionTooBig
        poly = nxt

    kcache = {}

    def contract(mult, power):
        key = (mult, power)
        if key not in kcache:
            if (mult + power) % 2:
                kcache[key] = 0j  # odd integrand in the Gaussian average
            else:
                q = _q_poly(power, s)
                val = gauss_expect(lambda y: act.f(y) ** mult * q(y), s)
                kcache[key] = (-1j) ** power * val
        return kcache[key]

    total = 0j
    total_abs = 0.0
    for mono, coeff in poly.items():
        powers = dict(mono)
        term = complex(coeff)
        for e in range(len(lay.edges)):
            term *= contract(int(lay.mult[e]), powers.get(e, 0))
            if term == 0:
                break
        total += term
        total_abs += abs(term)
    err = 1e-10 * total_abs + abs(total.imag)
    return total.real, err


# ---------------------------------------------------------------------------
# degree-target backends

def _stable_quadrature(act, st, sigma_x):
    scale = st.sigma * sigma_x * beta_alpha(st.alpha) ** (1.0 / st.alpha)
    dist = stats.levy_stable(st.alpha, 0.0, loc=0.0, scale=scale)
    val, err = integrate.quad(
        lambda x: float(act.f(x)) ** 2 * dist.pdf(x), -np.inf, np.inf, limit=300
    )
    return val, err


def _positive_stable(rho, size, rng):
    # Laplace transform exp(-u^rho), 0 < rho < 1
    u = rng.uniform(0.0, math.pi, size)
    e = rng.exponential(1.0, size)
    num = np.sin(rho * u) ** rho * np.sin((1.0 - rho) * u) ** (1.0 - rho)
    a = (num / np.sin(u)) ** (1.0 / (1.0 - rho))
    return (a / e) ** ((1.0 - rho) / rho)


def _isotropic_degree_mc(act, st, sigma_x, d, mc_outer, rng):
    # S = sqrt(A) G has the isotropic heavy-tailed marginal in d/2 dims
    scale = st.sigma * sigma_x * beta_alpha(st.alpha) ** (1.0 / st.alpha)
    amp = _positive_stable(st.alpha / 2.0, mc_outer, rng)
    g = rng.standard_normal((mc_outer, d // 2))
    vals = np.prod(act.f(scale * np.sqrt(2.0 * amp)[:, None] * g) ** 2, axis=1)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(mc_outer))
    return mean, se


# ---------------------------------------------------------------------------
# public operations

def _mc_result(mean, se, samples, coeff_tol, note=None):
    warning = note
    if coeff_tol is not None and se > coeff_tol:
        msg = f"standard error {se:.3e} above requested tolerance {coeff_tol:.3e}"
        warning = msg if warning is None else f"{warning}; {msg}"
    return CoefficientValue(mean, se, "monte_carlo", samples, 0.0, 0.0, warning)


def _require_transform(act):
    if act.f_hat is None and act.f_hat_kind == "none":
        raise ValueError(
            f"activation {act.name!r} has no integrable transform; "
            "Monte Carlo evaluation is unavailable"
        )


def _resolve(mc_outer, mc_inner, method):
    if method not in ("auto", "mc"):
        raise ValueError('method must be "auto" or "mc"')
    return (
        MC_OUTER if mc_outer is None else int(mc_outer),
        MC_INNER if mc_inner is None else int(mc_inner),
    )


def c_degree(req, *, mc_outer=None, mc_inner=None, method="auto", seed=0,
             coeff_tol=None):
    """C_d for the degree target of ``req``.

    The backend is picked automatically: exact second-moment product,
    one-dimensional stable-density quadrature at d = 2, an isotropic
    heavy-tailed sampler above that, and generic Fourier-side Monte
    Carlo for sparse laws.  method="mc" forces the generic path.
    """
    target = req.target
    if not isinstance(target, Degree):
        raise ValueError("c_degree needs a Degree target")
    d = target.d
    if d < 2 or d % 2:
        raise ValueError("degree must be an even integer >= 2")
    mc_outer, mc_inner = _resolve(mc_outer, mc_inner, method)
    key = (_digest(req), method, mc_outer, mc_inner, seed, coeff_tol)
    hit = _memo.get(key)
    if hit is None:
        hit = _c_degree_impl(req, d, mc_outer, mc_inner, method, seed, coeff_tol)
        _memo[key] = hit  # concurrent duplicate insert writes the same value
    return hit


def _c_degree_impl(req, d, mc_outer, mc_inner, method, seed, coeff_tol):
    act, law, sigma_x = req.activation, req.law, float(req.sigma_x)
    if act.sup_norm == 0.0:
        return CoefficientValue(0.0, 0.0, "closed_form", 0)
    st = _try_stable(law)
    if method == "auto" and st is not None:
        if st.alpha == 2.0:
            value = theta1(act, st.sigma * math.sqrt(2.0) * sigma_x) ** (d // 2)
            return CoefficientValue(value, 1e-12 * (1.0 + abs(value)),
                                    "closed_form", 0)
        if not math.isfinite(act.sup_norm):
            raise ValueError(
                "heavy-tailed degree coefficients diverge for unbounded activations"
            )
        if d == 2:
            value, err = _stable_quadrature(act, st, sigma_x)
            return CoefficientValue(value, err + 1e-12, "quadrature", 0)
        rng = keyed_rng("coeff", _digest(req), "isotropic", seed)
        mean, se = _isotropic_degree_mc(act, st, sigma_x, d, mc_outer, rng)
        return _mc_result(mean, se, mc_outer, coeff_tol)
    _require_transform(act)
    rng = keyed_rng("coeff", _digest(req), "gamma-mc", seed)
    mean, se = _mc_value(act, law, sigma_x, _degree_layout(d), mc_outer,
                         mc_inner, rng)
    return _mc_result(mean, se, mc_outer, coeff_tol)


def c_family(req, *, mc_outer=None, mc_inner=None, method="auto", seed=0,
             coeff_tol=None):
    """C_{(W_k)} for the family target of ``req``.

    Second-moment laws contract exactly; everything else runs the
    importance-sampled integral, with a nested sampler for joint
    expectations that have no closed form.  method="mc" forces Monte
    Carlo even where the exact contraction applies.
    """
    target = req.target
    if not isinstance(target, Family):
        raise ValueError("c_family needs a Family target")
    fam = target.subsets
    if fam.parent != target.graph:
        raise ValueError("subset family does not belong to the target graph")
    for s in fam.subsets:
        if len(s) < 2:
            raise ValueError("family subsets must have size >= 2")
        if not induced_subgraph(fam.parent, s).is_connected():
            raise ValueError("every subset must induce a connected subgraph")
    lay, union = _family_layout(fam)
    if not union.is_connected():
        raise ValueError("the family union must induce a connected subgraph")
    mc_outer, mc_inner = _resolve(mc_outer, mc_inner, method)
    key = (_digest(req), method, mc_outer, mc_inner, seed, coeff_tol)
    hit = _memo.get(key)
    if hit is None:
        hit = _c_family_impl(req, lay, union, mc_outer, mc_inner, method, seed,
                             coeff_tol)
        _memo[key] = hit
    return hit


def _c_family_impl(req, lay, union, mc_outer, mc_inner, method, seed, coeff_tol):
    act, law, sigma_x = req.activation, req.law, float(req.sigma_x)
    if act.sup_norm == 0.0:
        return CoefficientValue(0.0, 0.0, "closed_form", 0)
    # an odd degree anywhere makes the integrand odd under a sign flip
    if any(union.degree(x) % 2 for x in union.w_ids + union.v_ids):
        return CoefficientValue(0.0, 0.0, "closed_form", 0)
    note = None
    if method == "auto" and _is_second_moment(law):
        try:
            value, err = _closed_family_value(act, law, sigma_x, lay)
            return CoefficientValue(value, err, "closed_form", 0)
        except _ExpansionTooBig:
            note = "exact contraction exceeded the expansion cap; used Monte Carlo"
    _require_transform(act)
    rng = keyed_rng("coeff", _digest(req), "gamma-mc", seed)
    mean, se = _mc_value(act, law, sigma_x, lay, mc_outer, mc_inner, rng)
    return _mc_result(mean, se, mc_outer, coeff_tol, note)


def bound_audit(req, value):
    """Advisory envelope check on a coefficient's magnitude.

    The envelope integrates |f_hat| per slot and bounds each subset's
    joint expectation: products of (2q)-bounded exponents for sparse
    laws, moment interpolation plus the exponential damping for stable
    ones.  Values violating the envelope indicate an evaluation bug.
    """
    val = value.value if isinstance(value, CoefficientValue) else float(value)
    act = req.activation
    if act.sup_norm == 0.0:
        return abs(val) <= 1e-12
    if act.f_hat is None and act.f_hat_kind == "none":
        return True  # no transform norm to calibrate against
    unit = fourier_l1(act) / (2.0 * math.pi)
    target = req.target
    if isinstance(target, Degree):
        return abs(val) <= unit**target.d + 1e-12

    subsets = target.subsets.subsets
    slots = induced_subgraph(
        target.graph, frozenset().union(*subsets)
    ).total_edges()
    law = req.law
    if isinstance(law, SparseWigner):
        factor = math.prod((2.0 * law.q) ** len(s) for s in subsets)
    else:
        st = stable_equivalent(law)
        repeats = Counter(w for s in subsets for w in s)
        factor = 1.0
        for s in subsets:
            factor *= beta_alpha(st.alpha * len(s))
            for w in s:
                factor *= repeats[w] / (beta_alpha(st.alpha) * math.e)
    return abs(val) <= unit**slots * factor + 1e-12
