"""Finite-size sampling of the conjugate kernel spectrum.

Builds Y = f(WX)/sqrt(m) trial by trial, computes the eigenvalues of
M = YY^T with an in-house dense symmetric solver (Householder
tridiagonalization followed by implicit-shift QL), and aggregates
empirical moments, their spread across trials, and pooled histograms.

The solver audits itself on every call: five randomly chosen
eigenpairs are reconstructed by inverse iteration and checked against
M directly. numpy's own eigensolver is never used outside the test
suite.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .weightlaws import keyed_rng, sample_weights

__all__ = [
    "CapacityError",
    "ConvergenceError",
    "HistogramTable",
    "SimConfig",
    "SimReport",
    "SpectrumSample",
    "build_features",
    "features_from",
    "gram_eigenvalues",
    "histogram",
    "manifest_json",
    "moments_csv",
    "run_trials",
]

_EPS = float(np.finfo(float).eps)
_PANEL = 256


class CapacityError(ValueError):
    """Problem size beyond what the dense pipeline is willing to do."""


class ConvergenceError(RuntimeError):
    """Eigensolver failed to converge or failed its residual audit."""


@dataclass(frozen=True)
class SimConfig:
    n: int
    m: int
    p: int
    law: object
    activation: object
    sigma_x: float
    trials: int
    seed: int
    histogram_bins: int = 64
    k_max: int = 4
    dense_cap: int = 2048

    def __post_init__(self):
        for name in ("n", "m", "p", "trials", "histogram_bins", "k_max"):
            val = getattr(self, name)
            if not isinstance(val, int) or val < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if not (math.isfinite(self.sigma_x) and self.sigma_x > 0):
            raise ValueError("sigma_x must be positive and finite")
        if self.p > self.dense_cap:
            raise CapacityError(
                f"p={self.p} exceeds the dense-eigensolve cap "
                f"{self.dense_cap}"
            )


@dataclass(frozen=True)
class SpectrumSample:
    eigenvalues: object          # sorted 1-d array, length p
    empirical_moments: tuple     # (1/p) sum lambda^k for k = 1..k_max
    trial_seed: int


@dataclass(frozen=True)
class HistogramTable:
    bin_lo: object
    bin_hi: object
    count: object
    density: object

    def to_csv(self):
        lines = ["bin_lo,bin_hi,count,density"]
        for lo, hi, c, d in zip(self.bin_lo, self.bin_hi,
                                self.count, self.density):
            lines.append(f"{lo:.17g},{hi:.17g},{int(c)},{d:.17g}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SimReport:
    config: SimConfig
    moment_stats: tuple          # per k: {k, mean, stderr, variance}
    histogram: HistogramTable
    samples: tuple


def _workers():
    try:
        return max(1, int(os.environ.get("CK_WORKERS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = _workers()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _kahan(values):
    total = 0.0
    comp = 0.0
    for x in values:
        y = x - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


# ---------------------------------------------------------------------------
# feature matrix


def features_from(W, X, activation):
    """Entrywise f(WX)/sqrt(m), with the product done in row panels."""
    W = np.asarray(W, dtype=float)
    X = np.asarray(X, dtype=float)
    if W.ndim != 2 or X.ndim != 2 or W.shape[1] != X.shape[0]:
        raise ValueError("incompatible matrix shapes")
    p, m = W.shape[0], X.shape[1]
    try:
        Y = np.empty((p, m), dtype=float)
        for lo in range(0, p, _PANEL):
            hi = min(lo + _PANEL, p)
            Y[lo:hi] = activation.f(W[lo:hi] @ X)
    except MemoryError as exc:
        raise CapacityError("feature matrix does not fit in memory") from exc
    Y /= math.sqrt(m)
    if not np.all(np.isfinite(Y)):
        raise FloatingPointError("feature matrix has non-finite entries")
    return Y


def _trial_stream(seed, trial):
    return keyed_rng("sim", seed, "trial", trial)


def _trial_seed(seed, trial):
    digest = hashlib.sha256(f"sim|{seed}|{trial}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def build_features(cfg, trial):
    """Feature matrix for one trial, deterministic in (seed, trial)."""
    rng = _trial_stream(cfg.seed, trial)
    try:
        W = sample_weights(cfg.law, cfg.p, cfg.n, rng)
        X = rng.normal(0.0, cfg.sigma_x, (cfg.n, cfg.m))
    except MemoryError as exc:
        raise CapacityError("trial matrices do not fit in memory") from exc
    return features_from(W, X, cfg.activation)


# ---------------------------------------------------------------------------
# dense symmetric eigensolver


def _tridiagonalize(M):
    """Householder reduction to tridiagonal form.

    Returns the diagonal, the subdiagonal, and the reflectors needed to
    map tridiagonal-basis vectors back to the original basis.
    """
    A = np.array(M, dtype=float, copy=True)
    n = A.shape[0]
    reflectors = []
    for k in range(n - 2):
        x = A[k + 1:, k]
        nx = math.sqrt(float(x @ x))
        if nx == 0.0:
            continue
        alpha = -math.copysign(nx, x[0]) if x[0] != 0.0 else -nx
        v = x.copy()
        v[0] -= alpha
        vsq = float(v @ v)
        if vsq == 0.0:
            continue
        beta = 2.0 / vsq
        B = A[k + 1:, k + 1:]
        w = beta * (B @ v)
        w -= (0.5 * beta * float(v @ w)) * v
        B -= np.outer(v, w)
        B -= np.outer(w, v)
        A[k + 1, k] = alpha
        A[k, k + 1] = alpha
        if k + 2 < n:
            A[k + 2:, k] = 0.0
            A[k, k + 2:] = 0.0
        reflectors.append((k, beta, v.copy()))
    d = np.diag(A).tolist()
    e = np.diag(A, -1).tolist()
    return d, e, reflectors


def _tql_eigenvalues(d, e, itmax=64):
    """Implicit-shift QL on a symmetric tridiagonal matrix.

    Plain scalar loops on lists: the rotation chain is a sequential
    recurrence, and list indexing beats array scalar access here.
    """
    n = len(d)
    d = list(d)
    e = list(e) + [0.0]
    hypot = math.hypot
    copysign = math.copysign
    for l in range(n):
        iters = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= _EPS * dd:
                    break
                m += 1
            if m == l:
                break
            iters += 1
            if iters > itmax:
                raise ConvergenceError(
                    f"QL sweep limit {itmax} hit at index {l}"
                )
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + copysign(r, g))
            s = 1.0
            c = 1.0
            acc = 0.0
            broke = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= acc
                    e[m] = 0.0
                    broke = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - acc
                r = (d[i] - g) * s + 2.0 * c * b
                acc = s * r
                d[i + 1] = g + acc
                g = c * r - b
            if not broke:
                d[l] -= acc
                e[l] = g
                e[m] = 0.0
    d.sort()
    return d


def _factor_shifted(d, e, lam):
    """LU factors of (T - lam I) with partial pivoting, tridiagonal T."""
    n = len(d)
    anorm = max(
        abs(d[i]) + (abs(e[i - 1]) if i else 0.0)
        + (abs(e[i]) if i < n - 1 else 0.0)
        for i in range(n)
    )
    tiny = _EPS * max(anorm, 1.0)
    u = [0.0] * n
    v = [0.0] * n
    w = [0.0] * n
    mult = [0.0] * max(0, n - 1)
    swap = [False] * max(0, n - 1)
    r1 = d[0] - lam
    r2 = e[0] if n > 1 else 0.0
    r3 = 0.0
    for i in range(n - 1):
        sub = e[i]
        dg = d[i + 1] - lam
        sup = e[i + 1] if i + 1 < n - 1 else 0.0
        if abs(sub) > abs(r1):
            swap[i] = True
            u[i], v[i], w[i] = sub, dg, sup
            fac = r1 / sub
            r1 = r2 - fac * dg
            r2 = r3 - fac * sup
        else:
            if abs(r1) < tiny:
                r1 = tiny
            u[i], v[i], w[i] = r1, r2, r3
            fac = sub / r1
            r1 = dg - fac * r2
            r2 = sup - fac * r3
        r3 = 0.0
        mult[i] = fac
    if abs(r1) < tiny:
        r1 = tiny
    u[n - 1] = r1
    return u, v, w, mult, swap


def _solve_factored(factors, rhs):
    u, v, w, mult, swap = factors
    n = len(u)
    y = list(rhs)
    for i in range(n - 1):
        if swap[i]:
            y[i], y[i + 1] = y[i + 1], y[i]
        y[i + 1] -= mult[i] * y[i]
    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        acc = y[i]
        if i + 1 < n:
            acc -= v[i] * x[i + 1]
        if i + 2 < n:
            acc -= w[i] * x[i + 2]
        x[i] = acc / u[i]
    return np.array(x)


def _back_transform(vec, reflectors):
    out = np.array(vec, dtype=float)
    for k, beta, u in reversed(reflectors):
        seg = out[k + 1:]
        seg -= (beta * float(u @ seg)) * u
    return out


def _audit_eigenpairs(M, d, e, reflectors, evals):
    norm_f = float(np.linalg.norm(M))
    if norm_f == 0.0:
        return
    p = len(evals)
    rng = np.random.default_rng(0x5EED)
    picks = rng.choice(p, size=min(5, p), replace=False)
    for j in sorted(int(i) for i in picks):
        lam = evals[j]
        factors = _factor_shifted(d, e, lam)
        vec = rng.normal(size=p)
        vec /= float(np.linalg.norm(vec))
        for _ in range(3):
            vec = _solve_factored(factors, vec)
            size = float(np.linalg.norm(vec))
            if not math.isfinite(size) or size == 0.0:
                vec = rng.normal(size=p)
                size = float(np.linalg.norm(vec))
            vec /= size
        full = _back_transform(vec, reflectors)
        resid = float(np.linalg.norm(M @ full - lam * full))
        if resid > 1e-8 * norm_f:
            raise ConvergenceError(
                f"eigenpair audit failed at index {j}: "
                f"residual {resid:.3e} > {1e-8 * norm_f:.3e}"
            )


def _sym_eigenvalues(M):
    p = M.shape[0]
    if p == 1:
        return np.array([float(M[0, 0])])
    d, e, reflectors = _tridiagonalize(M)
    evals = _tql_eigenvalues(d, e)
    _audit_eigenpairs(M, d, e, reflectors, evals)
    return np.array(evals)


def gram_eigenvalues(Y):
    """Sorted eigenvalues of YY^T by the in-house dense solver."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError("expected a matrix")
    if not np.all(np.isfinite(Y)):
        raise ValueError("matrix has non-finite entries")
    return _sym_eigenvalues(Y @ Y.T)


# ---------------------------------------------------------------------------
# trials and aggregation


def _make_sample(cfg, evals, trace, trial):
    top = float(evals[-1])
    floor = -1e-8 * max(abs(top), 1e-300)
    if float(evals[0]) < floor:
        raise RuntimeError(
            f"trial {trial}: eigenvalue {evals[0]} breaks positivity"
        )
    total = _kahan(evals.tolist())
    if abs(total - trace) > 1e-8 * max(abs(trace), 1e-300):
        raise RuntimeError(
            f"trial {trial}: eigenvalue sum {total} != trace {trace}"
        )
    arr = np.array(evals, dtype=float)
    arr.flags.writeable = False
    moms = tuple(float(np.mean(arr**k)) for k in range(1, cfg.k_max + 1))
    return SpectrumSample(
        eigenvalues=arr,
        empirical_moments=moms,
        trial_seed=_trial_seed(cfg.seed, trial),
    )


def _run_single(cfg, trial):
    Y = build_features(cfg, trial)
    M = Y @ Y.T
    evals = _sym_eigenvalues(M)
    trace = _kahan(np.diag(M).tolist())
    return _make_sample(cfg, evals, trace, trial)


def histogram(samples, bins):
    """Pooled equal-width histogram over [0, 1.05 * max eigenvalue]."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    evs = np.concatenate([np.asarray(s.eigenvalues) for s in samples])
    top = float(np.max(evs))
    hi = 1.05 * top if top > 0.0 else 1.0
    counts, edges = np.histogram(
        np.clip(evs, 0.0, None), bins=bins, range=(0.0, hi)
    )
    width = edges[1] - edges[0]
    density = counts / (evs.size * width)
    return HistogramTable(
        bin_lo=edges[:-1], bin_hi=edges[1:], count=counts, density=density
    )


def run_trials(cfg):
    """All trials, each on its own RNG stream, reduced in trial order."""
    samples = _pmap(lambda t: _run_single(cfg, t), range(cfg.trials))
    stats = []
    for k in range(1, cfg.k_max + 1):
        vals = np.array([s.empirical_moments[k - 1] for s in samples])
        mean = float(np.mean(vals))
        if cfg.trials > 1:
            var = float(np.var(vals, ddof=1))
            stderr = math.sqrt(var / cfg.trials)
        else:
            var = 0.0
            stderr = 0.0
        stats.append({"k": k, "mean": mean, "stderr": stderr,
                      "variance": var})
    return SimReport(
        config=cfg,
        moment_stats=tuple(stats),
        histogram=histogram(samples, cfg.histogram_bins),
        samples=tuple(samples),
    )


# ---------------------------------------------------------------------------
# outputs


def moments_csv(report, theory=None):
    """Moment table; theory columns filled from a moment report if given."""
    lines = ["k,mean,stderr,theory,theory_err,z_score"]
    for st in report.moment_stats:
        k = st["k"]
        if theory is not None and k <= len(theory.moments):
            tv = theory.moments[k - 1]
            te = theory.errors[k - 1]
            denom = math.hypot(st["stderr"], te)
            diff = st["mean"] - tv
            if diff == 0.0:
                z = 0.0
            elif denom > 0.0:
                z = diff / denom
            else:
                z = math.inf
            lines.append(
                f"{k},{st['mean']:.17g},{st['stderr']:.17g},"
                f"{tv:.17g},{te:.17g},{z:.17g}"
            )
        else:
            lines.append(f"{k},{st['mean']:.17g},{st['stderr']:.17g},,,")
    return "\n".join(lines) + "\n"


def manifest_json(cfg):
    doc = {
        "n": cfg.n,
        "m": cfg.m,
        "p": cfg.p,
        "law": repr(cfg.law),
        "activation": cfg.activation.name,
        "sigma_x": cfg.sigma_x,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "histogram_bins": cfg.histogram_bins,
        "k_max": cfg.k_max,
        "dense_cap": cfg.dense_cap,
    }
    return json.dumps(doc, sort_keys=True)
