"""Activation functions with Fourier transforms and Gaussian functionals.

Transforms use the convention f̂(t) = ∫ f(x) e^{-itx} dx, which for odd
real f reduces to -2i ∫_0^∞ f(x) sin(tx) dx, a purely imaginary odd
function. Closed forms are carried where known; otherwise an adaptive
Simpson rule on the truncated half-line does the work. arctan and tanh
are not integrable, so their transforms are taken against a Gaussian
soft cutoff f(x)·exp(-(x/X0)^2); the functionals theta1/theta2 and the
pointwise evaluator use the raw function.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

GH_NODES = 200


@lru_cache(maxsize=32)
def _gh(nodes):
    from scipy.special import roots_hermite

    x, w = roots_hermite(nodes)
    return x, w


def gauss_expect(fn, s, nodes=GH_NODES):
    """E[fn(Z)] for Z ~ N(0, s^2) by Gauss-Hermite quadrature.

    Node spacing near the origin scales like s/sqrt(n), while activation
    features live at unit scale, so the count grows with s^2 to keep the
    resolution of the s = 1 default.
    """
    if s <= 0:
        raise ValueError("scale must be positive")
    eff = min(20000, nodes * max(1, math.ceil(s * s)))
    x, w = _gh(eff)
    return float(np.dot(w, fn(math.sqrt(2.0) * s * x)) / math.sqrt(math.pi))


@dataclass(frozen=True)
class Activation:
    name: str
    f: object                 # vectorized real -> real
    f_hat: object              # t -> complex closed form, or None
    f_hat_kind: str            # "closed-form" | "numeric"
    smoothness_note: str
    sup_norm: float
    integrand: object          # integrable version used for the transform
    trunc_scale: float         # transform integration runs over |x| <= 12*this


def _simpson_panel(g, a, fa, fm, fb, b, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = g(lm), g(rm)
    left = (m - a) / 6 * (fa + 4 * flm + fm)
    right = (b - m) / 6 * (fm + 4 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15 * tol:
        return left + right + delta / 15, abs(delta) / 15
    lv, le = _simpson_panel(g, a, fa, flm, fm, m, left, tol / 2, depth - 1)
    rv, re = _simpson_panel(g, m, fm, frm, fb, b, right, tol / 2, depth - 1)
    return lv + rv, le + re


def _numeric_transform(act, t):
    if t == 0.0:
        return 0j
    upper = 12.0 * act.trunc_scale

    def g(x):
        return act.integrand(x) * math.sin(t * x)

    # seed panels at roughly the oscillation scale, then refine adaptively
    n0 = max(8, math.ceil(upper * abs(t) / 3.0))
    pts = np.linspace(0.0, upper, n0 + 1)
    total, errsum = 0.0, 0.0
    vals = [g(p) for p in pts]
    for i in range(n0):
        a, b = pts[i], pts[i + 1]
        fm = g(0.5 * (a + b))
        whole = (b - a) / 6 * (vals[i] + 4 * fm + vals[i + 1])
        v, e = _simpson_panel(g, a, vals[i], fm, vals[i + 1], b, whole,
                              1e-12, 28)
        total += v
        errsum += e
    if errsum > 1e-8:
        raise RuntimeError(
            f"transform quadrature did not converge (error estimate {errsum:.2e})"
        )
    return -2j * total


def fourier(a, t, method="auto"):
    """f̂(t). Closed form when the activation carries one, else quadrature."""
    if a.f_hat is None and a.f_hat_kind == "none":
        raise ValueError(f"{a.name} has no integrable Fourier transform (test-only)")
    if method == "auto" and a.f_hat is not None:
        return complex(a.f_hat(t))
    return _numeric_transform(a, float(t))


def theta1(a, s, nodes=GH_NODES):
    """E[f(Z)^2] for Z ~ N(0, s^2)."""
    return gauss_expect(lambda y: a.f(y) ** 2, s, nodes)


def theta2(a, s, nodes=GH_NODES):
    """(E[f'(Z)])^2 for Z ~ N(0, s^2), via Stein: E[f'(Z)] = E[Z f(Z)]/s^2."""
    m = gauss_expect(lambda y: y * a.f(y), s, nodes)
    return (m / (s * s)) ** 2


def _grid_max(fn, hi=12.0):
    xs = np.linspace(0, hi, 20001)
    return float(np.max(np.abs(fn(xs))))


def _make_gauss_odd():
    f = lambda x: x * np.exp(-np.square(x))
    fhat = lambda t: -1j * (math.sqrt(math.pi) / 2) * t * np.exp(-np.square(t) / 4)
    return Activation(
        "gauss_odd", f, fhat, "closed-form",
        "odd Schwartz function", math.exp(-0.5) / math.sqrt(2.0), f, 1.0,
    )


def _make_sin_gauss():
    f = lambda x: np.sin(x) * np.exp(-np.square(x))
    sp = math.sqrt(math.pi) / 2

    def fhat(t):
        t = np.asarray(t, dtype=float)
        return -1j * sp * (np.exp(-np.square(t - 1) / 4) - np.exp(-np.square(t + 1) / 4))

    return Activation(
        "sin_gauss", f, fhat, "closed-form",
        "odd Schwartz function", _grid_max(f, 4.0), f, 1.0,
    )


def _make_soft_cutoff(name, raw, sup, cutoff):
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    integrand = lambda x: raw(x) * np.exp(-np.square(x / cutoff))
    note = (f"odd, bounded, not integrable; transform taken against a "
            f"Gaussian soft cutoff of width {cutoff}")
    # integration window must cover the cutoff envelope, not just unit scale
    return Activation(name, raw, None, "numeric", note, sup, integrand,
                      max(1.0, cutoff / 2.0))


def _make_identity():
    f = lambda x: np.asarray(x, dtype=float) + 0.0
    return Activation(
        "identity", f, None, "none",
        "test-only: unbounded, no integrable transform", math.inf, f, 1.0,
    )


def builtin(name, cutoff=8.0):
    """Look up an activation by name.

    Plain names: gauss_odd, sin_gauss, arctan, tanh, identity. Affine
    rescalings use the grammar "scaled:<base>:<amp>:<width>", meaning
    amp * f(x / width).
    """
    if name.startswith("scaled:"):
        parts = name.split(":")
        if len(parts) != 4:
            raise ValueError('scaled grammar is "scaled:<base>:<amp>:<width>"')
        base = builtin(parts[1], cutoff=cutoff)
        amp, width = float(parts[2]), float(parts[3])
        if amp < 0 or width <= 0:
            raise ValueError("amp must be nonnegative and width positive")
        f = lambda x: amp * base.f(np.asarray(x) / width)
        fhat = None
        if base.f_hat is not None:
            fhat = lambda t: amp * width * base.f_hat(width * t)
        integrand = lambda x: amp * base.integrand(np.asarray(x) / width)
        sup = amp * base.sup_norm if amp > 0 else 0.0
        return Activation(
            name, f, fhat, base.f_hat_kind, base.smoothness_note,
            sup, integrand, base.trunc_scale * width,
        )
    if name == "gauss_odd":
        return _make_gauss_odd()
    if name == "sin_gauss":
        return _make_sin_gauss()
    if name == "arctan":
        return _make_soft_cutoff("arctan", np.arctan, math.pi / 2, cutoff)
    if name == "tanh":
        return _make_soft_cutoff("tanh", np.tanh, 1.0, cutoff)
    if name == "identity":
        return _make_identity()
    raise ValueError(f"unknown activation {name!r}")


def fourier_l1(a, upper=None):
    """∫ |f̂(t)| dt, the bound-side norm; cached per call site if hot."""
    from scipy import integrate

    if a.f_hat is None and a.f_hat_kind == "none":
        raise ValueError(f"{a.name} has no integrable Fourier transform")
    if upper is None:
        upper = 40.0 * max(1.0, 1.0 / a.trunc_scale)
        if a.f_hat_kind == "numeric":
            upper = 40.0
    val, _ = integrate.quad(lambda t: abs(fourier(a, t)), 0.0, upper, limit=400)
    return 2.0 * val
