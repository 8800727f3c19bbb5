"""Weight ensembles: characteristic exponents and finite-size samplers.

Three families share one interface. Heavy-tailed entries use the
symmetric alpha-stable convention E[e^{iλA}] = e^{-σ^α|λ|^α}; sparse
entries are Bernoulli(q/n) masks times a symmetric sign or Gaussian
variable; Gaussian entries use the variance convention Φ = -σ_w²λ²/2.
The two Gaussian conventions are bridged once, in stable_equivalent.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .activations import gauss_expect


@dataclass(frozen=True)
class Stable:
    alpha: float
    sigma: float

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class SparseWigner:
    q: float
    z_law: str = "rademacher"
    sigma_z: float = 1.0

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.z_law not in ("rademacher", "gaussian"):
            raise ValueError("z_law must be 'rademacher' or 'gaussian'")
        if self.sigma_z <= 0:
            raise ValueError("sigma_z must be positive")


@dataclass(frozen=True)
class GaussianWeights:
    sigma_w: float

    def __post_init__(self):
        if self.sigma_w <= 0:
            raise ValueError("sigma_w must be positive")


def _z_char(law, lam):
    # characteristic function of the sparse multiplier Z (vectorized)
    if law.z_law == "rademacher":
        return np.cos(lam)
    return np.exp(-0.5 * np.square(law.sigma_z * lam))


def phi(law, lam):
    """Limiting characteristic exponent Φ(λ)."""
    if isinstance(law, Stable):
        return -law.sigma ** law.alpha * abs(lam) ** law.alpha
    if isinstance(law, SparseWigner):
        return float(law.q * (_z_char(law, lam) - 1.0))
    if isinstance(law, GaussianWeights):
        return -0.5 * law.sigma_w ** 2 * lam * lam
    raise TypeError(f"not a weight law: {law!r}")


def phi_n(law, lam, n):
    """Finite-n exponent n·log E[e^{iλW}]; equals Φ exactly except sparse."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(law, (Stable, GaussianWeights)):
        return phi(law, lam)
    if isinstance(law, SparseWigner):
        arg = 1.0 + (law.q / n) * (float(_z_char(law, lam)) - 1.0)
        if arg <= 0:
            raise ValueError(f"finite-n exponent undefined: log of {arg}")
        return n * math.log(arg)
    raise TypeError(f"not a weight law: {law!r}")


def beta_alpha(alpha):
    """E|G|^α for standard Gaussian G: 2^{α/2} Γ((α+1)/2)/√π."""
    return 2 ** (alpha / 2) * math.gamma((alpha + 1) / 2) / math.sqrt(math.pi)


def stable_equivalent(law):
    """Canonical bridge between the σ_w and stable-σ conventions."""
    if isinstance(law, Stable):
        return law
    if isinstance(law, GaussianWeights):
        return Stable(alpha=2.0, sigma=law.sigma_w / math.sqrt(2.0))
    raise ValueError(f"no stable equivalent for {law!r}")


def expected_phi_gaussian(law, a, sigma_x):
    """E_X[Φ(Σ a_v X_v)] with X_v iid N(0, σ_x²).

    Closed form for stable laws: -σ^α σ_x^α β_α (Σ a_v²)^{α/2}; the sparse
    exponent is averaged by quadrature over the Gaussian Σ a_v X_v.
    """
    a = np.asarray(a, dtype=float)
    ssq = float(a @ a)
    if ssq == 0.0:
        return 0.0
    if isinstance(law, GaussianWeights):
        law = stable_equivalent(law)
    if isinstance(law, Stable):
        al = law.alpha
        return (
            -(law.sigma ** al) * (sigma_x ** al) * beta_alpha(al) * ssq ** (al / 2)
        )
    if isinstance(law, SparseWigner):
        scale = sigma_x * math.sqrt(ssq)
        return gauss_expect(lambda y: law.q * (_z_char(law, y) - 1.0), scale)
    raise TypeError(f"not a weight law: {law!r}")


def keyed_rng(*parts):
    """Counter-based generator keyed by hashing the given identifiers.

    Streams for distinct (seed, trial, role) tuples are statistically
    independent and reproducible regardless of scheduling order.
    """
    canon = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(canon.encode("utf-8")).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_weights(law, p, n, rng):
    """A (p, n) matrix of i.i.d. entries in the finite-n normalization.

    Stable: Chambers-Mallows-Stuck variates scaled by σ n^{-1/α};
    sparse: Bernoulli(q/n) mask times Z, no further scaling;
    Gaussian: N(0, σ_w²/n).
    """
    if p < 1 or n < 1:
        raise ValueError("matrix dimensions must be positive")
    shape = (p, n)
    if isinstance(law, Stable):
        al = law.alpha
        u = (rng.random(shape) - 0.5) * math.pi
        e = rng.exponential(1.0, shape)
        x = (np.sin(al * u) / np.cos(u) ** (1 / al)) * (
            np.cos((1 - al) * u) / e
        ) ** ((1 - al) / al)
        return law.sigma * n ** (-1 / al) * x
    if isinstance(law, SparseWigner):
        mask = rng.random(shape) < law.q / n
        if law.z_law == "rademacher":
            z = rng.integers(0, 2, shape) * 2.0 - 1.0
        else:
            z = rng.normal(0.0, law.sigma_z, shape)
        return mask * z
    if isinstance(law, GaussianWeights):
        return rng.normal(0.0, law.sigma_w / math.sqrt(n), shape)
    raise TypeError(f"not a weight law: {law!r}")
