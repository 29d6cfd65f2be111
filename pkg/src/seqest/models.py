"""One-parameter distribution families keyed by their mean.

Each family supplies seeded i.i.d. sampling, closed-form moments, the exact
distribution of the sample mean, and the cumulant of the centered variable
``psi(s, mu) = ln E[exp(s (X - mu))]``.  The ``opaque`` family exposes only a
seeded sampler plus its true mean and variance for scoring; estimators never
read those, which is what the distribution-free stopping rules require.

Exact sample-mean tails use the regularized incomplete beta/gamma functions:
a normal approximation here would corrupt the very stopping rules under test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy import special

from .errors import DomainError, UnsupportedOperationError

FAMILIES = ("bernoulli", "poisson", "exponential", "normal", "opaque")

# E|Z-1|^3 for Z ~ Exp(1) and E[Z^3 |Z-2|^3] for the variance deviation.
_EXP_ABS3 = 12.0 / math.e - 2.0


def _exp_var_dev_cube_const() -> float:
    # E|(Z-1)^2 - 1|^3 = E[Z^3 |Z-2|^3], split at z=2 into polynomial pieces
    # integrated against e^{-z} via incomplete gamma functions.
    def lower(k: int) -> float:
        return math.factorial(k) * special.gammainc(k + 1, 2.0)

    def upper(k: int) -> float:
        return math.factorial(k) * special.gammaincc(k + 1, 2.0)

    i1 = 8 * lower(3) - 12 * lower(4) + 6 * lower(5) - lower(6)
    i2 = upper(6) - 6 * upper(5) + 12 * upper(4) - 8 * upper(3)
    return i1 + i2


def _normal_var_dev_cube_const() -> float:
    # E|Z^2 - 1|^3 for standard normal Z, split at |z| = 1; the even moments
    # over (0,1) and (1,inf) reduce to incomplete gamma at a = k + 1/2.
    def piece(k: int, tail: bool) -> float:
        a = k + 0.5
        frac = special.gammaincc(a, 0.5) if tail else special.gammainc(a, 0.5)
        return (2.0**k / (2.0 * math.sqrt(math.pi))) * math.gamma(a) * frac

    inner = piece(0, False) - 3 * piece(1, False) + 3 * piece(2, False) - piece(3, False)
    outer = piece(3, True) - 3 * piece(2, True) + 3 * piece(1, True) - piece(0, True)
    return 2.0 * (inner + outer)


_EXP_VAR_DEV_CUBE = _exp_var_dev_cube_const()
_NORMAL_ABS3 = 2.0 * math.sqrt(2.0 / math.pi)
_NORMAL_VAR_DEV_CUBE = _normal_var_dev_cube_const()


@dataclass(frozen=True)
class Moments:
    """Central moments used by the concentration-bound oracles."""

    variance: float       # V = E|X-mu|^2
    abs_third: float      # W = E|X-mu|^3
    be_ratio: float       # B = W / V^{3/2}
    var_dev_sq: float     # varpi = E|(X-mu)^2 - V|^2
    var_dev_cube: float   # V3 = E|(X-mu)^2 - V|^3


@dataclass(frozen=True)
class OpaqueSpec:
    """Uniform-mixture sampler with true mean/variance kept for scoring only."""

    weights: tuple[float, ...]
    bounds: tuple[tuple[float, float], ...]

    def true_mean(self) -> float:
        return sum(w * (a + b) / 2.0 for w, (a, b) in zip(self.weights, self.bounds))

    def true_variance(self) -> float:
        m = self.true_mean()
        ex2 = sum(
            w * (a * a + a * b + b * b) / 3.0
            for w, (a, b) in zip(self.weights, self.bounds)
        )
        return ex2 - m * m


@dataclass(frozen=True)
class MeanModel:
    """A distribution family on an open mean domain.

    ``monotone`` records whether Pr{Y_n <= z} is non-increasing in the mean,
    which is what the stopping-distribution risk bound requires; it holds
    for every built-in parametric family here (monotone likelihood ratio in
    the sample mean).
    """

    family: str
    mean_domain: tuple[float, float]
    monotone: bool = True
    sigma2: float = 1.0
    opaque: Optional[OpaqueSpec] = None
    fixed_mean: Optional[float] = None

    def contains_mean(self, mu: float) -> bool:
        lo, hi = self.mean_domain
        return lo < mu < hi

    def require_mean(self, mu: float) -> None:
        if not self.contains_mean(mu):
            raise DomainError(
                f"mu={mu} outside {self.family} mean domain {self.mean_domain}"
            )
        if self.fixed_mean is not None and mu != self.fixed_mean:
            raise DomainError(
                f"opaque model has fixed mean {self.fixed_mean}, got {mu}"
            )


def bernoulli_model() -> MeanModel:
    return MeanModel("bernoulli", (0.0, 1.0))


def poisson_model() -> MeanModel:
    return MeanModel("poisson", (0.0, math.inf))


def exponential_model() -> MeanModel:
    return MeanModel("exponential", (0.0, math.inf))


def normal_model(sigma2: float = 1.0) -> MeanModel:
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    return MeanModel("normal", (-math.inf, math.inf), sigma2=sigma2)


def opaque_uniform_mixture(
    weights: Iterable[float] = (0.5, 0.5),
    bounds: Iterable[tuple[float, float]] = ((0.0, 0.2), (0.2, 0.8)),
) -> MeanModel:
    spec = OpaqueSpec(tuple(float(w) for w in weights),
                      tuple((float(a), float(b)) for a, b in bounds))
    if abs(sum(spec.weights) - 1.0) > 1e-12 or any(w < 0 for w in spec.weights):
        raise DomainError("mixture weights must be nonnegative and sum to 1")
    if any(b <= a for a, b in spec.bounds):
        raise DomainError("mixture component bounds must satisfy a < b")
    return MeanModel(
        "opaque",
        (-math.inf, math.inf),
        monotone=False,
        opaque=spec,
        fixed_mean=spec.true_mean(),
    )


def model_from_config(family: str, mu: float | None = None,
                      sigma2: float = 1.0, opaque_kind: str = "uniform_mixture") -> MeanModel:
    """Build a model from config keys model.family / model.sigma2 / model.opaque.kind."""
    if family == "bernoulli":
        return bernoulli_model()
    if family == "poisson":
        return poisson_model()
    if family == "exponential":
        return exponential_model()
    if family == "normal":
        return normal_model(sigma2)
    if family == "opaque":
        if opaque_kind != "uniform_mixture":
            raise DomainError(f"unknown opaque preset {opaque_kind!r}")
        return opaque_uniform_mixture()
    raise DomainError(f"unknown model family {family!r}")


def true_params(model: MeanModel, mu: float) -> tuple[float, float]:
    """(mean, variance) used for scoring and predictions in the harness."""
    if model.family == "opaque":
        return model.opaque.true_mean(), model.opaque.true_variance()
    model.require_mean(mu)
    return mu, variance(model, mu)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def draw(model: MeanModel, mu: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized i.i.d. draws; the bit-stream consumption per family is fixed."""
    fam = model.family
    if fam == "bernoulli":
        return (rng.random(size) < mu).astype(np.float64)
    if fam == "poisson":
        return rng.poisson(mu, size).astype(np.float64)
    if fam == "exponential":
        return rng.exponential(mu, size)
    if fam == "normal":
        return rng.normal(mu, math.sqrt(model.sigma2), size)
    if fam == "opaque":
        spec = model.opaque
        comp = rng.random(size)
        us = rng.random(size)
        out = np.empty(size)
        edges = np.cumsum(spec.weights)
        prev = 0.0
        for w_edge, (a, b) in zip(edges, spec.bounds):
            mask = (comp >= prev) & (comp < w_edge)
            out[mask] = a + (b - a) * us[mask]
            prev = w_edge
        # guard the measure-zero comp == 1.0 edge
        out[comp >= edges[-1]] = spec.bounds[-1][0] + (
            spec.bounds[-1][1] - spec.bounds[-1][0]
        ) * us[comp >= edges[-1]]
        return out
    raise DomainError(f"unknown family {fam!r}")


def sample(model: MeanModel, mu: float, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws, deterministic given the seed."""
    model.require_mean(mu)
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return draw(model, mu, rng, n)


class ModelStream:
    """Sequential sample source with fixed-size block prefetch.

    Values are served in stream order, so a run that consumes a prefix sees
    exactly the same data regardless of how far it reads.  Deterministic
    given (model, mu, seed).
    """

    __slots__ = ("model", "mu", "_rng", "_block", "_buf", "_pos", "count")

    def __init__(self, model: MeanModel, mu: float, seed: int, block: int = 1024):
        model.require_mean(mu)
        self.model = model
        self.mu = mu
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._block = block
        self._buf: list[float] = []
        self._pos = 0
        self.count = 0

    def _refill(self) -> None:
        self._buf = draw(self.model, self.mu, self._rng, self._block).tolist()
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            self._refill()
        x = self._buf[self._pos]
        self._pos += 1
        self.count += 1
        return x

    def take(self, k: int) -> list[float]:
        out = []
        while len(out) < k:
            if self._pos >= len(self._buf):
                self._refill()
            grab = min(k - len(out), len(self._buf) - self._pos)
            out.extend(self._buf[self._pos:self._pos + grab])
            self._pos += grab
        self.count += k
        return out


class ArrayStream:
    """Replay a fixed data vector; raises when exhausted (test helper)."""

    __slots__ = ("_data", "_pos", "count")

    def __init__(self, data):
        self._data = [float(x) for x in data]
        self._pos = 0
        self.count = 0

    def next(self) -> float:
        if self._pos >= len(self._data):
            raise IndexError("ArrayStream exhausted")
        x = self._data[self._pos]
        self._pos += 1
        self.count += 1
        return x

    def take(self, k: int) -> list[float]:
        if self._pos + k > len(self._data):
            raise IndexError("ArrayStream exhausted")
        out = self._data[self._pos:self._pos + k]
        self._pos += k
        self.count += k
        return out


# ---------------------------------------------------------------------------
# Accumulated sample statistics
# ---------------------------------------------------------------------------

@dataclass
class SampleState:
    """Running count, sum, and sum of squares of the observations."""

    n: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        self.total += x
        self.total_sq += x * x

    def extend(self, xs) -> None:
        arr = np.asarray(xs, dtype=np.float64)
        self.n += int(arr.size)
        self.total += float(arr.sum())
        self.total_sq += float(arr @ arr)

    def merge(self, other: "SampleState") -> "SampleState":
        return SampleState(
            self.n + other.n,
            self.total + other.total,
            self.total_sq + other.total_sq,
        )

    @classmethod
    def from_data(cls, xs) -> "SampleState":
        arr = np.asarray(xs, dtype=np.float64)
        return cls(int(arr.size), float(arr.sum()), float((arr * arr).sum()))

    @property
    def mean(self) -> float:
        if self.n == 0:
            raise DomainError("mean of empty state")
        return self.total / self.n

    @property
    def var(self) -> float:
        """V_n, the uncorrected sample variance; clamped at 0."""
        if self.n == 0:
            raise DomainError("variance of empty state")
        m = self.total / self.n
        return max(0.0, self.total_sq / self.n - m * m)


# ---------------------------------------------------------------------------
# Moments and cumulants
# ---------------------------------------------------------------------------

def variance(model: MeanModel, mu: float) -> float:
    """The variance function V(mu); positive and continuous on the domain."""
    model.require_mean(mu)
    fam = model.family
    if fam == "bernoulli":
        return mu * (1.0 - mu)
    if fam == "poisson":
        return mu
    if fam == "exponential":
        return mu * mu
    if fam == "normal":
        return model.sigma2
    if fam == "opaque":
        return model.opaque.true_variance()
    raise DomainError(f"unknown family {fam!r}")


def _poisson_abs_moment_sums(mu: float) -> tuple[float, float]:
    # E|X-mu|^3 and E|(X-mu)^2 - mu|^3 by exact summation; the Poisson tail
    # beyond mu + 40*sqrt(mu) + 60 is below 1e-18 of the total.
    kmax = int(mu + 40.0 * math.sqrt(mu) + 60.0)
    w = 0.0
    v3 = 0.0
    log_mu = math.log(mu)
    for k in range(kmax + 1):
        p = math.exp(k * log_mu - mu - math.lgamma(k + 1))
        d = k - mu
        w += abs(d) ** 3 * p
        v3 += abs(d * d - mu) ** 3 * p
    return w, v3


def moments(model: MeanModel, mu: float) -> Moments:
    """Closed-form central moments (V, W, B, varpi, V3) for the family."""
    model.require_mean(mu)
    fam = model.family
    if fam == "bernoulli":
        v = mu * (1.0 - mu)
        w = v * ((1.0 - mu) ** 2 + mu**2)
        varpi = v * (1.0 - 2.0 * mu) ** 2
        v3 = w * abs(1.0 - 2.0 * mu) ** 3
    elif fam == "poisson":
        v = mu
        w, v3 = _poisson_abs_moment_sums(mu)
        varpi = mu + 2.0 * mu * mu
    elif fam == "exponential":
        v = mu * mu
        w = _EXP_ABS3 * mu**3
        varpi = 8.0 * mu**4
        v3 = _EXP_VAR_DEV_CUBE * mu**6
    elif fam == "normal":
        s2 = model.sigma2
        v = s2
        w = _NORMAL_ABS3 * s2**1.5
        varpi = 2.0 * s2**2
        v3 = _NORMAL_VAR_DEV_CUBE * s2**3
    else:
        raise UnsupportedOperationError(
            "moments unavailable for the opaque family"
        )
    return Moments(v, w, w / v**1.5, varpi, v3)


def _snap_floor(x: float) -> int:
    return math.floor(x + 1e-9 * max(1.0, abs(x)))


def _snap_ceil(x: float) -> int:
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


def _lower_tail(model: MeanModel, n: int, z: float, theta: float) -> float:
    """Pr{Y_n <= z} under mean theta; 0 outside the mean domain."""
    fam = model.family
    if fam == "opaque":
        raise UnsupportedOperationError("mean_cdf unavailable for the opaque family")
    if not model.contains_mean(theta):
        return 0.0
    if math.isinf(z):
        return 1.0 if z > 0 else 0.0
    if fam == "bernoulli":
        k = _snap_floor(n * z)
        if k < 0:
            return 0.0
        if k >= n:
            return 1.0
        return float(special.betainc(n - k, k + 1, 1.0 - theta))
    if fam == "poisson":
        k = _snap_floor(n * z)
        return 0.0 if k < 0 else float(special.gammaincc(k + 1, n * theta))
    if fam == "exponential":
        return 0.0 if z <= 0.0 else float(special.gammainc(n, n * z / theta))
    if fam == "normal":
        return float(special.ndtr(math.sqrt(n / model.sigma2) * (z - theta)))
    raise DomainError(f"unknown family {fam!r}")


def _upper_tail(model: MeanModel, n: int, z: float, theta: float) -> float:
    """Pr{Y_n >= z} under mean theta; 0 outside the mean domain."""
    fam = model.family
    if fam == "opaque":
        raise UnsupportedOperationError("mean_cdf unavailable for the opaque family")
    if not model.contains_mean(theta):
        return 0.0
    if math.isinf(z):
        return 0.0 if z > 0 else 1.0
    if fam == "bernoulli":
        m = _snap_ceil(n * z)
        if m <= 0:
            return 1.0
        if m > n:
            return 0.0
        return float(special.betainc(m, n - m + 1, theta))
    if fam == "poisson":
        m = _snap_ceil(n * z)
        return 1.0 if m <= 0 else float(special.gammainc(m, n * theta))
    if fam == "exponential":
        return 1.0 if z <= 0.0 else float(special.gammaincc(n, n * z / theta))
    if fam == "normal":
        return float(special.ndtr(math.sqrt(n / model.sigma2) * (theta - z)))
    raise DomainError(f"unknown family {fam!r}")


def mean_cdf(model: MeanModel, n: int, z: float, theta: float) -> tuple[float, float]:
    """(F, G) = (Pr{Y_n <= z}, Pr{Y_n >= z}) under mean theta.

    Returns (0, 0) when theta is outside the mean domain.  F and G are
    evaluated independently, so F + G >= 1 at atoms of discrete families.
    Atom indices snap to integers within a 1e-9 relative tolerance so that
    z equal to an achievable sample mean lands on its atom.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return _lower_tail(model, n, z, theta), _upper_tail(model, n, z, theta)


def cumulant_domain(model: MeanModel, mu: float) -> tuple[float, float]:
    """Open interval (a(mu), b(mu)) on which psi(s, mu) is defined."""
    model.require_mean(mu)
    fam = model.family
    if fam == "exponential":
        return -math.inf, 1.0 / mu
    if fam in ("bernoulli", "poisson", "normal"):
        return -math.inf, math.inf
    raise UnsupportedOperationError("cumulant unavailable for the opaque family")


def cumulant(model: MeanModel, s: float, mu: float) -> float:
    """psi(s, mu) = ln E[exp(s (X - mu))]."""
    a, b = cumulant_domain(model, mu)
    if not a < s < b:
        raise DomainError(f"s={s} outside cumulant domain ({a}, {b})")
    fam = model.family
    if fam == "bernoulli":
        # log(1 - mu + mu e^s) rearranged to stay finite for large |s|
        if s > 0:
            return s * (1.0 - mu) + math.log(mu + (1.0 - mu) * math.exp(-s))
        return math.log(1.0 - mu + mu * math.exp(s)) - s * mu
    if fam == "poisson":
        if s > 700.0:
            return math.inf
        return mu * (math.exp(s) - 1.0) - s * mu
    if fam == "exponential":
        return -math.log(1.0 - s * mu) - s * mu
    if fam == "normal":
        return 0.5 * model.sigma2 * s * s
    raise DomainError(f"unknown family {fam!r}")
