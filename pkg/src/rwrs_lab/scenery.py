"""Random scenery: lazy i.i.d. fields, truncation and recentering operators.

The scenery is never materialized: a site's value is a pure function of
(master seed, packed coordinate), evaluated through a stateless avalanche
hash feeding an inverse-CDF transform.  Truncation and recentering are thin
views over a base field, with the truncated mean computed analytically from
the declared law (never sampled).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

from .rng import hash_coords, pack_site, uniform_from_bits


class SceneryValidationError(ValueError):
    """Raised when a scenery law fails its moment requirements."""


@dataclass(frozen=True)
class Rademacher:
    """Uniform on {-1, +1}; mean 0, variance 1, bounded support."""

    name = "rademacher"
    bounded_by: float = 1.0

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return np.where(u < 0.5, -1.0, 1.0)

    def mean(self) -> float:
        return 0.0

    def variance(self) -> float:
        return 1.0

    def truncated_mean(self, level: float) -> float:
        # Both atoms survive or both are cut; either way the mean is 0.
        return 0.0

    def tail_prob(self, level: float) -> float:
        return 0.0 if level >= 1.0 else 1.0

    def a2_moment(self, chi: float) -> float:
        return 0.0  # log+ 1 = 0


@dataclass(frozen=True)
class StandardGaussian:
    name = "gaussian"
    bounded_by: None = None

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return ndtri(u)

    def mean(self) -> float:
        return 0.0

    def variance(self) -> float:
        return 1.0

    def truncated_mean(self, level: float) -> float:
        return 0.0  # symmetric law

    def tail_prob(self, level: float) -> float:
        return 2.0 * float(ndtr(-level))

    def a2_moment(self, chi: float) -> float:
        val, _ = quad(
            lambda x: x * x * math.log(x) ** chi
            * math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi),
            1.0, np.inf,
        )
        return 2.0 * val


@dataclass(frozen=True)
class ParetoTail:
    """Standardized two-sided Pareto-type law with tail exponent beta.

    The base variable Y has density beta * (1+y)^(-beta-1) weighted ``skew``
    on the right half-line and 1 - skew (mirrored) on the left; X is the
    affine standardization of Y to mean 0, variance 1.  Requires beta > 2 so
    the variance exists; all moments x^2 (log+ x)^chi are then finite.
    ``skew`` != 1/2 gives a non-zero truncated mean, which is what makes the
    recentering step non-trivial.
    """

    beta: float = 3.0
    skew: float = 0.5
    bounded_by: None = None

    def __post_init__(self):
        if self.beta <= 2.0:
            raise SceneryValidationError(
                f"pareto tail exponent beta={self.beta} <= 2: second moment "
                "(variance) diverges, violating the unit-variance requirement"
            )
        if not 0.0 < self.skew < 1.0:
            raise SceneryValidationError(f"skew must be in (0,1), got {self.skew}")

    @property
    def name(self) -> str:
        return f"pareto(beta={self.beta:g},skew={self.skew:g})"

    @cached_property
    def _params(self) -> tuple[float, float, float]:
        """(mu, scale, m2_side): affine standardization constants."""
        b, p = self.beta, self.skew
        m1 = 1.0 / (b - 1.0)
        m2 = b * (1.0 / (b - 2.0) - 2.0 / (b - 1.0) + 1.0 / b)
        mu = (2.0 * p - 1.0) * m1
        var = m2 - mu * mu
        return mu, math.sqrt(var), m2

    def _base_ppf(self, u: np.ndarray) -> np.ndarray:
        p = self.skew
        q = 1.0 - p
        left = u < q
        out = np.empty_like(u)
        out[left] = 1.0 - (u[left] / q) ** (-1.0 / self.beta)
        out[~left] = ((1.0 - u[~left]) / p) ** (-1.0 / self.beta) - 1.0
        return out

    def _base_cdf(self, y: float) -> float:
        p = self.skew
        q = 1.0 - p
        if y < 0.0:
            return q * (1.0 - y) ** (-self.beta)
        return q + p * (1.0 - (1.0 + y) ** (-self.beta))

    def _partial_a(self, y: float) -> float:
        """int_0^y beta*t*(1+t)^(-beta-1) dt for y >= 0, in closed form."""
        b = self.beta
        w = 1.0 + y
        return (-b * w ** (1.0 - b) / (b - 1.0) + w ** -b) + b / (b - 1.0) - 1.0

    def _base_partial_mean(self, a: float, b: float) -> float:
        """E[Y 1{a <= Y <= b}] from the one-sided antiderivative."""
        p = self.skew
        q = 1.0 - p

        def upper(y: float) -> float:  # E[Y 1{0 <= Y <= y}]
            return p * self._partial_a(y)

        def lower(y: float) -> float:  # E[Y 1{y <= Y < 0}], y <= 0
            return -q * self._partial_a(-y)

        if a >= 0.0:
            return upper(b) - upper(a)
        if b <= 0.0:
            return lower(a) - lower(b)
        return lower(a) + upper(b)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        mu, s, _ = self._params
        return (self._base_ppf(np.asarray(u)) - mu) / s

    def pdf(self, x: np.ndarray) -> np.ndarray:
        mu, s, _ = self._params
        y = s * np.asarray(x, dtype=np.float64) + mu
        b, p = self.beta, self.skew
        right = p * b * (1.0 + np.maximum(y, 0.0)) ** (-b - 1.0)
        left = (1.0 - p) * b * (1.0 - np.minimum(y, 0.0)) ** (-b - 1.0)
        return s * np.where(y >= 0.0, right, left)

    def mean(self) -> float:
        return 0.0

    def variance(self) -> float:
        return 1.0

    def truncated_mean(self, level: float) -> float:
        """E[X 1{|X| <= level}] in closed form via base partial moments."""
        mu, s, _ = self._params
        a, b = mu - s * level, mu + s * level
        mass = self._base_cdf(b) - self._base_cdf(a)
        return (self._base_partial_mean(a, b) - mu * mass) / s

    def tail_prob(self, level: float) -> float:
        mu, s, _ = self._params
        a, b = mu - s * level, mu + s * level
        return 1.0 - (self._base_cdf(b) - self._base_cdf(a))

    def a2_moment(self, chi: float) -> float:
        def integrand(x: float) -> float:
            return x * x * math.log(abs(x)) ** chi * float(self.pdf(np.asarray([x]))[0])

        hi, _ = quad(integrand, 1.0, np.inf, limit=200)
        lo, _ = quad(integrand, -np.inf, -1.0, limit=200)
        return hi + lo


@dataclass(frozen=True)
class Constant:
    """Degenerate scenery (diagnostic only; fails the unit-variance audit)."""

    value: float = 0.0
    bounded_by: float | None = None

    @property
    def name(self) -> str:
        return f"constant({self.value:g})"

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return np.full_like(np.asarray(u, dtype=np.float64), self.value)

    def mean(self) -> float:
        return self.value

    def variance(self) -> float:
        return 0.0

    def truncated_mean(self, level: float) -> float:
        return self.value if abs(self.value) <= level else 0.0

    def tail_prob(self, level: float) -> float:
        return 0.0 if abs(self.value) <= level else 1.0

    def a2_moment(self, chi: float) -> float:
        v = abs(self.value)
        return v * v * max(0.0, math.log(v)) ** chi if v > 0 else 0.0


DISTRIBUTIONS = {
    "rademacher": Rademacher,
    "gaussian": StandardGaussian,
    "pareto": ParetoTail,
}


@dataclass(frozen=True)
class ScenerySpec:
    """Scenery law plus the integrability exponent chi and the field seed."""

    distribution: object
    chi: float = 1.0
    master_seed: int = 0

    def __post_init__(self):
        if self.chi <= 0.0:
            raise SceneryValidationError(f"chi must be positive, got {self.chi}")


@dataclass
class MomentAudit:
    """Outcome of checking a scenery law against the moment requirements."""

    name: str
    mean: float
    variance: float
    chi: float
    a2_moment: float


def moment_audit(spec: ScenerySpec) -> MomentAudit:
    """Verify mean 0, variance 1 and finiteness of E[xi^2 (log+ xi)^chi].

    Raises SceneryValidationError naming the offending moment.
    """
    law = spec.distribution
    m, v = law.mean(), law.variance()
    if abs(m) > 1e-9:
        raise SceneryValidationError(f"{law.name}: mean is {m:g}, required 0")
    if abs(v - 1.0) > 1e-9:
        raise SceneryValidationError(f"{law.name}: variance is {v:g}, required 1")
    a2 = law.a2_moment(spec.chi)
    if not math.isfinite(a2):
        raise SceneryValidationError(
            f"{law.name}: moment E[x^2 (log+ x)^{spec.chi:g}] diverges"
        )
    return MomentAudit(law.name, m, v, spec.chi, a2)


class QuenchedField:
    """Deterministic scenery view: eval(x) is pure in (master_seed, x)."""

    def __init__(self, spec: ScenerySpec):
        self.spec = spec

    @property
    def law(self):
        return self.spec.distribution

    @property
    def master_seed(self) -> int:
        return self.spec.master_seed

    def eval_packed(self, packed: np.ndarray) -> np.ndarray:
        bits = hash_coords(self.spec.master_seed, packed)
        return self.spec.distribution.ppf(uniform_from_bits(bits))

    def eval(self, site) -> float:
        key = np.asarray([pack_site(site)], dtype=np.uint64)
        return float(self.eval_packed(key)[0])


class TableField:
    """Explicit site -> value map, zero elsewhere (tests and diagnostics)."""

    law = None

    def __init__(self, values: dict):
        self._table = {np.uint64(pack_site(site)): float(v) for site, v in values.items()}

    def eval_packed(self, packed: np.ndarray) -> np.ndarray:
        out = np.zeros(len(packed))
        for i, key in enumerate(packed):
            out[i] = self._table.get(np.uint64(key), 0.0)
        return out

    def eval(self, site) -> float:
        return float(self._table.get(np.uint64(pack_site(site)), 0.0))


class OverrideField:
    """View of a base field with one site's value replaced (coupling device)."""

    def __init__(self, base, site, value: float):
        self.base = base
        self.site_key = np.uint64(pack_site(site))
        self.value = float(value)

    @property
    def law(self):
        return self.base.law

    def eval_packed(self, packed: np.ndarray) -> np.ndarray:
        vals = self.base.eval_packed(packed)
        return np.where(packed == self.site_key, self.value, vals)

    def eval(self, site) -> float:
        if np.uint64(pack_site(site)) == self.site_key:
            return self.value
        return self.base.eval(site)


def resample_site(field, site, donor_field) -> OverrideField:
    """Couple two sceneries: copy of `field` with `site` drawn from `donor_field`."""
    return OverrideField(field, site, donor_field.eval(site))


class TruncatedField:
    """xi_n(x) = xi(x) 1{|xi(x)| <= level}."""

    def __init__(self, base, level: float):
        self.base = base
        self.level = float(level)

    @property
    def law(self):
        return self.base.law

    def eval_packed(self, packed: np.ndarray) -> np.ndarray:
        vals = self.base.eval_packed(packed)
        return np.where(np.abs(vals) <= self.level, vals, 0.0)

    def eval(self, site) -> float:
        v = self.base.eval(site)
        return v if abs(v) <= self.level else 0.0


class RecenteredField:
    """xi_hat_n(x) = xi_n(x) - E[xi_n(0)], with the mean supplied analytically."""

    def __init__(self, base, level: float, offset: float):
        self.trunc = TruncatedField(base, level)
        self.level = float(level)
        self.offset = float(offset)

    @property
    def law(self):
        return self.trunc.law

    def eval_packed(self, packed: np.ndarray) -> np.ndarray:
        return self.trunc.eval_packed(packed) - self.offset

    def eval(self, site) -> float:
        return self.trunc.eval(site) - self.offset


@dataclass(frozen=True)
class TruncationSchedule:
    """Threshold schedule M_n = sqrt(n / (log n)^gamma), gamma = 1 + chi/2."""

    chi: float

    def __post_init__(self):
        if self.chi <= 0.0:
            raise ValueError(f"chi must be positive, got {self.chi}")

    @property
    def gamma(self) -> float:
        return 1.0 + self.chi / 2.0

    def threshold(self, n: int) -> float:
        if n < 2:
            raise ValueError(f"threshold defined for n >= 2, got {n}")
        return math.sqrt(n / math.log(n) ** self.gamma)


def truncate(field, n: int, schedule: TruncationSchedule) -> TruncatedField:
    """Zero out scenery values above the level M_n."""
    return TruncatedField(field, schedule.threshold(n))


def recenter(field, n: int, schedule: TruncationSchedule,
             mean_override: float | None = None) -> RecenteredField:
    """Truncate at M_n and subtract the analytic truncated mean."""
    level = schedule.threshold(n)
    if mean_override is not None:
        offset = float(mean_override)
    else:
        if field.law is None:
            raise ValueError("field has no declared law; pass mean_override")
        offset = field.law.truncated_mean(level)
    return RecenteredField(field, level, offset)
