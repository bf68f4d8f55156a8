"""Assembly of the accumulated-scenery process and its rescaled interpolation.

Z_k is the running sum of scenery values along the walk; the truncated and
recentered variants follow the threshold schedule.  The rescaled process is
the polygonal interpolation of Z_{floor(nt)} / sqrt(n log n), handled exactly
through its piecewise-linear structure (sup and integral come from vertices,
never from grid sampling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .rng import pack_site
from .scenery import TruncationSchedule, TruncatedField
from .walk import Trajectory

try:
    from numba import njit

    @njit(cache=True)
    def _kahan_cumsum(values):  # pragma: no cover - thin compiled kernel
        out = np.empty(len(values))
        total = 0.0
        comp = 0.0
        for i in range(len(values)):
            y = values[i] - comp
            t = total + y
            comp = (t - total) - y
            total = t
            out[i] = total
        return out

    def compensated_cumsum(values: np.ndarray) -> np.ndarray:
        """Kahan-compensated running sum (insurance for 2^20-term paths)."""
        return _kahan_cumsum(np.ascontiguousarray(values, dtype=np.float64))

except ImportError:  # pragma: no cover
    def compensated_cumsum(values: np.ndarray) -> np.ndarray:
        return np.cumsum(np.asarray(values, dtype=np.float64))


def compensated_sum(values: np.ndarray) -> float:
    return float(math.fsum(values)) if len(values) < 4096 else float(
        compensated_cumsum(values)[-1])


RAW = "raw"
TRUNCATED = "truncated"
RECENTERED = "recentered"


@dataclass(frozen=True)
class RwrsPath:
    """Accumulated-scenery values Z_0..Z_m (Z_0 = 0) for one trajectory."""

    values: np.ndarray
    horizon_n: int
    variant: str

    def __len__(self) -> int:
        return len(self.values)

    @property
    def last_index(self) -> int:
        return len(self.values) - 1


def accumulate(traj: Trajectory, field) -> RwrsPath:
    """Z_k = sum_{i<=k} xi(S_i); equals the site sum over local times."""
    vals = field.eval_packed(traj.packed[1:])
    z = np.empty(traj.n + 1)
    z[0] = 0.0
    z[1:] = compensated_cumsum(vals)
    return RwrsPath(z, traj.n, RAW)


def site_sum(traj: Trajectory, field, k: int | None = None) -> float:
    """Z_k recomputed as sum_x xi(x) N_k(x); cross-check for accumulate."""
    if k is None:
        k = traj.n
    sites, counts = np.unique(traj.packed[1:k + 1], return_counts=True)
    vals = field.eval_packed(sites)
    return float(math.fsum(vals * counts))


def truncated_accumulate(traj: Trajectory, field, n: int,
                         schedule: TruncationSchedule,
                         mean_override: float | None = None
                         ) -> tuple[RwrsPath, RwrsPath]:
    """Build (Z^(n), Z_hat^(n)) along the trajectory.

    The recentered path is formed as Z^(n)_k - k * m_n, which makes the drift
    identity exact by construction; m_n comes from the field's declared law
    unless overridden.
    """
    if n < 2:
        raise ValueError(f"truncation requires n >= 2, got {n}")
    level = schedule.threshold(n)
    vals = field.eval_packed(traj.packed[1:])
    tvals = np.where(np.abs(vals) <= level, vals, 0.0)
    zt = np.empty(traj.n + 1)
    zt[0] = 0.0
    zt[1:] = compensated_cumsum(tvals)
    if mean_override is not None:
        m_n = float(mean_override)
    else:
        if field.law is None:
            raise ValueError("field has no declared law; pass mean_override")
        m_n = field.law.truncated_mean(level)
    zhat = zt - m_n * np.arange(traj.n + 1, dtype=np.float64)
    return (RwrsPath(zt, n, TRUNCATED), RwrsPath(zhat, n, RECENTERED))


def scaling_norm(n: int) -> float:
    """sqrt(n log n), natural log; defined for n >= 2."""
    if n < 2:
        raise ValueError(f"scaling norm requires n >= 2, got {n}")
    return math.sqrt(n * math.log(n))


class InterpolatedProcess:
    """Polygonal interpolation of Z_{floor(nt)} / sqrt(n log n) on [0, T]."""

    def __init__(self, path: RwrsPath, n: int, T: float):
        need = math.floor(n * T) + 1
        if path.last_index < need:
            raise ValueError(
                f"path covers indices up to {path.last_index}, needs {need} "
                f"for n={n}, T={T}"
            )
        self.path = path
        self.n = n
        self.T = float(T)
        self.norm = scaling_norm(n)

    def value_at(self, t):
        """Process value at time(s) t in [0, T]."""
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < 0.0) or np.any(t_arr > self.T + 1e-12):
            raise ValueError("time outside [0, T]")
        nt = self.n * t_arr
        k = np.minimum(np.floor(nt).astype(np.int64), math.floor(self.n * self.T))
        frac = nt - k
        z = self.path.values
        out = (z[k] + frac * (z[k + 1] - z[k])) / self.norm
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    @cached_property
    def _vertices(self) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints (k/n for k <= floor(nT), then T) and values there."""
        kmax = math.floor(self.n * self.T)
        times = np.arange(kmax + 1, dtype=np.float64) / self.n
        vals = self.path.values[:kmax + 1] / self.norm
        if times[-1] < self.T - 1e-15:
            times = np.append(times, self.T)
            vals = np.append(vals, self.value_at(self.T))
        return times, vals

    def sup_abs(self) -> float:
        """Exact sup_{t<=T} |w_t|: a piecewise-linear function peaks at vertices."""
        _, vals = self._vertices
        return float(np.max(np.abs(vals)))

    def time_average(self) -> float:
        """Exact (1/T) int_0^T w_t dt by the trapezoid rule over segments."""
        times, vals = self._vertices
        total = float(np.sum((vals[1:] + vals[:-1]) * 0.5 * np.diff(times)))
        return total / self.T


def interpolate(path: RwrsPath, n: int, T: float) -> InterpolatedProcess:
    return InterpolatedProcess(path, n, T)


DEFAULT_CAP = 10.0


@dataclass(frozen=True)
class FunctionalSpec:
    """Bounded Lipschitz functional on C([0,T]) with declared (bound, L)."""

    id: str
    bound: float
    lipschitz: float


_CATALOG = {
    "endpoint_cos": FunctionalSpec("endpoint_cos", 1.0, 1.0),
    "capped_sup": FunctionalSpec("capped_sup", DEFAULT_CAP, 1.0),
    "clipped_mean": FunctionalSpec("clipped_mean", DEFAULT_CAP, 1.0),
}


def functional_catalog() -> tuple[str, ...]:
    return tuple(_CATALOG)


def functional_spec(fid: str) -> FunctionalSpec:
    if fid not in _CATALOG:
        raise KeyError(f"unknown functional id {fid!r}; known: {sorted(_CATALOG)}")
    return _CATALOG[fid]


def eval_functional(spec: FunctionalSpec | str, w: InterpolatedProcess) -> float:
    """Evaluate a catalog functional; sup/integral use the exact vertex form."""
    fid = spec if isinstance(spec, str) else spec.id
    if fid == "endpoint_cos":
        return math.cos(w.value_at(w.T))
    if fid == "capped_sup":
        return min(w.sup_abs(), DEFAULT_CAP)
    if fid == "clipped_mean":
        return float(np.clip(w.time_average(), -DEFAULT_CAP, DEFAULT_CAP))
    raise KeyError(f"unknown functional id {fid!r}; known: {sorted(_CATALOG)}")


def truncation_discrepancy(traj: Trajectory, field, n: int, T: float,
                           schedule: TruncationSchedule,
                           mean_override: float | None = None
                           ) -> tuple[bool, float]:
    """Compare Z with Z^(n) on [1, floor(nT)] and report the recentering drift.

    First component: True iff no site visited by time floor(nT) carries a
    value above M_n (equivalently Z == Z^(n) there).  Second: the exact
    deterministic sup_k k |m_n| / sqrt(n log n).
    """
    level = schedule.threshold(n)
    kmax = min(math.floor(n * T), traj.n)
    sites = np.unique(traj.packed[1:kmax + 1])
    vals = field.eval_packed(sites)
    untouched = bool(np.all(np.abs(vals) <= level))
    if mean_override is not None:
        m_n = float(mean_override)
    else:
        if field.law is None:
            raise ValueError("field has no declared law; pass mean_override")
        m_n = field.law.truncated_mean(level)
    drift = math.floor(n * T) * abs(m_n) / scaling_norm(n)
    return untouched, drift


def recentering_drift(n: int, T: float, m_n: float) -> float:
    """sup_{k <= floor(nT)} k |m_n| / sqrt(n log n), no trajectory needed."""
    return math.floor(n * T) * abs(m_n) / scaling_norm(n)


class SiteCouplingError(ValueError):
    """Raised when two coupled fields differ at more than the resampled site."""


def site_influence(traj: Trajectory, field, field_prime, site, n: int, T: float,
                   functional: FunctionalSpec | str,
                   schedule: TruncationSchedule,
                   mean_override: float | None = None) -> tuple[float, float]:
    """Effect of resampling one scenery site on a functional of the process.

    Rebuilds both truncated-recentered interpolations and returns
    (|F(w) - F(w')|, L * |xi_hat(x) - xi_hat'(x)| * N_{floor(nT)+1}(x) / norm).
    The first never exceeds the second: the paths differ only through the
    coupled site's visits, so their sup distance is exactly the bound's
    numerator.
    """
    spec = functional_spec(functional) if isinstance(functional, str) else functional
    kmax = math.floor(n * T) + 1
    if traj.n < kmax:
        raise ValueError(f"trajectory horizon {traj.n} < floor(nT)+1 = {kmax}")
    key = np.uint64(pack_site(site))
    visited = np.unique(traj.packed[1:kmax + 1])
    base_vals = field.eval_packed(visited)
    prime_vals = field_prime.eval_packed(visited)
    differs = np.nonzero(base_vals != prime_vals)[0]
    if len(differs) > 1 or (len(differs) == 1 and visited[differs[0]] != key):
        raise SiteCouplingError(
            "coupled fields differ at sites other than the resampled one"
        )

    _, hat = truncated_accumulate(traj, field, n, schedule, mean_override)
    _, hat_prime = truncated_accumulate(traj, field_prime, n, schedule, mean_override)
    w = interpolate(hat, n, T)
    w_prime = interpolate(hat_prime, n, T)
    influence = abs(eval_functional(spec, w) - eval_functional(spec, w_prime))

    level = schedule.threshold(n)
    trunc_diff = abs(TruncatedField(field, level).eval(site)
                     - TruncatedField(field_prime, level).eval(site))
    visits = int(np.count_nonzero(traj.packed[1:kmax + 1] == key))
    bound = spec.lipschitz * trunc_diff * visits / scaling_norm(n)
    return influence, bound
