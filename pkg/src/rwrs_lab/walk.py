"""Random-walk models, trajectory sampling, local times and range statistics.

Two model families are supported: centered 2-D lattice walks with finite
covariance, and 1-D walks whose rescaled position converges to a Cauchy law.
Trajectories and local-time fields are immutable after construction and safe
to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .rng import pack1d, pack2d, pack_site, unpack2d

LATTICE_2D = "lattice2d"
HEAVY_TAIL_1D = "heavy_tail_1d"

_INV_SQUARE_C = 3.0 / math.pi ** 2  # p_k = c / k^2 over k != 0


class ModelError(ValueError):
    """Raised when a walk model violates its invariants."""


def lattice_span_index(vectors) -> int:
    """Index in Z^2 of the subgroup generated by integer vectors.

    Returns 0 when the vectors do not span a rank-2 sublattice.  Uses the
    determinantal-divisor identity: the index equals the gcd of all 2x2
    minors, which is what a Hermite-style reduction of the generator matrix
    would produce.
    """
    vs = [(int(a), int(b)) for a, b in vectors]
    g = 0
    for i in range(len(vs)):
        ai, bi = vs[i]
        for j in range(i + 1, len(vs)):
            aj, bj = vs[j]
            g = math.gcd(g, abs(ai * bj - bi * aj))
    return g


@dataclass(frozen=True)
class InverseSquareStepPmf:
    """Symmetric heavy-tailed step law p_{+-k} = 3/(pi^2 k^2), k >= 1.

    The mass sums to 1 exactly (sum 1/k^2 = pi^2/6) and the variance is
    infinite; S_n / n converges to a Cauchy law.  ``stride`` scales the
    support onto stride * Z (useful to exercise the aperiodicity check).
    """

    stride: int = 1

    @property
    def symmetric(self) -> bool:
        return True

    @property
    def has_finite_variance(self) -> bool:
        return False

    @property
    def support_gcd(self) -> int:
        return self.stride

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw steps by exact rejection from the ceil(1/U) envelope.

        The magnitude law q_k = (6/pi^2)/k^2 is sampled with proposal
        "k = 1 w.p. 1/2, else k = ceil(1/U)" and acceptance (k-1)/k, which
        dominates q with constant 12/pi^2.
        """
        out = np.empty(size, np.int64)
        filled = 0
        while filled < size:
            m = int((size - filled) * 1.35) + 16
            raw = rng.integers(0, 2 ** 64, size=m, dtype=np.uint64)
            u_acc = rng.random(m)
            sign = np.where(raw & np.uint64(1), 1, -1).astype(np.int64)
            branch_big = (raw & np.uint64(2)).astype(bool)
            u_mag = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)
            k = np.ones(m, np.int64)
            mag = np.ceil(1.0 / u_mag[branch_big]).astype(np.int64)
            k[branch_big] = mag
            accept = np.ones(m, bool)
            accept[branch_big] = u_acc[branch_big] < (mag - 1.0) / mag
            vals = (sign * k)[accept]
            take = min(size - filled, vals.size)
            out[filled:filled + take] = vals[:take]
            filled += take
        if self.stride != 1:
            out *= self.stride
        return out

    def one_minus_phi(self, t: float) -> float:
        """1 - E[cos(t X)] by partial summation with an integral tail.

        The first 2^16 terms are summed directly; the oscillatory tail of
        sum cos(k t)/k^2 is replaced by its midpoint integral, expressible
        through the sine integral.  Absolute error is far below the 1e-4
        stabilization tolerance of the scale extrapolation.
        """
        from scipy.special import polygamma, sici

        te = abs(t) * self.stride
        if te == 0.0:
            return 0.0
        kmax = 1 << 16
        k = np.arange(1, kmax + 1, dtype=np.float64)
        # 1 - cos(x) = 2 sin^2(x/2) avoids cancellation at small arguments.
        head = float(np.sum(2.0 * np.sin(k * (te / 2.0)) ** 2 / (k * k)))
        x = kmax + 0.5
        tail_one = float(polygamma(1, kmax + 1))  # sum_{k>kmax} 1/k^2
        si, _ = sici(x * te)
        tail_cos = math.cos(x * te) / x - te * (math.pi / 2.0 - si)
        return 2.0 * _INV_SQUARE_C * (head + tail_one - tail_cos)


@dataclass(frozen=True)
class FiniteStepPmf1D:
    """Finite-support 1-D step law; exact characteristic function."""

    offsets: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.offsets) != len(self.probs):
            raise ModelError("offsets/probs length mismatch")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ModelError("1-D step pmf does not sum to 1")
        if any(p <= 0 for p in self.probs):
            raise ModelError("1-D step pmf has non-positive mass")

    @property
    def symmetric(self) -> bool:
        table = dict(zip(self.offsets, self.probs))
        return all(abs(table.get(-k, 0.0) - p) <= 1e-15 for k, p in table.items())

    @property
    def has_finite_variance(self) -> bool:
        return True

    @property
    def support_gcd(self) -> int:
        g = 0
        for k in self.offsets:
            g = math.gcd(g, abs(int(k)))
        return g

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cum = np.cumsum(np.asarray(self.probs))
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(size), side="right")
        return np.asarray(self.offsets, dtype=np.int64)[idx]

    def one_minus_phi(self, t: float) -> float:
        ks = np.asarray(self.offsets, dtype=np.float64)
        ps = np.asarray(self.probs, dtype=np.float64)
        return float(np.sum(ps * 2.0 * np.sin(ks * (t / 2.0)) ** 2))


@dataclass(frozen=True)
class WalkModel:
    """Step-distribution specification for one walk family.

    ``steps``/``probs`` describe a finite 2-D increment law; ``pmf`` holds a
    1-D heavy-tailed law.  ``cauchy_scale`` starts as None ("to be computed")
    and is filled in from the characteristic-function oracle.
    """

    kind: str
    name: str
    steps: tuple[tuple[int, int], ...] | None = None
    probs: tuple[float, ...] | None = None
    pmf: InverseSquareStepPmf | FiniteStepPmf1D | None = None
    cauchy_scale: float | None = None

    @property
    def dim(self) -> int:
        return 2 if self.kind == LATTICE_2D else 1

    @cached_property
    def covariance(self) -> np.ndarray:
        """Exact step covariance by enumeration over the finite support."""
        if self.kind != LATTICE_2D:
            raise ModelError(f"{self.name}: covariance undefined (infinite variance)")
        s = np.asarray(self.steps, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        return (s.T * p) @ s

    def validate(self) -> None:
        """Check every model invariant; raise ModelError on the first failure."""
        if self.kind == LATTICE_2D:
            if not self.steps or not self.probs or len(self.steps) != len(self.probs):
                raise ModelError(f"{self.name}: steps/probs malformed")
            if abs(math.fsum(self.probs) - 1.0) > 1e-12:
                raise ModelError(f"{self.name}: step pmf does not sum to 1")
            if any(p <= 0 for p in self.probs):
                raise ModelError(f"{self.name}: step pmf has non-positive mass")
            mx = math.fsum(p * s[0] for p, s in zip(self.probs, self.steps))
            my = math.fsum(p * s[1] for p, s in zip(self.probs, self.steps))
            if abs(mx) > 1e-12 or abs(my) > 1e-12:
                raise ModelError(f"{self.name}: step mean is not zero")
            cov = self.covariance
            det = float(np.linalg.det(cov))
            if det <= 0 or abs(cov[0, 1] - cov[1, 0]) > 1e-12:
                raise ModelError(f"{self.name}: covariance not symmetric positive definite")
            idx = lattice_span_index(self.steps)
            if idx != 1:
                raise ModelError(
                    f"{self.name}: support generates a sublattice of index "
                    f"{idx or 'infinity'}; walk is not aperiodic (Spitzer)"
                )
        elif self.kind == HEAVY_TAIL_1D:
            if self.pmf is None:
                raise ModelError(f"{self.name}: missing 1-D step pmf")
            if not self.pmf.symmetric:
                raise ModelError(f"{self.name}: 1-D step pmf is not symmetric")
            if self.pmf.support_gcd != 1:
                raise ModelError(
                    f"{self.name}: support gcd {self.pmf.support_gcd}; walk is "
                    "confined to a proper subgroup of Z"
                )
        else:
            raise ModelError(f"unknown walk kind {self.kind!r}")

    def with_cauchy_scale(self, a: float) -> "WalkModel":
        return WalkModel(self.kind, self.name, self.steps, self.probs, self.pmf, float(a))


def simple_random_walk() -> WalkModel:
    """Nearest-neighbour walk on Z^2; covariance diag(1/2, 1/2)."""
    return WalkModel(
        kind=LATTICE_2D,
        name="srw",
        steps=((1, 0), (-1, 0), (0, 1), (0, -1)),
        probs=(0.25, 0.25, 0.25, 0.25),
    )


def diagonal_walk() -> WalkModel:
    """Steps (+-1, +-1) with probability 1/4 each; covariance identity.

    Note: its support generates the even checkerboard sublattice (index 2),
    so it fails the aperiodicity invariant and cannot be sampled.  It is kept
    as a built-in for the exact covariance/variance-formula arithmetic.
    """
    return WalkModel(
        kind=LATTICE_2D,
        name="diagonal",
        steps=((1, 1), (1, -1), (-1, 1), (-1, -1)),
        probs=(0.25, 0.25, 0.25, 0.25),
    )


def custom_lattice_walk(steps, probs, name: str = "custom2d") -> WalkModel:
    model = WalkModel(
        kind=LATTICE_2D,
        name=name,
        steps=tuple((int(a), int(b)) for a, b in steps),
        probs=tuple(float(p) for p in probs),
    )
    model.validate()
    return model


def heavy_tail_walk(stride: int = 1) -> WalkModel:
    """1-D walk with the inverse-square step law (Cauchy domain of attraction)."""
    return WalkModel(kind=HEAVY_TAIL_1D, name="heavy_tail_1d",
                     pmf=InverseSquareStepPmf(stride=stride))


@dataclass(frozen=True)
class Trajectory:
    """One sampled path S_0..S_n, S_0 = 0."""

    positions: np.ndarray  # (n+1, 2) int64 for 2-D, (n+1,) for 1-D
    model_name: str
    dim: int
    seed: int

    @property
    def n(self) -> int:
        return len(self.positions) - 1

    @cached_property
    def packed(self) -> np.ndarray:
        """uint64 site keys for every time index 0..n."""
        if self.dim == 2:
            return pack2d(self.positions[:, 0], self.positions[:, 1])
        return pack1d(self.positions)


@dataclass(frozen=True)
class LocalTimeField:
    """Sparse occupation counts N_n(x) = #{1 <= k <= n : S_k = x}.

    S_0 is excluded: counting starts at time 1, so the origin only appears
    once revisited.
    """

    packed_sites: np.ndarray  # sorted unique uint64 keys
    counts: np.ndarray        # int64, same length
    n: int
    dim: int

    def total(self) -> int:
        return int(self.counts.sum())

    def count_at(self, site) -> int:
        key = np.uint64(pack_site(site))
        i = np.searchsorted(self.packed_sites, key)
        if i < len(self.packed_sites) and self.packed_sites[i] == key:
            return int(self.counts[i])
        return 0

    def to_dict(self) -> dict:
        """Counts keyed by unpacked sites (small fields only)."""
        if self.dim == 2:
            xs, ys = unpack2d(self.packed_sites)
            return {(int(x), int(y)): int(c) for x, y, c in zip(xs, ys, self.counts)}
        from .rng import unpack1d
        return {int(v): int(c) for v, c in zip(unpack1d(self.packed_sites), self.counts)}


def sample_trajectory(model: WalkModel, n: int, seed: int) -> Trajectory:
    """Sample S_0..S_n; deterministic given (model, n, seed).

    Invalid models (singular covariance, non-generating support) are rejected
    before any sampling; n must be >= 1.
    """
    model.validate()
    if n < 1:
        raise ValueError(f"horizon n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if model.kind == LATTICE_2D:
        k = len(model.steps)
        probs = np.asarray(model.probs)
        if np.ptp(probs) == 0.0:
            idx = rng.integers(0, k, size=n)
        else:
            cum = np.cumsum(probs)
            cum[-1] = 1.0
            idx = np.searchsorted(cum, rng.random(n), side="right")
        sx = np.asarray([s[0] for s in model.steps], dtype=np.int64)
        sy = np.asarray([s[1] for s in model.steps], dtype=np.int64)
        pos = np.empty((n + 1, 2), np.int64)
        pos[0] = 0
        np.cumsum(sx[idx], out=pos[1:, 0])
        np.cumsum(sy[idx], out=pos[1:, 1])
        return Trajectory(pos, model.name, 2, seed)
    steps = model.pmf.sample(rng, n)
    pos = np.empty(n + 1, np.int64)
    pos[0] = 0
    np.cumsum(steps, out=pos[1:])
    return Trajectory(pos, model.name, 1, seed)


def local_times(traj: Trajectory) -> LocalTimeField:
    """Occupation counts of the trajectory over times 1..n."""
    sites, counts = np.unique(traj.packed[1:], return_counts=True)
    return LocalTimeField(sites, counts.astype(np.int64), traj.n, traj.dim)


def exit_of_range(traj: Trajectory, k: int) -> bool:
    """True iff S_k leaves the range, i.e. S_k not in {S_0, ..., S_{k-1}}.

    The range convention includes the origin from time 0.
    """
    if not 1 <= k <= traj.n:
        raise IndexError(f"k must be in [1, {traj.n}], got {k}")
    packed = traj.packed
    return not bool(np.any(packed[:k] == packed[k]))


def mutual_intersection_local_time(t1: Trajectory, t2: Trajectory) -> int:
    """J_n = sum_x N_n(x) * N'_n(x) for two walks over the same horizon."""
    if t1.n != t2.n:
        raise ValueError(f"horizon mismatch: {t1.n} != {t2.n}")
    f1, f2 = local_times(t1), local_times(t2)
    _, i1, i2 = np.intersect1d(f1.packed_sites, f2.packed_sites,
                               assume_unique=True, return_indices=True)
    return int(np.sum(f1.counts[i1] * f2.counts[i2]))


def covariance_of(model: WalkModel) -> np.ndarray:
    """Step covariance: exact enumeration over the pmf support (2-D only)."""
    return model.covariance


def empirical_covariance(model: WalkModel, samples: int, seed: int):
    """Monte Carlo second-moment matrix of single steps, with standard errors.

    The step mean is zero by model invariant, so the raw second moment is the
    covariance; returns (estimate, stderr) as 2x2 arrays.
    """
    if model.kind != LATTICE_2D:
        raise ModelError("empirical covariance requires a 2-D lattice model")
    model.validate()
    rng = np.random.default_rng(seed)
    cum = np.cumsum(np.asarray(model.probs))
    cum[-1] = 1.0
    idx = np.searchsorted(cum, rng.random(samples), side="right")
    s = np.asarray(model.steps, dtype=np.float64)[idx]
    prods = np.stack([s[:, 0] * s[:, 0], s[:, 0] * s[:, 1], s[:, 1] * s[:, 1]], axis=1)
    est = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(samples)
    cov = np.array([[est[0], est[1]], [est[1], est[2]]])
    err = np.array([[se[0], se[1]], [se[1], se[2]]])
    return cov, err
