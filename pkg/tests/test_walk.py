import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwrs_lab.analysis import cauchy_scale_oracle
from rwrs_lab.walk import (FiniteStepPmf1D, ModelError, Trajectory,
                           custom_lattice_walk, diagonal_walk,
                           empirical_covariance, exit_of_range,
                           heavy_tail_walk, lattice_span_index, local_times,
                           mutual_intersection_local_time, sample_trajectory,
                           simple_random_walk)


def make_traj_2d(points):
    return Trajectory(np.asarray(points, dtype=np.int64), "manual", 2, 0)


class TestModelValidation:
    def test_srw_valid(self):
        simple_random_walk().validate()

    def test_srw_support_generates_full_lattice(self):
        assert lattice_span_index(simple_random_walk().steps) == 1

    def test_diagonal_walk_confined_to_checkerboard(self):
        # support (+-1, +-1) generates the even sublattice, index 2
        assert lattice_span_index(diagonal_walk().steps) == 2
        with pytest.raises(ModelError, match="aperiodic"):
            diagonal_walk().validate()

    def test_diagonal_walk_cannot_be_sampled(self):
        with pytest.raises(ModelError):
            sample_trajectory(diagonal_walk(), 10, 0)

    def test_scaled_support_rejected(self):
        steps = ((2, 0), (-2, 0), (0, 2), (0, -2))
        assert lattice_span_index(steps) == 4
        with pytest.raises(ValueError, match="aperiodic|sublattice"):
            custom_lattice_walk(steps, (0.25,) * 4)

    def test_rank_deficient_support_rejected(self):
        with pytest.raises(ValueError):
            custom_lattice_walk(((1, 0), (-1, 0)), (0.5, 0.5))

    def test_nonzero_mean_rejected(self):
        with pytest.raises(ValueError, match="mean"):
            custom_lattice_walk(((1, 0), (0, 1), (0, -1)), (0.4, 0.3, 0.3))

    def test_bad_mass_rejected(self):
        with pytest.raises(ValueError, match="sum"):
            custom_lattice_walk(((1, 0), (-1, 0), (0, 1), (0, -1)),
                                (0.25, 0.25, 0.25, 0.15))

    def test_heavy_tail_stride2_rejected(self):
        with pytest.raises(ModelError, match="subgroup"):
            heavy_tail_walk(stride=2).validate()


class TestSampling:
    def test_determinism(self):
        m = simple_random_walk()
        a = sample_trajectory(m, 500, 123)
        b = sample_trajectory(m, 500, 123)
        assert np.array_equal(a.positions, b.positions)

    def test_different_seed_differs(self):
        m = simple_random_walk()
        a = sample_trajectory(m, 500, 123)
        b = sample_trajectory(m, 500, 124)
        assert not np.array_equal(a.positions, b.positions)

    def test_starts_at_origin_with_right_length(self):
        t = sample_trajectory(simple_random_walk(), 37, 7)
        assert t.positions.shape == (38, 2)
        assert tuple(t.positions[0]) == (0, 0)

    def test_increments_in_support(self):
        m = simple_random_walk()
        t = sample_trajectory(m, 1000, 3)
        incs = {tuple(d) for d in np.diff(t.positions, axis=0)}
        assert incs <= set(m.steps)

    def test_n_zero_rejected(self):
        with pytest.raises(ValueError, match="n must be >= 1"):
            sample_trajectory(simple_random_walk(), 0, 1)

    def test_empirical_step_mean_within_3se(self):
        t = sample_trajectory(simple_random_walk(), 200_000, 11)
        incs = np.diff(t.positions, axis=0).astype(float)
        se = incs.std(axis=0, ddof=1) / math.sqrt(len(incs))
        assert np.all(np.abs(incs.mean(axis=0)) <= 3.0 * se)

    def test_custom_pmf_sampling(self):
        m = custom_lattice_walk(
            ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)),
            (0.2, 0.2, 0.2, 0.2, 0.1, 0.1))
        t = sample_trajectory(m, 5000, 5)
        incs = {tuple(d) for d in np.diff(t.positions, axis=0)}
        assert incs <= set(m.steps)


class TestLocalTimes:
    def test_simple_revisit(self):
        t = make_traj_2d([(0, 0), (1, 0), (0, 0)])
        assert local_times(t).to_dict() == {(1, 0): 1, (0, 0): 1}

    def test_loop(self):
        t = make_traj_2d([(0, 0), (1, 0), (0, 0), (1, 0)])
        assert local_times(t).to_dict() == {(1, 0): 2, (0, 0): 1}

    def test_counts_sum_to_n_large(self):
        t = sample_trajectory(simple_random_walk(), 10_000, 21)
        assert local_times(t).total() == 10_000

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 200))
    def test_counts_sum_to_n_property(self, seed, n):
        t = sample_trajectory(simple_random_walk(), n, seed)
        lt = local_times(t)
        assert lt.total() == n
        # agree with a direct recount of the trajectory
        recount = {}
        for p in map(tuple, t.positions[1:]):
            recount[p] = recount.get(p, 0) + 1
        assert lt.to_dict() == recount

    def test_origin_excluded_until_revisited(self):
        t = make_traj_2d([(0, 0), (1, 0), (2, 0)])
        assert local_times(t).count_at((0, 0)) == 0


class TestExitOfRange:
    def test_return_to_origin_not_exit(self):
        t = make_traj_2d([(0, 0), (1, 0), (0, 0)])
        assert exit_of_range(t, 2) is False  # origin is in the range at time 0

    def test_fresh_site_is_exit(self):
        t = make_traj_2d([(0, 0), (1, 0), (2, 0)])
        assert exit_of_range(t, 2) is True

    def test_out_of_bounds(self):
        t = make_traj_2d([(0, 0), (1, 0)])
        with pytest.raises(IndexError):
            exit_of_range(t, 2)
        with pytest.raises(IndexError):
            exit_of_range(t, 0)


class TestMutualIntersection:
    def test_self_pair_equals_sum_of_squares(self):
        t = sample_trajectory(simple_random_walk(), 2000, 9)
        lt = local_times(t)
        assert mutual_intersection_local_time(t, t) == int(np.sum(lt.counts ** 2))

    def test_disjoint_paths(self):
        t1 = make_traj_2d([(0, 0), (1, 0), (2, 0)])
        t2 = make_traj_2d([(0, 0), (0, 1), (0, 2)])
        assert mutual_intersection_local_time(t1, t2) == 0

    def test_horizon_mismatch(self):
        t1 = make_traj_2d([(0, 0), (1, 0)])
        t2 = make_traj_2d([(0, 0), (0, 1), (0, 2)])
        with pytest.raises(ValueError, match="horizon"):
            mutual_intersection_local_time(t1, t2)


class TestCovariance:
    def test_srw_exact(self):
        assert np.array_equal(simple_random_walk().covariance,
                              np.diag([0.5, 0.5]))

    def test_diagonal_exact(self):
        assert np.array_equal(diagonal_walk().covariance, np.eye(2))

    def test_heavy_tail_has_no_covariance(self):
        with pytest.raises(ModelError, match="infinite variance"):
            _ = heavy_tail_walk().covariance

    def test_custom_pmf_empirical_within_3se(self):
        m = custom_lattice_walk(
            ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)),
            (0.2, 0.2, 0.2, 0.2, 0.1, 0.1))
        # brute-force expectation over the support is the oracle
        s = np.asarray(m.steps, float)
        p = np.asarray(m.probs)
        oracle = (s.T * p) @ s
        assert np.allclose(m.covariance, oracle, atol=1e-15)
        est, se = empirical_covariance(m, 40_000, seed=17)
        assert np.all(np.abs(est - oracle) <= 3.0 * np.maximum(se, 1e-12))


class TestHeavyTailWalk:
    def test_pmf_mass_and_symmetry(self):
        pmf = heavy_tail_walk().pmf
        # mass of |k| <= K approaches 1 like 1 - 6/(pi^2 K)
        ks = np.arange(1, 200_001)
        mass = 2.0 * np.sum(3.0 / (math.pi ** 2 * ks ** 2))
        assert mass == pytest.approx(1.0, abs=1e-4)
        assert pmf.symmetric

    def test_sample_matches_pmf(self):
        pmf = heavy_tail_walk().pmf
        rng = np.random.default_rng(2)
        draws = pmf.sample(rng, 200_000)
        assert not np.any(draws == 0)
        for k in (1, 2, 3):
            frac = np.mean(np.abs(draws) == k)
            expect = 6.0 / (math.pi ** 2 * k ** 2)
            assert frac == pytest.approx(expect, abs=4 * math.sqrt(expect / 200_000))

    def test_rescaled_endpoint_matches_cauchy_cdf(self):
        # oracle: integrate the Cauchy density of scale a numerically
        from scipy.integrate import quad

        model = heavy_tail_walk()
        a = cauchy_scale_oracle(model.pmf)

        def cauchy_cdf(x):
            val, _ = quad(lambda u: a / (math.pi * (a * a + u * u)), 0.0, abs(x))
            return 0.5 + math.copysign(val, x)

        n, reps = 10_000, 1500
        samples = np.empty(reps)
        for i in range(reps):
            t = sample_trajectory(model, n, 1000 + i)
            samples[i] = t.positions[-1] / n
        grid = [-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0]
        worst = max(abs(np.mean(samples <= x) - cauchy_cdf(x)) for x in grid)
        assert worst <= 0.05  # MC noise at 1500 replicas is ~0.013 per point

    def test_1d_trajectory_shape(self):
        t = sample_trajectory(heavy_tail_walk(), 100, 4)
        assert t.positions.shape == (101,)
        assert t.positions[0] == 0
        assert local_times(t).total() == 100


class TestFinitePmf1D:
    def test_symmetry_detection(self):
        assert FiniteStepPmf1D((-1, 1), (0.5, 0.5)).symmetric
        assert not FiniteStepPmf1D((-1, 2), (0.5, 0.5)).symmetric

    def test_bad_mass(self):
        with pytest.raises(ModelError):
            FiniteStepPmf1D((-1, 1), (0.5, 0.4))
