import numpy as np
import pytest

from rwrs_lab.gof import (ad_normal, ad_statistic_normal, ks_normal,
                          studentize)


class TestStudentize:
    def test_moments(self):
        rng = np.random.default_rng(0)
        z = studentize(rng.random(5000) * 7 + 3)
        assert z.mean() == pytest.approx(0.0, abs=1e-12)
        assert z.std(ddof=1) == pytest.approx(1.0, rel=1e-12)

    def test_constant_rejected(self):
        with pytest.raises(ValueError):
            studentize(np.ones(100))


class TestAndersonDarling:
    def test_statistic_matches_direct_formula(self):
        from scipy.special import ndtr
        rng = np.random.default_rng(1)
        x = rng.standard_normal(64)
        z = np.sort(ndtr(x))
        n = len(z)
        acc = 0.0
        for i in range(1, n + 1):
            acc += (2 * i - 1) * (np.log(z[i - 1]) + np.log(1 - z[n - i]))
        assert ad_statistic_normal(x) == pytest.approx(-n - acc / n, rel=1e-12)

    def test_normal_sample_accepted(self):
        rng = np.random.default_rng(2)
        _, p = ad_normal(rng.standard_normal(2000))
        assert p > 0.01

    def test_uniform_sample_rejected(self):
        rng = np.random.default_rng(3)
        _, p = ad_normal(studentize(rng.random(2000)))
        assert p < 1e-6

    def test_shifted_sample_rejected(self):
        rng = np.random.default_rng(4)
        _, p = ad_normal(rng.standard_normal(2000) + 0.5)
        assert p < 1e-6


class TestKolmogorovSmirnov:
    def test_normal_sample_accepted(self):
        rng = np.random.default_rng(5)
        _, p = ks_normal(rng.standard_normal(2000))
        assert p > 0.01

    def test_uniform_sample_rejected(self):
        rng = np.random.default_rng(6)
        _, p = ks_normal(studentize(rng.random(2000)))
        assert p < 1e-6


class TestSizeCalibration:
    def test_nominal_size_on_true_normal(self):
        # 500 independent trials at alpha = 0.01: expected 5 rejections,
        # binomial 3-sigma band is [0, 12]
        alpha = 0.01
        trials = 500
        rng = np.random.default_rng(7)
        ks_rej = ad_rej = 0
        for _ in range(trials):
            x = rng.standard_normal(300)
            ks_rej += ks_normal(x)[1] < alpha
            ad_rej += ad_normal(x)[1] < alpha
        bound = alpha * trials + 3 * np.sqrt(trials * alpha * (1 - alpha))
        assert ks_rej <= bound
        assert ad_rej <= bound
