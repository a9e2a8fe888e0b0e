import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covtest import linalg
from covtest.detectors import (
    DetectorId, check_applicable, evaluate, evaluate_many, glrt_correlation, glrt_sphericity,
    lmpit_correlation, lmpit_sphericity, statistics_from_samples, umpit_scalar,
)
from covtest.errors import (
    InsufficientSamples, MalformedCoherence, MalformedNormalizedCovariance, NotPositiveDefinite,
    WrongGeometry,
)
from covtest.model import BlockGeometry, scenario_circulant
from covtest.sampling import SampleSet, coherence, covariance_of, sample_gaussian

from conftest import random_complex, random_pd_matrix

C1 = np.array([[1, 0.5, 0], [0.5, 1, 0], [0, 0, 1]])
C2 = np.array([[1, 0, 0.4], [0, 1, 0.3], [0.4, 0.3, 1]])
ALL = list(DetectorId)


def test_ids_and_parsing():
    assert [d.value for d in DetectorId] == [
        "lmpit-corr", "glrt-corr", "lmpit-sph", "glrt-sph", "umpit-corr", "umpit-sph"]
    assert DetectorId.parse("lmpit_corr") is DetectorId.LMPIT_CORR
    assert DetectorId.parse("umpit_corr_scalar") is DetectorId.UMPIT_CORR
    assert DetectorId.parse("umpit-sph") is DetectorId.UMPIT_SPH
    with pytest.raises(ValueError):
        DetectorId.parse("energy")


class TestLmpitCorrelation:
    def test_identity(self):
        assert lmpit_correlation(np.eye(12), BlockGeometry(4, 3)).value == 12

    @pytest.mark.parametrize("c", [C1, C2])
    def test_worked_example(self, c):
        assert lmpit_correlation(c).value == pytest.approx(3.5, abs=1e-15)

    def test_two_by_two(self):
        assert lmpit_correlation([[1, 0.5], [0.5, 1]]).value == pytest.approx(2.5)

    def test_malformed(self):
        with pytest.raises(MalformedCoherence):
            lmpit_correlation(np.diag([1.0, 2.0]))
        with pytest.raises(MalformedCoherence):
            lmpit_correlation(np.eye(4), BlockGeometry(3, 1))

    @settings(max_examples=30, deadline=None)
    @given(l=st.integers(2, 5), n=st.integers(1, 3), extra=st.integers(0, 10), seed=st.integers(0, 2**32 - 1))
    def test_bounds(self, l, n, extra, seed):
        g = BlockGeometry(l, n)
        x = random_complex(np.random.default_rng(seed), (n + extra, g.dim))
        v = lmpit_correlation(coherence(covariance_of(x), g), g).value
        assert g.dim - 1e-9 <= v <= l * l * n + 1e-9


class TestGlrtCorrelation:
    def test_identity(self):
        assert glrt_correlation(np.eye(3)).value == 0

    @pytest.mark.parametrize("c", [C1, C2])
    def test_worked_example(self, c):
        stat = glrt_correlation(c)
        assert stat.value == pytest.approx(-np.log(0.75), rel=1e-12)
        assert stat.raw == pytest.approx(np.log(0.75), rel=1e-12)

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            glrt_correlation([[1, 1], [1, 1]])

    def test_fischer(self, rng):
        g = BlockGeometry(3, 2)
        for _ in range(20):
            c = coherence(random_pd_matrix(rng, 6, 0.1), g)
            assert glrt_correlation(c, g).value >= -1e-12


class TestSphericity:
    def test_identity(self):
        assert lmpit_sphericity(np.eye(6), BlockGeometry(3, 2)).value == 6
        assert glrt_sphericity(np.eye(6), BlockGeometry(3, 2)).value == 0

    def test_two_by_two(self):
        r = np.array([[1, 0.5], [0.5, 1]])  # eigenvalues 1.5, 0.5
        assert lmpit_sphericity(r).value == pytest.approx(2.5)
        assert glrt_sphericity(r).value == pytest.approx(-np.log(0.75))

    def test_evd_oracle(self, rng):
        a = random_pd_matrix(rng, 8)
        a *= 8 / np.trace(a).real
        w, _ = linalg.hermitian_evd(a)
        assert lmpit_sphericity(a, BlockGeometry(4, 2)).value == pytest.approx(np.sum(w**2), rel=1e-9)
        assert glrt_sphericity(a, BlockGeometry(4, 2)).value == pytest.approx(-np.sum(np.log(w)), rel=1e-10)

    def test_trace_check(self):
        with pytest.raises(MalformedNormalizedCovariance):
            lmpit_sphericity(2 * np.eye(4), BlockGeometry(2, 2))


class TestUmpit:
    def test_identical_channels(self, rng):
        z = random_complex(rng, 20)
        d = SampleSet(BlockGeometry(2, 1), np.column_stack([z, z]))
        assert umpit_scalar(d, "correlation").value == pytest.approx(1.0, abs=1e-12)
        assert umpit_scalar(d, "sphericity").value == pytest.approx(2.0, abs=1e-12)

    def test_uncorrelated_equal_power(self):
        x = np.array([[1, 0], [0, 1]], dtype=complex)
        d = SampleSet(BlockGeometry(2, 1), x)
        assert umpit_scalar(d, "correlation").value == pytest.approx(0, abs=1e-15)
        assert umpit_scalar(d, "sphericity").value == pytest.approx(1.0)

    def test_half_correlation(self):
        # samples whose covariance is exactly [[1, .5], [.5, 1]]
        root = linalg.hermitian_sqrt(np.array([[1, 0.5], [0.5, 1]]))
        d = SampleSet(BlockGeometry(2, 1), np.sqrt(2) * root.T)
        assert umpit_scalar(d, "correlation").value == pytest.approx(0.5)
        assert umpit_scalar(d, "sphericity").value == pytest.approx(1.5)

    def test_geometry(self):
        d = sample_gaussian(np.eye(3), 5, 0, 0, BlockGeometry(3, 1))
        with pytest.raises(WrongGeometry):
            umpit_scalar(d, "correlation")
        with pytest.raises(WrongGeometry):
            evaluate("umpit-sph", d)


class TestEvaluate:
    def test_consistency(self):
        d = sample_gaussian(np.eye(6), 100_000, 4, 0, BlockGeometry(3, 2))
        assert evaluate("lmpit-corr", d).value == pytest.approx(6, rel=0.02)

    def test_sample_requirements(self):
        g = BlockGeometry(3, 2)
        d = sample_gaussian(np.eye(6), 5, 0, 0, g)
        with pytest.raises(InsufficientSamples, match="L\\*N = 6"):
            evaluate("glrt-corr", d)
        evaluate("lmpit-corr", d)
        evaluate("lmpit-sph", d)
        with pytest.raises(InsufficientSamples, match="N = 2"):
            check_applicable(DetectorId.LMPIT_CORR, g, 1)

    def test_scalar_identity(self):
        g = BlockGeometry(2, 1)
        for s in range(20):
            d = sample_gaussian(np.array([[1, 0.3], [0.3, 1]]), 15, s, 0, g)
            lm = evaluate("lmpit-corr", d).value
            u = evaluate("umpit-corr", d).value
            assert lm == pytest.approx(2 + 2 * u * u, rel=1e-12)

    def test_fast_path_matches_pipeline(self, rng):
        g = BlockGeometry(2, 1)
        d = sample_gaussian(random_pd_matrix(rng, 2), 30, 8, 0, g)
        many = evaluate_many(ALL, d)
        fast = statistics_from_samples(ALL, d.samples, g)
        for det, v in zip(ALL, fast):
            assert evaluate(det, d).value == pytest.approx(v, rel=1e-12)
            assert many[det].value == v
        g = BlockGeometry(4, 3)
        d = sample_gaussian(random_pd_matrix(rng, 12), 30, 8, 0, g)
        ids = ALL[:4]
        for det, v in zip(ids, statistics_from_samples(ids, d.samples, g)):
            assert evaluate(det, d).value == pytest.approx(v, rel=1e-12)

    def test_orientation(self):
        # every statistic's H1 mean exceeds its H0 mean by a 5 sigma margin
        g = BlockGeometry(4, 2)
        sc = scenario_circulant(g)
        ids = ALL[:4]
        trials = 300
        stats = {h: np.array([statistics_from_samples(ids, sample_gaussian(cov, 40, 3, 2 * t + h, g).samples, g)
                              for t in range(trials)])
                 for h, cov in enumerate([sc.r_h0, sc.r_h1])}
        diff = stats[1].mean(0) - stats[0].mean(0)
        se = np.sqrt((stats[0].var(0, ddof=1) + stats[1].var(0, ddof=1)) / trials)
        assert np.all(diff > 5 * se), (diff, se)
