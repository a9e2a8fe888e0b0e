import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covtest import linalg
from covtest.detectors import evaluate
from covtest.errors import GeometryMismatch, RankDeficientBlock
from covtest.invariance import (
    GroupElement, GroupKind, apply_group, check_invariance, haar_unitary, identity_element,
    maximal_invariant, maximal_invariant_of, random_group_element, vector_order,
)
from covtest.model import BlockGeometry, random_pd
from covtest.sampling import SampleSet, coherence, covariance_of, sample_gaussian, stream_rng

C1 = np.array([[1, 0.5, 0], [0.5, 1, 0], [0, 0, 1]])
C2 = np.array([[1, 0, 0.4], [0, 1, 0.3], [0.4, 0.3, 1]])


def dataset(geometry, m, seed):
    cov = random_pd(geometry.dim, stream_rng(seed, 0, 1))
    return sample_gaussian(cov, m, seed, 0, geometry)


class TestGroupElements:
    def test_sphericity_unitary(self):
        e = random_group_element("sphericity", BlockGeometry(5, 2), 1)
        assert np.linalg.norm(e.outer @ e.outer.conj().T - np.eye(5)) < 1e-10
        assert abs(np.linalg.det(e.blocks[0])) > 1e-12

    def test_correlation_permutation(self):
        e = random_group_element("correlation", BlockGeometry(1, 3), 1)
        np.testing.assert_array_equal(e.outer, [[1]])
        e = random_group_element("correlation", BlockGeometry(6, 2), 2)
        p = e.outer
        assert set(np.unique(p)) <= {0, 1}
        np.testing.assert_array_equal(p.sum(0), 1)
        np.testing.assert_array_equal(p.sum(1), 1)
        assert all(abs(np.linalg.det(b)) > 1e-12 for b in e.blocks)

    def test_deterministic(self):
        g = BlockGeometry(3, 2)
        a, b = random_group_element("correlation", g, 4, 7), random_group_element("correlation", g, 4, 7)
        np.testing.assert_array_equal(a.matrix(), b.matrix())

    def test_haar_moment(self):
        l, draws = 4, 10_000
        rng = np.random.default_rng(5)
        vals = np.array([abs(haar_unitary(l, rng)[0, 0]) ** 2 for _ in range(draws)])
        sigma = np.sqrt((l - 1) / (l * l * (l + 1)) / draws)  # |q11|^2 ~ Beta(1, L-1)
        assert abs(vals.mean() - 1 / l) < 3 * sigma

    def test_haar_phase_distribution(self):
        # the R-diagonal correction makes the phase of q11 uniform
        rng = np.random.default_rng(6)
        ph = np.array([np.angle(haar_unitary(3, rng)[0, 0]) for _ in range(4000)])
        assert abs(np.mean(np.cos(ph))) < 0.05 and abs(np.mean(np.sin(ph))) < 0.05


class TestApplyGroup:
    def test_identity(self):
        d = dataset(BlockGeometry(3, 2), 10, 0)
        for kind in GroupKind:
            out = apply_group(identity_element(kind, d.geometry), d)
            np.testing.assert_array_equal(out.samples, d.samples)

    def test_swap(self):
        g = BlockGeometry(2, 2)
        d = dataset(g, 5, 1)
        swap = np.array([[0, 1], [1, 0]], dtype=complex)
        e = GroupElement(GroupKind.CORRELATION, g, swap, np.stack([np.eye(2)] * 2).astype(complex))
        out = apply_group(e, d)
        np.testing.assert_array_equal(out.samples[:, :2], d.samples[:, 2:])
        np.testing.assert_array_equal(out.samples[:, 2:], d.samples[:, :2])
        assert out.m == d.m and out.geometry == g

    @pytest.mark.parametrize("kind", list(GroupKind))
    def test_covariance_transport(self, kind):
        g = BlockGeometry(3, 2)
        d = dataset(g, 12, 2)
        e = random_group_element(kind, g, 3)
        t = e.matrix()
        np.testing.assert_allclose(covariance_of(apply_group(e, d).samples),
                                   t @ covariance_of(d.samples) @ t.conj().T, atol=1e-12)

    def test_geometry_mismatch(self):
        d = dataset(BlockGeometry(3, 2), 10, 0)
        with pytest.raises(GeometryMismatch):
            apply_group(random_group_element("correlation", BlockGeometry(2, 3), 0), d)


class TestCheckInvariance:
    @pytest.mark.parametrize("det", ["lmpit-corr", "glrt-corr", "lmpit-sph", "glrt-sph"])
    def test_natural_group(self, det):
        rep = check_invariance(det, dataset(BlockGeometry(4, 3), 20, 9), seed=1)
        assert rep.passed and rep.max_rel_dev < 1e-8
        assert set(rep.to_dict()) == {"detector", "group", "trials", "max_rel_dev", "pass"}

    def test_correlation_statistics_also_sphericity_invariant(self):
        # the sphericity group is not a subgroup of the correlation group: Q mixes vectors
        rep = check_invariance("lmpit-corr", dataset(BlockGeometry(3, 2), 20, 3), "sphericity", seed=2)
        assert not rep.passed

    def test_negative_control_sph_under_correlation(self):
        rep = check_invariance("lmpit-sph", dataset(BlockGeometry(4, 3), 20, 9), "correlation", seed=1)
        assert not rep.passed and rep.max_rel_dev > 1e-3

    def test_negative_control_non_group_mixing(self):
        g = BlockGeometry(3, 2)
        d = dataset(g, 20, 4)
        mix = np.eye(6) + 0.3 * np.ones((6, 6))
        moved = SampleSet(g, d.samples @ mix.T)
        base = evaluate("lmpit-corr", d).value
        assert abs(evaluate("lmpit-corr", moved).value - base) / base > 1e-8

    def test_umpit_scalar_invariance(self):
        d = dataset(BlockGeometry(2, 1), 15, 1)
        assert check_invariance("umpit-corr", d, seed=3).passed
        assert check_invariance("umpit-sph", d, seed=3).passed


class TestMaximalInvariant:
    def test_worked_example_orbits_differ(self):
        g = BlockGeometry(3, 1)
        for c in (C1, C2):
            w, _ = linalg.hermitian_evd(c)
            np.testing.assert_allclose(w, [1.5, 1.0, 0.5], atol=1e-9)
        m1, m2 = maximal_invariant(C1, g), maximal_invariant(C2, g)
        assert np.max(np.abs(m1.as_vector() - m2.as_vector())) > 0.05
        np.testing.assert_allclose(m1.xi12, [0.5])
        np.testing.assert_allclose(m2.xi12, [0.4])
        assert m2.order == (2, 0, 1)
        np.testing.assert_allclose(m2.l_blocks[0], [[0.3]])

    def test_identity_is_degenerate(self):
        mi = maximal_invariant(np.eye(6), BlockGeometry(3, 2))
        np.testing.assert_allclose(mi.xi12, [0, 0])
        assert mi.degenerate and mi.notes
        assert all(np.all(b == 0) for b in mi.cross_blocks.values())
        with pytest.raises(RankDeficientBlock):
            maximal_invariant(np.eye(6), BlockGeometry(3, 2), strict=True)

    def test_scalar_pair_reduces_to_correlation(self):
        d = dataset(BlockGeometry(2, 1), 25, 5)
        mi = maximal_invariant_of(d)
        assert mi.as_vector() == pytest.approx([evaluate("umpit-corr", d).value], rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_invariance(self, seed):
        g = BlockGeometry(4, 2)
        d = dataset(g, 30, seed)
        ref = maximal_invariant_of(d).as_vector()
        for t in range(20):
            moved = apply_group(random_group_element("correlation", g, 100 + seed, t), d)
            np.testing.assert_allclose(maximal_invariant_of(moved).as_vector(), ref, atol=1e-7)

    @settings(max_examples=25, deadline=None)
    @given(l=st.integers(2, 5), n=st.integers(1, 3), seed=st.integers(0, 2**32 - 1))
    def test_structure(self, l, n, seed):
        g = BlockGeometry(l, n)
        mi = maximal_invariant_of(dataset(g, 3 * g.dim, seed))
        assert np.all(np.diff(mi.xi12) <= 0)
        assert np.all((mi.xi12 >= 0) & (mi.xi12 <= 1))
        assert sorted(mi.order) == list(range(l))
        assert len(mi.l_blocks) == l - 2
        for lb in mi.l_blocks:
            assert np.all(np.triu(lb, 1) == 0)
            assert np.all(np.diag(lb).imag == 0) and np.all(np.diag(lb).real >= 0)
        c = mi.matrix
        np.testing.assert_allclose(c[:n, n:2 * n], np.diag(mi.xi12), atol=1e-10)
        assert np.abs(linalg.diagonal_blocks(c, n) - np.eye(n)).max() < 1e-10
        assert set(mi.cross_blocks) == {(k, j) for j in range(3, l + 1) for k in range(2, j)}
        # the canonical form is congruent to C-hat: same eigenvalues
        c_hat = coherence(covariance_of(dataset(g, 3 * g.dim, seed).samples), g)
        np.testing.assert_allclose(np.linalg.eigvalsh(c), np.linalg.eigvalsh(c_hat), atol=1e-9)

    def test_ordering_convention(self):
        g = BlockGeometry(3, 1)
        order, tied = vector_order(C2, g)
        assert order == (2, 0, 1) and not tied
        order, tied = vector_order(C1, g)
        assert order == (0, 1, 2) and tied

    def test_rejects_non_coherence(self):
        with pytest.raises(ValueError):
            maximal_invariant(2 * np.eye(4), BlockGeometry(2, 2))
        with pytest.raises(GeometryMismatch):
            maximal_invariant(np.eye(3), BlockGeometry(1, 3))
