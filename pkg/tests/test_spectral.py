"""Mode lattice, norms, projectors, propagator, grid transforms.

Oracles live at the top: a brute-force lattice scan (independent of the
library's enumeration) and plain rectangle-rule quadrature on the grid.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imcgl.errors import GridTooSmallError
from imcgl.spectral import (SpectralGrid, TWO_PI_CUBED, apply_linear_propagator,
                            conj_field, dealias, enumerate_modes, from_grid,
                            inner_product, mode_split, project, projector_mask,
                            random_field, sobolev_norm, sobolev_norm_sq,
                            to_grid)

TWO_PI_32 = TWO_PI_CUBED ** 0.5     # (2 pi)^{3/2}, the norm of e_n


# ---------------------------------------------------------------------------
# oracles


def oracle_modes(radius, keep):
    """All cube lattice points (k,l,m) with keep(a_eig) true, as a set."""
    out = set()
    for k in range(-radius, radius + 1):
        for l in range(-radius, radius + 1):
            for m in range(-radius, radius + 1):
                if keep(1 + k * k + l * l + m * m):
                    out.add((k, l, m))
    return out


def oracle_quadrature_h_sq(u):
    """Rectangle rule for the squared H-norm; exact for band-limited u."""
    g = to_grid(u)
    return TWO_PI_CUBED * float(np.mean(np.abs(g) ** 2))


def rng_for(tag):
    return np.random.default_rng(tag)


# ---------------------------------------------------------------------------
# enumeration


class TestEnumerateModes:
    def test_low_ball_g4(self):
        got = enumerate_modes(4, "low", N=4.0)
        want = oracle_modes(4, lambda a: a <= 4)
        assert {(t.k, t.l, t.m) for t in got} == want
        # shells |n|^2 = 0..3 hold 1 + 6 + 12 + 8 points
        assert len(got) == 27

    def test_g1_low_ball_is_zero_mode(self):
        got = enumerate_modes(1, "low", N=1.0)
        assert [(t.k, t.l, t.m) for t in got] == [(0, 0, 0)]

    def test_annulus_intersected_with_cube(self):
        # the (8,12) annulus reaches |n|^2 = 10, whose lattice points
        # include components of size 3; at radius 2 only the in-cube part
        # is listed
        got = enumerate_modes(2, "mid", N=10.0, K=2.0)
        want = oracle_modes(2, lambda a: 8 < a < 12)
        assert {(t.k, t.l, t.m) for t in got} == want
        assert len(got) == len(want) == 36

    def test_mode_index_fields_consistent(self):
        for t in enumerate_modes(3, "all"):
            assert t.lap_eig == t.k ** 2 + t.l ** 2 + t.m ** 2
            assert t.a_eig == 1 + t.lap_eig

    def test_sorted_by_shell_then_lex(self):
        got = enumerate_modes(3, "all")
        keys = [(t.a_eig, t.k, t.l, t.m) for t in got]
        assert keys == sorted(keys)

    def test_low_ball_needs_full_sphere(self):
        with pytest.raises(GridTooSmallError, match="grid too small"):
            enumerate_modes(2, "low", N=11.0)

    @settings(deadline=None, max_examples=40)
    @given(radius=st.integers(1, 4), N=st.integers(1, 12),
           K=st.integers(1, 6))
    def test_matches_oracle(self, radius, N, K):
        try:
            got = enumerate_modes(radius, "mid", N=float(N), K=float(K))
        except GridTooSmallError:
            return
        want = oracle_modes(radius, lambda a: N - K < a < N + K)
        assert {(t.k, t.l, t.m) for t in got} == want

    def test_high_is_complement_of_low(self):
        low = enumerate_modes(3, "low", N=8.0)
        high = enumerate_modes(3, "high", N=8.0)
        allm = enumerate_modes(3, "all")
        assert len(low) + len(high) == len(allm)
        assert not ({(t.k, t.l, t.m) for t in low}
                    & {(t.k, t.l, t.m) for t in high})


# ---------------------------------------------------------------------------
# norms


class TestSobolevNorm:
    def test_zero_mode_any_s(self):
        g = SpectralGrid(3)
        e0 = g.basis_field(0, 0, 0)
        for s in (0.0, 1.0, 1.75, 3.5, -2.0):
            assert sobolev_norm(e0, s) == pytest.approx(TWO_PI_32, rel=1e-14)

    def test_first_shell_weight(self):
        g = SpectralGrid(3)
        e = g.basis_field(1, 0, 0)
        # a_eig = 2, s = 2: weight 4 under the square, so the norm doubles
        assert sobolev_norm(e, 2.0) == pytest.approx(2.0 * TWO_PI_32, rel=1e-14)

    def test_parseval_vs_quadrature(self):
        g = SpectralGrid(4)
        for i in range(5):
            u = random_field(g, rng_for(100 + i), amplitude=1.0)
            quad = oracle_quadrature_h_sq(u)
            assert sobolev_norm_sq(u, 0.0) == pytest.approx(quad, rel=1e-10)

    @settings(deadline=None, max_examples=30)
    @given(s1=st.floats(-2, 4), s2=st.floats(-2, 4), seed=st.integers(0, 50))
    def test_norm_ordering(self, s1, s2, seed):
        if s1 > s2:
            s1, s2 = s2, s1
        u = random_field(SpectralGrid(2), rng_for(seed))
        assert sobolev_norm(u, s1) <= sobolev_norm(u, s2) * (1 + 1e-12)

    def test_inner_product_matches_norm(self):
        u = random_field(SpectralGrid(3), rng_for(7))
        ip = inner_product(u, u)
        assert ip.imag == pytest.approx(0.0, abs=1e-12)
        assert ip.real == pytest.approx(sobolev_norm_sq(u, 0.0), rel=1e-13)


# ---------------------------------------------------------------------------
# projectors


class TestProjectors:
    def test_low_keeps_low_basis_mode(self):
        g = SpectralGrid(3)
        e = g.basis_field(1, 1, 0)      # a_eig = 3
        out = project(e, "low", 5.0)
        assert np.array_equal(out.coeffs, e.coeffs)

    def test_complementary_projectors_annihilate(self):
        u = random_field(SpectralGrid(3), rng_for(1))
        out = project(project(u, "low", 5.0), "high", 5.0)
        assert np.max(np.abs(out.coeffs)) == 0.0

    def test_partition_of_unity(self):
        u = random_field(SpectralGrid(4), rng_for(2))
        back = project(u, "low", 7.0) + project(u, "high", 7.0)
        assert np.max(np.abs(back.coeffs - u.coeffs)) <= 1e-15

    def test_three_way_split(self):
        u = random_field(SpectralGrid(4), rng_for(3))
        sp = mode_split(u, 10.0, 3.0)
        back = sp.reconstruct()
        assert np.max(np.abs(back.coeffs - u.coeffs)) <= 1e-15
        a = u.grid.a_eig
        assert np.all(sp.plus.coeffs[a > 10.0 - 3.0] == 0.0)
        assert np.all(sp.mid.coeffs[(a <= 7.0) | (a >= 13.0)] == 0.0)
        assert np.all(sp.minus.coeffs[a < 13.0] == 0.0)

    @settings(deadline=None, max_examples=30)
    @given(N=st.integers(2, 15), seed=st.integers(0, 30))
    def test_idempotence(self, N, seed):
        g = SpectralGrid(4)
        try:
            mask = projector_mask(g, "low", float(N))
        except GridTooSmallError:
            return
        u = random_field(g, rng_for(seed))
        once = project(u, "low", float(N))
        twice = project(once, "low", float(N))
        assert np.array_equal(once.coeffs, twice.coeffs)
        assert np.all(once.coeffs[~mask] == 0.0)

    def test_band_beyond_cube_rejected(self):
        u = random_field(SpectralGrid(2), rng_for(4))
        with pytest.raises(GridTooSmallError):
            project(u, "mid", 10.0, 2.0)


# ---------------------------------------------------------------------------
# propagator


class TestPropagator:
    def test_zero_mode_closed_form(self):
        g = SpectralGrid(2)
        out = apply_linear_propagator(g.basis_field(0, 0, 0), 1.0, 1.0)
        assert out.coefficient(0, 0, 0) == pytest.approx(
            np.exp(-(1.0 + 1j)), rel=1e-15)

    def test_t_zero_is_identity(self):
        u = random_field(SpectralGrid(3), rng_for(5))
        out = apply_linear_propagator(u, 0.0, 2.0)
        assert np.array_equal(out.coeffs, u.coeffs)

    def test_decay_bound(self):
        g = SpectralGrid(3)
        u = random_field(g, rng_for(6))
        t = 0.7
        out = apply_linear_propagator(u, t, 2.0)
        assert sobolev_norm(out) < np.exp(-t) * sobolev_norm(u)
        # equality case: data on the zero mode only (a_eig = 1)
        e0 = g.basis_field(0, 0, 0, 2.5 - 1.0j)
        out0 = apply_linear_propagator(e0, t, 2.0)
        assert sobolev_norm(out0) == pytest.approx(
            np.exp(-t) * sobolev_norm(e0), rel=1e-13)

    def test_semigroup(self):
        u = random_field(SpectralGrid(3), rng_for(8))
        a = apply_linear_propagator(apply_linear_propagator(u, 0.3, 1.5),
                                    0.45, 1.5)
        b = apply_linear_propagator(u, 0.75, 1.5)
        denom = np.max(np.abs(b.coeffs)) or 1.0
        assert np.max(np.abs(a.coeffs - b.coeffs)) / denom <= 1e-13


# ---------------------------------------------------------------------------
# grid transforms


class TestGridTransforms:
    def test_zero_mode_gives_constant_grid(self):
        g = SpectralGrid(2)
        c = 1.25 - 0.5j
        vals = to_grid(g.basis_field(0, 0, 0, c))
        assert np.max(np.abs(vals - c)) <= 1e-14

    def test_roundtrip(self):
        u = random_field(SpectralGrid(4), rng_for(9))
        back = from_grid(to_grid(u), u.grid)
        assert np.max(np.abs(back.coeffs - u.coeffs)) <= 1e-13

    def test_basis_mode_has_unit_modulus(self):
        g = SpectralGrid(3)
        vals = to_grid(g.basis_field(2, -1, 0))
        assert np.max(np.abs(np.abs(vals) - 1.0)) <= 1e-13

    def test_conj_field_matches_grid_conjugate(self):
        u = random_field(SpectralGrid(3), rng_for(10))
        lhs = to_grid(conj_field(u))
        rhs = np.conj(to_grid(u))
        assert np.max(np.abs(lhs - rhs)) <= 1e-13

    def test_dealias_zeroes_top_third(self):
        g = SpectralGrid(6)
        u = random_field(g, rng_for(11))
        d = dealias(u)
        kmax = int(2 * g.radius / 3)
        k = np.arange(-g.radius, g.radius + 1)
        drop = (np.abs(k)[:, None, None] > kmax) \
            | (np.abs(k)[None, :, None] > kmax) \
            | (np.abs(k)[None, None, :] > kmax)
        assert np.all(d.coeffs[drop] == 0.0)
        assert np.array_equal(d.coeffs[~drop], u.coeffs[~drop])
