"""Unit tests for the spectral field layer.

Covers the block storage contract (reality symmetry, excluded mean mode),
the sigma-norm scale, Leray projection, the Stokes multiplier, the exact
convolution behind the trilinear form, and the serialization round trips.
"""

import numpy as np
import pytest

from nsjump.spectral import (
    SpaceScale,
    SpectralField,
    advect,
    cutoff_theta,
    embed,
    field_from_csv,
    field_from_json,
    field_invariant_errors,
    field_to_csv,
    field_to_json,
    from_modes,
    inner_h,
    leray_project,
    nonlinearity_Bn,
    norm,
    project_Pn,
    random_solenoidal_field,
    stokes_An,
    stokes_apply,
    trilinear_b,
    trilinear_b_quadrature,
    zero_field,
    _advect_fallback,
)


class TestSpaceScale:
    """Exponent bookkeeping for the H, V, V_s, U, U' ladder."""

    def test_default_exponents(self):
        sc = SpaceScale()
        assert sc.s == 2.5
        assert sc.sigma_h == 0.0
        assert sc.sigma_v == 1.0
        assert sc.sigma_vs == 2.5
        assert sc.sigma_u == 3.5
        assert sc.sigma_u_prime == -3.5

    def test_requires_s_above_two(self):
        with pytest.raises(ValueError, match="s > 2"):
            SpaceScale(s=2.0)


class TestSpectralField:
    """Storage contract of the amplitude block."""

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            SpectralField(np.zeros((2, 5, 7), dtype=complex), 2)
        with pytest.raises(ValueError):
            SpectralField(np.zeros((2, 3, 3), dtype=complex), 0)

    def test_mean_mode_excluded(self):
        with pytest.raises(ValueError, match="mean mode"):
            from_modes({(0, 0): (1.0, 0.0)}, 2)

    def test_mirror_fills_conjugate_partner(self):
        u = from_modes({(1, 2): (1.0 + 2.0j, -0.5j)}, 3)
        np.testing.assert_allclose(u.get((-1, -2)), np.conj(u.get((1, 2))))

    def test_get_outside_block_is_zero(self):
        u = from_modes({(1, 0): (0.0, 1.0)}, 2)
        assert np.all(u.get((5, 5)) == 0.0)

    def test_arithmetic(self):
        u = from_modes({(1, 0): (0.0, 1.0)}, 2)
        v = from_modes({(0, 1): (1.0, 0.0)}, 2)
        w = 2.0 * u + v - u
        np.testing.assert_allclose(w.get((1, 0)), [0.0, 1.0])
        np.testing.assert_allclose(w.get((0, 1)), [1.0, 0.0])
        np.testing.assert_allclose((-w).amp, -w.amp)

    def test_modes_iteration_skips_zeros(self):
        u = from_modes({(2, 1): (1.0, 0.0)}, 4)
        listed = dict(u.modes())
        assert set(listed) == {(2, 1), (-2, -1)}


class TestNormsAndInner:
    """Parseval normalization: a unit mode plus its partner has |u|_H = sqrt(2)."""

    def test_single_mode_h_norm(self):
        u = from_modes({(1, 0): (0.0, 1.0)}, 4)
        assert norm(u, 0.0) == pytest.approx(np.sqrt(2.0), rel=1e-14)

    def test_sigma_scaling_lambda(self):
        # lambda at k=(1,0) is 1 + 1 = 2, so each sigma step doubles the square.
        u = from_modes({(1, 0): (0.0, 1.0)}, 4)
        for sigma in (-3.5, -1.0, 0.0, 1.0, 2.5, 3.5):
            expected = np.sqrt(2.0) * 2.0 ** (sigma / 2.0)
            assert norm(u, sigma) == pytest.approx(expected, rel=1e-13)

    def test_v_norm_matches_gradient_identity(self):
        # norm(u,1)^2 = |u|_H^2 + |grad u|_H^2 since lambda = 1 + |k|^2.
        rng = np.random.default_rng(5)
        u = random_solenoidal_field(5, rng)
        grad_sq = sum(
            float(np.sum((k[0] ** 2 + k[1] ** 2) * np.abs(vec) ** 2))
            for k, vec in u.modes()
        )
        assert norm(u, 1.0) ** 2 == pytest.approx(norm(u, 0.0) ** 2 + grad_sq, rel=1e-12)

    def test_inner_h_is_real_and_polarizes(self):
        rng = np.random.default_rng(6)
        u = random_solenoidal_field(4, rng)
        v = random_solenoidal_field(4, rng)
        lhs = inner_h(u, v)
        rhs = 0.25 * (norm(u + v, 0.0) ** 2 - norm(u - v, 0.0) ** 2)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_inner_h_mixed_cutoffs(self):
        u = from_modes({(1, 0): (0.0, 1.0)}, 2)
        v = from_modes({(1, 0): (0.0, 1.0)}, 6)
        assert inner_h(u, v) == pytest.approx(2.0, rel=1e-14)


class TestProjections:
    def test_leray_kills_gradient_part(self):
        """After projection every mode satisfies k . u_k = 0."""
        raw = from_modes({(1, 2): (1.0 + 1.0j, 0.5), (3, -1): (0.2, 0.9j)}, 4)
        u = leray_project(raw)
        for (k1, k2), vec in u.modes():
            assert abs(k1 * vec[0] + k2 * vec[1]) < 1e-14

    def test_leray_idempotent_and_orthogonal(self):
        raw = from_modes({(2, 1): (1.0, 1.0j)}, 3)
        u = leray_project(raw)
        again = leray_project(u)
        np.testing.assert_allclose(again.amp, u.amp, atol=1e-15)
        assert inner_h(raw - u, u) == pytest.approx(0.0, abs=1e-14)

    def test_project_pn_truncates(self):
        u = from_modes({(1, 0): (0.0, 1.0), (3, 3): (0.0, 0.5)}, 4)
        v = project_Pn(u, 2)
        assert v.cutoff == 2
        np.testing.assert_allclose(v.get((1, 0)), [0.0, 1.0])
        assert np.all(v.get((3, 3)) == 0.0)

    def test_project_pn_is_h_orthogonal(self):
        rng = np.random.default_rng(7)
        u = random_solenoidal_field(6, rng)
        v = project_Pn(u, 3)
        assert inner_h(u - embed(v, 6), embed(v, 6)) == pytest.approx(0.0, abs=1e-12)

    def test_stokes_multiplier(self):
        u = from_modes({(2, 1): (1.0, -2.0)}, 4)
        w = stokes_apply(u)
        np.testing.assert_allclose(w.get((2, 1)), 5.0 * u.get((2, 1)))
        w2 = stokes_An(embed(u, 8), 4)
        assert w2.cutoff == 4
        np.testing.assert_allclose(w2.get((2, 1)), 5.0 * u.get((2, 1)))


class TestCutoffTheta:
    """The radial cutoff is 1 up to n, 0 beyond n+1, and monotone between."""

    def test_plateau_values(self):
        for n in (1, 3, 8):
            assert cutoff_theta(n, 0.0) == 1.0
            assert cutoff_theta(n, float(n)) == 1.0
            assert cutoff_theta(n, n + 1.0) == 0.0
            assert cutoff_theta(n, n + 7.0) == 0.0
            assert cutoff_theta(n, n + 0.5) == pytest.approx(0.5, abs=1e-14)

    def test_monotone_on_transition(self):
        r = np.linspace(3.0, 4.0, 200)
        vals = cutoff_theta(3, r)
        assert np.all(np.diff(vals) <= 1e-12)

    def test_vector_input(self):
        out = cutoff_theta(2, np.array([0.0, 2.5, 9.0]))
        np.testing.assert_allclose(out, [1.0, 0.5, 0.0], atol=1e-14)


class TestAdvection:
    """The jitted convolution against the scipy fallback and the b identities."""

    def test_kernel_matches_fallback(self):
        rng = np.random.default_rng(11)
        for n in (2, 4, 8):
            u = random_solenoidal_field(n, rng)
            w = random_solenoidal_field(n, rng)
            got = advect(u, w).amp
            ref = _advect_fallback(u.amp, w.amp, n)
            assert np.max(np.abs(got - ref)) < 1e-13

    def test_trilinear_cancellation(self):
        """b(u, v, v) = 0 to round-off for divergence-free u."""
        rng = np.random.default_rng(12)
        for _ in range(25):
            u = random_solenoidal_field(4, rng)
            v = random_solenoidal_field(4, rng)
            scale = norm(u, 0.0) * norm(v, 1.0) ** 2
            assert abs(trilinear_b(u, v, v)) <= 1e-12 * max(scale, 1.0)

    def test_trilinear_antisymmetry(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            u = random_solenoidal_field(4, rng)
            v = random_solenoidal_field(4, rng)
            w = random_solenoidal_field(4, rng)
            s = abs(trilinear_b(u, w, v)) + abs(trilinear_b(u, v, w))
            assert abs(trilinear_b(u, w, v) + trilinear_b(u, v, w)) <= 1e-12 * max(s, 1.0)

    def test_quadrature_oracle(self):
        """Real-space quadrature agrees with the spectral convolution."""
        rng = np.random.default_rng(14)
        for _ in range(10):
            u = random_solenoidal_field(3, rng)
            v = random_solenoidal_field(3, rng)
            w = random_solenoidal_field(3, rng)
            a = trilinear_b(u, v, w)
            b = trilinear_b_quadrature(u, v, w)
            assert a == pytest.approx(b, abs=1e-11 * (1.0 + abs(a)))

    def test_nonlinearity_truncation(self):
        rng = np.random.default_rng(15)
        u = random_solenoidal_field(3, rng)
        bn = nonlinearity_Bn(u, 2)
        assert bn.cutoff == 2
        full = leray_project(advect(u, u))
        np.testing.assert_allclose(bn.amp, project_Pn(full, 2).amp, atol=1e-13)


class TestRandomField:
    def test_normalization_and_invariants(self):
        rng = np.random.default_rng(21)
        u = random_solenoidal_field(6, rng, norm_h=2.5)
        assert norm(u, 0.0) == pytest.approx(2.5, rel=1e-12)
        errs = field_invariant_errors(u)
        assert errs["reality"] < 1e-13
        assert errs["divergence"] < 1e-13
        assert errs["mean_mode"] == 0.0

    def test_seeded_reproducibility(self):
        u = random_solenoidal_field(4, np.random.default_rng(99))
        v = random_solenoidal_field(4, np.random.default_rng(99))
        np.testing.assert_array_equal(u.amp, v.amp)


class TestSerialization:
    def test_json_round_trip_exact(self):
        rng = np.random.default_rng(31)
        u = random_solenoidal_field(5, rng)
        v = field_from_json(field_to_json(u))
        assert v.cutoff == u.cutoff
        np.testing.assert_array_equal(v.amp, u.amp)

    def test_csv_round_trip_exact(self):
        rng = np.random.default_rng(32)
        u = random_solenoidal_field(3, rng)
        v = field_from_csv(field_to_csv(u))
        np.testing.assert_array_equal(v.amp, u.amp)

    def test_zero_field_round_trip(self):
        z = zero_field(2)
        v = field_from_json(field_to_json(z))
        assert norm(v, 0.0) == 0.0


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
