"""Unit tests for martingale extraction, QV estimators, and the test harness.

Strategy: exact structural checks on handcrafted paths (flow switched off so
jumps are isolated), deterministic convergence checks on a fixed jump train,
and small CLT-scale Monte Carlo for the mean-zero properties with fixed seeds
and three-standard-error tolerances.
"""

import numpy as np
import pytest

from nsjump.jumps import AnnulusSet, LevyMeasureSpec, MarkedJumpTrain, derive_rng, sample_train
from nsjump.martingales import (
    ScalarCadlagPath,
    angle_bracket_check,
    build_NA,
    build_Nak,
    build_Nphi,
    default_checkpoints,
    extract_Mn,
    frozen_angle_bracket_check,
    jump_square_sum,
    martingale_test,
    mn_construction_residual,
    pair_scalar,
    purely_discontinuous_budget,
    purely_discontinuous_residual,
    quadratic_variation,
    rough_control_path,
    smoothed_indicator,
    _level_indices,
)
from nsjump.noise import NoiseCoefficient
from nsjump.sde import GalerkinConfig, integrate
from nsjump.spectral import from_modes, inner_h, norm, random_solenoidal_field

ANNULUS = LevyMeasureSpec(rate=5.0)
LINEAR = NoiseCoefficient()


def flowless_config(u0, levy=ANNULUS, horizon=1.0, dt_max=0.25):
    """Stokes and nonlinearity off: the state only moves at jumps."""
    return GalerkinConfig(n=u0.cutoff, u0=u0, levy=levy, coef=LINEAR,
                          horizon=horizon, dt_max=dt_max,
                          enable_stokes=False, enable_nonlinearity=False)


class TestScalarCadlagPath:
    @pytest.fixture
    def step_path(self):
        """One jump of size 2 at t = 0.5, linear ramp elsewhere off."""
        grid = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        right = np.array([0.0, 0.0, 2.0, 2.0, 2.0])
        left = np.array([0.0, 0.0, 0.0, 2.0, 2.0])
        flags = np.array([False, False, True, False, False])
        return ScalarCadlagPath(grid=grid, right=right, left=left, jump_flags=flags)

    def test_right_continuity_at_jump(self, step_path):
        assert step_path.value(0.5) == 2.0
        assert step_path.value(0.499999) == pytest.approx(0.0, abs=1e-4)

    def test_interpolation_uses_left_limit(self, step_path):
        # inside (0.25, 0.5) the path interpolates toward the left limit 0
        assert step_path.value(0.4) == 0.0

    def test_checkpoints_and_jumps(self, step_path):
        np.testing.assert_allclose(
            step_path.checkpoint_values([0.0, 0.5, 1.0]), [0.0, 2.0, 2.0])
        np.testing.assert_allclose(step_path.jump_sizes(), [2.0])

    def test_clamping_outside_grid(self, step_path):
        assert step_path.value(-1.0) == 0.0
        assert step_path.value(2.0) == 2.0


class TestExtractMn:
    def test_no_jumps_gives_zero_martingale(self):
        u0 = random_solenoidal_field(2, np.random.default_rng(1), norm_h=1.0)
        cfg = GalerkinConfig(n=2, u0=u0, levy=ANNULUS, coef=LINEAR,
                             horizon=0.2, dt_max=0.02)
        path = integrate(cfg, train=MarkedJumpTrain(0.2, np.empty(0), np.empty(0)))
        m = extract_Mn(path, cfg, method="jump_sum")
        assert all(norm(u, 0.0) == 0.0 for u in m.states_right)

    def test_starts_at_zero_both_methods(self):
        u0 = random_solenoidal_field(2, np.random.default_rng(2), norm_h=1.0)
        cfg = GalerkinConfig(n=2, u0=u0, levy=ANNULUS, coef=LINEAR,
                             horizon=0.3, dt_max=0.05, seed=3)
        path = integrate(cfg)
        for method in ("reconstruction", "jump_sum"):
            m = extract_Mn(path, cfg, method=method)
            assert norm(m.states_right[0], 0.0) == 0.0

    def test_jump_sum_piecewise_constant_for_mean_zero_marks(self):
        """Annulus marks have E[y] = 0, so M moves only at jumps."""
        u0 = random_solenoidal_field(2, np.random.default_rng(4), norm_h=1.0)
        cfg = GalerkinConfig(n=2, u0=u0, levy=ANNULUS, coef=LINEAR,
                             horizon=0.4, dt_max=0.05, seed=5)
        path = integrate(cfg)
        m = extract_Mn(path, cfg, method="jump_sum")
        for i in range(1, len(m.grid)):
            if not m.jump_flags[i]:
                assert norm(m.states_right[i] - m.states_right[i - 1], 0.0) < 1e-14

    def test_jumps_match_state_jumps(self):
        u0 = random_solenoidal_field(2, np.random.default_rng(6), norm_h=1.0)
        cfg = GalerkinConfig(n=2, u0=u0, levy=LevyMeasureSpec(rate=8.0),
                             coef=LINEAR, horizon=0.5, dt_max=0.05, seed=7)
        path = integrate(cfg)
        m = extract_Mn(path, cfg, method="jump_sum")
        for i in path.jump_indices():
            du = path.states_right[i] - path.states_left[i]
            dm = m.states_right[i] - m.states_left[i]
            assert norm(du - dm, 0.0) < 1e-13

    def test_construction_agreement_second_order(self):
        """The reconstruction differs from the jump sum by O(dt_max^2)."""
        u0 = random_solenoidal_field(2, np.random.default_rng(8), norm_h=1.0)
        levy = LevyMeasureSpec(rate=4.0, mark_law="uniform_interval", lo=0.1, hi=0.5)
        train = sample_train(levy, 0.25, rng=derive_rng(81))
        resids = []
        for dt in (4e-3, 2e-3, 1e-3):
            cfg = GalerkinConfig(n=2, u0=u0, levy=levy, coef=LINEAR,
                                 horizon=0.25, dt_max=dt)
            path = integrate(cfg, train=train)
            resids.append(mn_construction_residual(path, cfg))
        assert resids[0] / resids[1] > 3.0
        assert resids[1] / resids[2] > 3.0

    def test_unknown_method_rejected(self):
        u0 = from_modes({(1, 0): (0.0, 1.0)}, 2)
        cfg = flowless_config(u0)
        path = integrate(cfg, train=MarkedJumpTrain(1.0, np.empty(0), np.empty(0)))
        with pytest.raises(ValueError, match="extraction method"):
            extract_Mn(path, cfg, method="spline")


class TestQuadraticVariation:
    def test_level_indices_keep_endpoint(self):
        idx = _level_indices(11, 2)
        assert idx[0] == 0 and idx[-1] == 10
        np.testing.assert_array_equal(idx, [0, 4, 8, 10])

    def test_pure_jump_path_residual_zero(self):
        """Constant between jumps: QV at level 0 is exactly the jump sum."""
        grid = np.linspace(0.0, 1.0, 9)
        right = np.array([0.0, 0.0, 1.0, 1.0, 1.0, -0.5, -0.5, -0.5, -0.5])
        left = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, -0.5, -0.5, -0.5])
        flags = np.zeros(9, dtype=bool)
        flags[[2, 5]] = True
        sp = ScalarCadlagPath(grid=grid, right=right, left=left, jump_flags=flags)
        assert jump_square_sum(sp) == pytest.approx(1.0 + 1.5 ** 2)
        assert quadratic_variation(sp, level=0) == pytest.approx(1.0 + 1.5 ** 2)
        assert purely_discontinuous_residual(sp, level=0) == 0.0

    def test_jump_square_sum_time_window(self):
        grid = np.linspace(0.0, 1.0, 5)
        right = np.array([0.0, 1.0, 1.0, 3.0, 3.0])
        left = np.array([0.0, 0.0, 1.0, 1.0, 3.0])
        flags = np.array([False, True, False, True, False])
        sp = ScalarCadlagPath(grid=grid, right=right, left=left, jump_flags=flags)
        assert jump_square_sum(sp, t=0.3) == 1.0
        assert jump_square_sum(sp) == 5.0

    def test_control_path_keeps_order_one_qv(self):
        """The +-sqrt(dt) walk has QV exactly T at level 0 and stays away
        from zero at the coarser levels."""
        sp = rough_control_path(0.5, 256, seed=90)
        assert quadratic_variation(sp, 0) == pytest.approx(0.5, rel=1e-12)
        assert purely_discontinuous_residual(sp, 0) == pytest.approx(0.5, rel=1e-12)
        for level in (1, 2, 3):
            assert purely_discontinuous_residual(sp, level) > 0.1

    def test_budget_formula(self):
        grid = np.array([0.0, 0.5, 1.0])
        right = np.array([0.0, 2.0, 2.0])
        left = np.array([0.0, 0.0, 2.0])
        flags = np.array([False, True, False])
        sp = ScalarCadlagPath(grid=grid, right=right, left=left, jump_flags=flags)
        # rate 3, T 1, total jump variation 2, jss 4
        expected = 3.0 * (3.0 * 1.0 + 2.0 * 2.0) / (1.0 + 4.0)
        assert purely_discontinuous_budget(sp, 3.0, 1.0) == pytest.approx(expected)


class TestSmoothedIndicator:
    SET_A = AnnulusSet(0.5, 1.5)

    def test_one_on_the_annulus(self):
        for r in (0.5, 1.0, 1.5):
            assert smoothed_indicator(3, self.SET_A, r) == 1.0

    def test_plateau_width_shrinks_with_k(self):
        # a_k stays 1 while k * rho / alpha <= 1/2
        assert smoothed_indicator(1, self.SET_A, 0.3) == 1.0  # rho = 0.2 < 0.25
        assert smoothed_indicator(4, self.SET_A, 0.3) < 1.0

    def test_support_inside_half_alpha_for_k2(self):
        """For k >= 2 the approximation vanishes on {|v| <= alpha/2}."""
        for r in (0.0, 0.1, 0.25):
            assert smoothed_indicator(2, self.SET_A, r) == 0.0
            assert smoothed_indicator(5, self.SET_A, r) == 0.0

    def test_pointwise_decreasing_in_k(self):
        rs = np.linspace(0.0, 3.0, 301)
        prev = smoothed_indicator(1, self.SET_A, rs)
        for k in (2, 3, 5, 9):
            cur = smoothed_indicator(k, self.SET_A, rs)
            assert np.all(cur <= prev + 1e-14)
            prev = cur

    def test_converges_to_indicator(self):
        rs = np.array([0.2, 0.49, 0.51, 1.0, 1.51, 2.5])
        exact = np.array([(1.0 if self.SET_A.contains_norm(r) else 0.0) for r in rs])
        approx = smoothed_indicator(200, self.SET_A, rs)
        np.testing.assert_allclose(approx, exact, atol=1e-12)

    def test_field_input_returns_float(self):
        u = from_modes({(1, 0): (0.0, 1.0)}, 2)
        val = smoothed_indicator(2, AnnulusSet(1e-6), u)
        assert isinstance(val, float)
        assert val == 1.0

    def test_k_validation(self):
        with pytest.raises(ValueError, match="k must be"):
            smoothed_indicator(0, self.SET_A, 1.0)


class TestCompensatedCounts:
    """build_NA / build_Nak against a flowless path with explicit jumps."""

    @pytest.fixture
    def flowless(self):
        u0 = from_modes({(1, 0): (0.0, 1.0)}, 2)
        cfg = flowless_config(u0, horizon=1.0, dt_max=0.125)
        train = MarkedJumpTrain(1.0, np.array([0.25, 0.5, 0.75]),
                                np.array([0.8, -0.6, 0.9]))
        return cfg, integrate(cfg, train=train)

    def test_raw_counts_with_wide_annulus(self, flowless):
        cfg, path = flowless
        wide = AnnulusSet(1e-9)
        raw = build_NA(path, cfg, wide, compensated=False)
        assert raw.right[-1] == 3.0
        assert np.all(np.diff(raw.right) >= 0.0)

    def test_compensator_subtracts_increasing_process(self, flowless):
        cfg, path = flowless
        wide = AnnulusSet(1e-9)
        raw = build_NA(path, cfg, wide, compensated=False)
        comp = build_NA(path, cfg, wide, compensated=True)
        drift = raw.right - comp.right
        assert np.all(np.diff(drift) >= -1e-14)
        assert drift[0] == 0.0
        assert drift[-1] > 0.0

    def test_narrow_annulus_counts_nothing(self, flowless):
        cfg, path = flowless
        narrow = AnnulusSet(1e6)
        raw = build_NA(path, cfg, narrow, compensated=False)
        assert np.all(raw.right == 0.0)
        assert not np.any(raw.jump_flags)

    def test_nak_dominates_sharp_count(self, flowless):
        """a_k >= 1_A pointwise, so the smoothed jump sum dominates the sharp
        count; the compensated process itself must still end near zero."""
        cfg, path = flowless
        jump_norms = [norm(path.states_right[i] - path.states_left[i],
                           cfg.scale.sigma_u_prime)
                      for i in path.jump_indices()]
        mid = float(np.median(jump_norms))
        set_a = AnnulusSet(0.8 * mid, 1.2 * mid)
        sharp_hits = sum(1.0 for r in jump_norms if set_a.contains_norm(r))
        smooth_hits = sum(smoothed_indicator(2, set_a, r) for r in jump_norms)
        assert smooth_hits >= sharp_hits - 1e-14
        nak = build_Nak(path, cfg, k=2, set_a=set_a)
        raw = build_NA(path, cfg, set_a, compensated=False)
        comp_total = smooth_hits - nak.right[-1]
        assert comp_total > 0.0
        assert raw.right[-1] == sharp_hits


class TestMartingaleTest:
    def test_random_walk_passes(self):
        """Mean-zero iid increments across checkpoints must pass."""
        rng = derive_rng(300)
        inc = rng.standard_normal((2000, 4))
        samples = np.concatenate([np.zeros((2000, 1)), np.cumsum(inc, axis=1)], axis=1)
        ckpts = default_checkpoints(1.0)
        rep = martingale_test(samples, ckpts, "walk", "test", seed=300)
        assert rep.verdict == "PASS"
        assert rep.details["n_statistics"] == 1 + 3 * 5
        assert rep.details["z_threshold"] > 3.0

    def test_drifted_walk_fails(self):
        rng = derive_rng(301)
        inc = rng.standard_normal((2000, 4)) + 0.5
        samples = np.concatenate([np.zeros((2000, 1)), np.cumsum(inc, axis=1)], axis=1)
        rep = martingale_test(samples, default_checkpoints(1.0), "drift", "test", 301)
        assert rep.verdict == "FAIL"
        assert rep.details["worst"]["z"] > rep.details["z_threshold"]

    def test_checkpoint_mismatch_rejected(self):
        with pytest.raises(ValueError, match="checkpoint"):
            martingale_test(np.zeros((10, 3)), [0.0, 1.0], "x", "y", 0)

    def test_deterministic_zero_passes(self):
        samples = np.zeros((50, 5))
        rep = martingale_test(samples, default_checkpoints(2.0), "zero", "test", 0)
        assert rep.verdict == "PASS"
        assert rep.estimate == 0.0


class TestNphiMeanZero:
    def test_small_ensemble_mean_within_3se(self):
        """E N_phi(T) = 0: checked at CLT scale on a coarse system."""
        u0 = random_solenoidal_field(2, np.random.default_rng(31), norm_h=1.0)
        cfg = GalerkinConfig(n=2, u0=u0, levy=ANNULUS, coef=LINEAR,
                             horizon=0.5, dt_max=0.02)
        phi = from_modes({(1, 0): (0.0, 1.0)}, 2)
        vals = []
        for i in range(300):
            train = sample_train(cfg.levy, cfg.horizon, rng=derive_rng(32, i))
            path = integrate(cfg, train=train)
            vals.append(build_Nphi(path, cfg, phi).right[-1])
        vals = np.asarray(vals)
        se = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(vals.mean()) < 3 * se


class TestAngleBrackets:
    def test_frozen_closed_form(self):
        u0 = from_modes({(1, 0): (0.0, 1.0)}, 2)
        cfg = flowless_config(u0, levy=LevyMeasureSpec(rate=3.0), horizon=0.5)
        phi = from_modes({(1, 0): (0.0, 0.5)}, 2)
        rep = frozen_angle_bracket_check(u0, cfg, phi, n_paths=2000, seed=44)
        c = inner_h(u0, phi)
        expected = 3.0 * cfg.levy.moment(2.0) * c ** 2 * 0.5
        assert rep.details["closed_form"] == pytest.approx(expected, rel=1e-12)
        assert rep.verdict == "PASS"

    def test_full_nonlinear_overlap(self):
        u0 = random_solenoidal_field(2, np.random.default_rng(46), norm_h=1.0)
        cfg = GalerkinConfig(n=2, u0=u0, levy=ANNULUS, coef=LINEAR,
                             horizon=0.4, dt_max=0.02)
        phi = from_modes({(1, 0): (0.0, 1.0)}, 2)
        rep = angle_bracket_check(cfg, phi, n_paths=250, seed=47)
        assert rep.verdict == "PASS"
        assert rep.details["bracket_mean"] > 0.0


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
