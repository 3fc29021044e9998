"""Martingale extraction and path statistics for verification.

Everything here consumes trajectories produced by the integrator and builds
the processes whose martingale property, quadratic variation, or compensator
identities are then checked by Monte Carlo. The processes come out as scalar
cadlag paths on the same jump-adapted grid as the trajectory, with the
absolutely continuous part represented by trapezoid quadrature between nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from . import spectral
from .jumps import (AnnulusSet, counting_compensator, cumulative_cell_trapezoid,
                    derive_rng, sample_train, smoothed_counting_compensator)
from .noise import apply_F, compensator_drift, jump_scale, lipschitz_constant
from .reporting import Z_99, EnsembleReport
from .sde import CadlagPath, GalerkinConfig, integrate
from .spectral import SpaceScale, SpectralField


def default_checkpoints(horizon: float) -> np.ndarray:
    return np.asarray([0.0, 0.25, 0.5, 0.75, 1.0]) * horizon


@dataclass
class ScalarCadlagPath:
    """Piecewise-continuous scalar path with jumps only at flagged nodes."""

    grid: np.ndarray
    right: np.ndarray
    left: np.ndarray
    jump_flags: np.ndarray

    def value(self, t: float) -> float:
        """Right-continuous evaluation, linear within continuity cells."""
        g = self.grid
        if t <= g[0]:
            return float(self.right[0])
        if t >= g[-1]:
            return float(self.right[-1])
        i = int(np.searchsorted(g, t, side="right") - 1)
        if t == g[i]:
            return float(self.right[i])
        w = (t - g[i]) / (g[i + 1] - g[i])
        return float((1.0 - w) * self.right[i] + w * self.left[i + 1])

    def checkpoint_values(self, checkpoints) -> np.ndarray:
        return np.asarray([self.value(float(t)) for t in checkpoints])

    def jump_sizes(self) -> np.ndarray:
        return (self.right - self.left)[self.jump_flags]


def _cumtrap_amps(grid: np.ndarray, rights: list[SpectralField],
                  lefts: list[SpectralField]) -> np.ndarray:
    """Field-valued cumulative trapezoid; returns stacked amplitude arrays."""
    ar = np.stack([u.amp for u in rights])
    al = np.stack([u.amp for u in lefts])
    h = np.diff(grid).reshape(-1, 1, 1, 1)
    cells = 0.5 * h * (ar[:-1] + al[1:])
    cum = np.zeros_like(ar)
    np.cumsum(cells, axis=0, out=cum[1:])
    return cum


def flow_operator_fields(path: CadlagPath, config: GalerkinConfig
                         ) -> tuple[list[SpectralField], list[SpectralField]]:
    """A_n u + B_n(u) - P_n f(t) at every node, right value and left limit.

    Off jump nodes the two states coincide, so the operator is evaluated once.
    """
    n, scale = path.cutoff, config.scale

    def op(u: SpectralField, t: float) -> SpectralField:
        g = spectral.zero_field(n)
        if config.enable_stokes:
            g = g + spectral.stokes_An(u, n)
        if config.enable_nonlinearity:
            g = g + spectral.nonlinearity_Bn(u, n, scale)
        if config.forcing is not None:
            g = g - spectral.project_Pn(spectral.leray_project(config.forcing(t)), n)
        return g

    rights, lefts = [], []
    for i, t in enumerate(path.grid):
        gl = op(path.states_left[i], float(t))
        gr = op(path.states_right[i], float(t)) if path.jump_flags[i] else gl
        rights.append(gr)
        lefts.append(gl)
    return rights, lefts


def extract_Mn(path: CadlagPath, config: GalerkinConfig,
               method: str = "reconstruction",
               ops: tuple[list[SpectralField], list[SpectralField]] | None = None
               ) -> CadlagPath:
    """Martingale part of the trajectory, as a field-valued cadlag path.

    reconstruction:  M(t) = u(t) - u(0) + int_0^t (A_n u + B_n(u) - P_n f) ds
    jump_sum:        M(t) = sum_{tau <= t} (u(tau) - u(tau-)) - int_0^t drift ds

    Both represent the compensated jump integral; they differ by the time
    quadrature error of the flow, which vanishes at second order in dt_max.
    """
    grid, n = path.grid, path.cutoff
    u0 = path.states_right[0]
    if method == "reconstruction":
        if ops is None:
            ops = flow_operator_fields(path, config)
        cum = _cumtrap_amps(grid, ops[0], ops[1])
        m_right = [SpectralField(u.amp - u0.amp + cum[i], n)
                   for i, u in enumerate(path.states_right)]
        m_left = [SpectralField(u.amp - u0.amp + cum[i], n)
                  for i, u in enumerate(path.states_left)]
    elif method == "jump_sum":
        deltas = np.zeros((len(grid),) + u0.amp.shape, dtype=complex)
        for i in np.flatnonzero(path.jump_flags):
            deltas[i] = path.states_right[i].amp - path.states_left[i].amp
        jsum = np.cumsum(deltas, axis=0)
        drift_r = [compensator_drift(config.coef, config.levy, float(t), u)
                   for t, u in zip(grid, path.states_right)]
        drift_l = [compensator_drift(config.coef, config.levy, float(t), u)
                   for t, u in zip(grid, path.states_left)]
        dcum = _cumtrap_amps(grid, drift_r, drift_l)
        m_right = [SpectralField(jsum[i] - dcum[i], n) for i in range(len(grid))]
        m_left = [SpectralField(jsum[i] - deltas[i] - dcum[i], n)
                  for i in range(len(grid))]
    else:
        raise ValueError(f"unknown extraction method {method!r}")
    return CadlagPath(grid=grid, states_right=m_right, states_left=m_left,
                      jump_flags=path.jump_flags, jump_marks=path.jump_marks,
                      cutoff=n)


def mn_construction_residual(path: CadlagPath, config: GalerkinConfig) -> float:
    """sup_t |M_rec(t) - M_jump(t)|_H over the grid."""
    m1 = extract_Mn(path, config, "reconstruction")
    m2 = extract_Mn(path, config, "jump_sum")
    return max(spectral.norm(a - b, 0.0)
               for a, b in zip(m1.states_right, m2.states_right))


def pair_scalar(path: CadlagPath, phi: SpectralField) -> ScalarCadlagPath:
    """Scalar path t -> <X(t), phi>_H."""
    right = np.asarray([spectral.inner_h(u, phi) for u in path.states_right])
    left = np.asarray([spectral.inner_h(u, phi) for u in path.states_left])
    return ScalarCadlagPath(grid=path.grid, right=right, left=left,
                            jump_flags=path.jump_flags.copy())


# ---------------------------------------------------------------------------
# quadratic variation and the pure-jump criterion


def _level_indices(n_nodes: int, level: int) -> np.ndarray:
    stride = 2 ** level
    idx = np.arange(0, n_nodes, stride)
    if idx[-1] != n_nodes - 1:
        idx = np.append(idx, n_nodes - 1)
    return idx


def quadratic_variation(spath: ScalarCadlagPath, level: int = 0) -> float:
    """Sum of squared increments over the dyadic index coarsening.

    level 0 is the full path grid; level L keeps every 2**L-th node (plus the
    endpoint). Since jumps sit on grid nodes, level 0 separates all jumps.
    """
    idx = _level_indices(len(spath.grid), level)
    vals = spath.right[idx]
    return float(np.sum(np.diff(vals) ** 2))


def jump_square_sum(spath: ScalarCadlagPath, t: float | None = None) -> float:
    """Sum of squared jump sizes up to t (all of them when t is None)."""
    flags = spath.jump_flags
    if t is not None:
        flags = flags & (spath.grid <= t)
    d = (spath.right - spath.left)[flags]
    return float(np.sum(d ** 2))


def purely_discontinuous_residual(spath: ScalarCadlagPath, level: int = 0) -> float:
    """|QV_level - sum of squared jumps| / (1 + sum of squared jumps)."""
    jss = jump_square_sum(spath)
    return abs(quadratic_variation(spath, level) - jss) / (1.0 + jss)


def purely_discontinuous_budget(spath: ScalarCadlagPath, cont_rate_sup: float,
                                horizon: float) -> float:
    """Mesh-proportional bound on the level-0 residual.

    If the continuous part of the path has derivative bounded by r, a
    partition of mesh d gives |QV - jss| <= d * r * (r*T + 2 * sum |jumps|).
    The returned value is the bracket divided by (1 + jss); multiply by the
    mesh to get the bound.
    """
    jss = jump_square_sum(spath)
    tv = float(np.sum(np.abs(spath.jump_sizes())))
    return cont_rate_sup * (cont_rate_sup * horizon + 2.0 * tv) / (1.0 + jss)


def rough_control_path(horizon: float, n_steps: int, seed: int) -> ScalarCadlagPath:
    """Continuous control with order-one quadratic variation at every level.

    A scaled random walk: increments +-sqrt(dt), no flagged jumps. Its QV at
    dyadic level L concentrates near the horizon, so the pure-jump residual
    stays order one instead of collapsing.
    """
    rng = derive_rng(seed)
    dt = horizon / n_steps
    steps = rng.choice([-1.0, 1.0], size=n_steps) * math.sqrt(dt)
    vals = np.concatenate([[0.0], np.cumsum(steps)])
    grid = np.linspace(0.0, horizon, n_steps + 1)
    return ScalarCadlagPath(grid=grid, right=vals, left=vals.copy(),
                            jump_flags=np.zeros(n_steps + 1, dtype=bool))


# ---------------------------------------------------------------------------
# the compensated test processes


def build_Nphi(path: CadlagPath, config: GalerkinConfig, phi: SpectralField,
               ops: tuple[list[SpectralField], list[SpectralField]] | None = None
               ) -> ScalarCadlagPath:
    """Compensated square of the pairing x(t) = <u(t), phi>_H.

    N(t) = x(t)^2 - x(0)^2 + 2 int_0^t <A_n u + B_n(u) - P_n f, phi> x ds
           - int_0^t C2 <u(s) [+ P_n g], phi>^2 ds,  C2 = rate * E[y^2].
    """
    if ops is None:
        ops = flow_operator_fields(path, config)
    x = pair_scalar(path, phi)
    op_r = np.asarray([spectral.inner_h(g, phi) for g in ops[0]])
    op_l = np.asarray([spectral.inner_h(g, phi) for g in ops[1]])
    c2 = lipschitz_constant(config.coef, config.levy)

    def shifted_pair(states):
        return np.asarray([spectral.inner_h(apply_F(config.coef, float(t), u, 1.0), phi)
                           for t, u in zip(path.grid, states)])

    sp_r = shifted_pair(path.states_right)
    sp_l = shifted_pair(path.states_left)
    cum = cumulative_cell_trapezoid(path.grid, 2.0 * op_r * x.right,
                                    2.0 * op_l * x.left)
    cum -= cumulative_cell_trapezoid(path.grid, c2 * sp_r ** 2, c2 * sp_l ** 2)
    x0sq = x.right[0] ** 2
    return ScalarCadlagPath(grid=path.grid,
                            right=x.right ** 2 - x0sq + cum,
                            left=x.left ** 2 - x0sq + cum,
                            jump_flags=path.jump_flags.copy())


def _jump_norms_u_prime(path: CadlagPath, scale: SpaceScale) -> np.ndarray:
    """|Delta u|_{U'} at every node (zero off jumps)."""
    out = np.zeros(len(path.grid))
    for i in np.flatnonzero(path.jump_flags):
        out[i] = spectral.norm(path.states_right[i] - path.states_left[i],
                               scale.sigma_u_prime)
    return out


def _image_scales(path: CadlagPath, config: GalerkinConfig) -> tuple[np.ndarray, np.ndarray]:
    sig = config.scale.sigma_u_prime
    left = np.asarray([jump_scale(config.coef, u, sig) for u in path.states_left])
    right = left.copy()
    for i in np.flatnonzero(path.jump_flags):
        right[i] = jump_scale(config.coef, path.states_right[i], sig)
    return right, left


def build_NA(path: CadlagPath, config: GalerkinConfig, set_a: AnnulusSet,
             compensated: bool = True) -> ScalarCadlagPath:
    """Jump counts in the annulus minus their exact compensator.

    N(t) = sum_{s<=t} 1_A(Delta u(s)) - int_0^t nu({F(s, u(s), y) in A}) ds.
    With compensated=False only the raw count comes back (a deliberately
    non-martingale control).
    """
    jn = _jump_norms_u_prime(path, config.scale)
    hits = np.where(path.jump_flags,
                    [1.0 if set_a.contains_norm(r) else 0.0 for r in jn], 0.0)
    counts = np.cumsum(hits)
    if compensated:
        sr, sl = _image_scales(path, config)
        comp = counting_compensator(set_a, sr, config.levy, path.grid, None, sl)
    else:
        comp = np.zeros(len(path.grid))
    return ScalarCadlagPath(grid=path.grid, right=counts - comp,
                            left=counts - hits - comp,
                            jump_flags=path.jump_flags & (hits > 0.0))


def smoothed_indicator(k: int, set_a: AnnulusSet, v,
                       space: SpaceScale | None = None):
    """Smooth outer approximation a_k of the annulus indicator.

    a_k(v) = f(k^2 rho(v, A)^2 / alpha^2) with rho the U'-distance to the
    annulus and f a quintic plateau bump: 1 on [0, 1/4], 0 on [3/4, inf).
    Accepts a velocity field or directly a U'-norm value (scalar or array).
    For k >= 2 the support stays inside {|v|_{U'} >= alpha/2}, a_k decreases
    pointwise in k, and a_k -> 1_A.
    """
    if k < 1:
        raise ValueError("smoothing index k must be >= 1")
    if isinstance(v, SpectralField):
        space = space or SpaceScale()
        r = spectral.norm(v, space.sigma_u_prime)
        scalar = True
    else:
        r = np.asarray(v, dtype=float)
        scalar = r.ndim == 0
    arg = (k * set_a.distance_norm(r) / set_a.alpha) ** 2
    t = np.clip((arg - 0.25) / 0.5, 0.0, 1.0)
    val = 1.0 - spectral._smoothstep(t)
    return float(val) if scalar else val


def build_Nak(path: CadlagPath, config: GalerkinConfig, k: int,
              set_a: AnnulusSet, mark_nodes: int = 64) -> ScalarCadlagPath:
    """Compensated sum of the smoothed indicator over jumps.

    N(t) = sum_{s<=t} a_k(Delta u(s)) - int_0^t int a_k(F(s, u(s), y)) nu(dy) ds.
    The mark integral runs over Gauss-Legendre panels on the mark support.
    """
    jn = _jump_norms_u_prime(path, config.scale)
    vals = np.where(path.jump_flags, smoothed_indicator(k, set_a, jn), 0.0)
    counts = np.cumsum(vals)
    sr, sl = _image_scales(path, config)
    comp = smoothed_counting_compensator(
        lambda r: smoothed_indicator(k, set_a, r), sr, config.levy, path.grid,
        None, sl, mark_nodes)
    return ScalarCadlagPath(grid=path.grid, right=counts - comp,
                            left=counts - vals - comp,
                            jump_flags=path.jump_flags & (vals > 0.0))


# ---------------------------------------------------------------------------
# statistical tests


def _functional_bank(values: np.ndarray, j: int) -> list[tuple[str, np.ndarray]]:
    """Bounded adapted functionals of the path up to checkpoint j.

    values has shape (n_paths, n_checkpoints). Entries that would be
    identically zero at j=0 (all paths start at the same value there) are
    dropped rather than producing degenerate statistics.
    """
    bank = [("const", np.ones(values.shape[0]))]
    if j >= 1:
        bank.append(("tanh_now", np.tanh(values[:, j])))
        bank.append(("tanh_prev", np.tanh(values[:, j - 1])))
        bank.append(("clip_runsup", np.clip(np.max(values[:, : j + 1], axis=1),
                                            -1.0, 1.0)))
        bank.append(("tanh_incr", np.tanh(values[:, j] - values[:, j - 1])))
    return bank


def martingale_test(samples: np.ndarray, checkpoints, name: str, anchor: str,
                    seed: int, alpha: float = 0.01) -> EnsembleReport:
    """Orthogonality of increments against bounded adapted functionals.

    For each pair of consecutive checkpoints (s, t) and each functional h of
    the path up to s, the mean of (X(t) - X(s)) * h must be statistically
    zero. The verdict applies a Bonferroni-corrected two-sided level alpha
    over all statistics; the reported estimate is the worst one.
    """
    samples = np.asarray(samples, dtype=float)
    n_paths, n_ckpt = samples.shape
    if n_ckpt != len(checkpoints):
        raise ValueError("checkpoint count mismatch")
    rows = []
    for j in range(n_ckpt - 1):
        inc = samples[:, j + 1] - samples[:, j]
        for hname, h in _functional_bank(samples, j):
            w = inc * h
            mean = float(np.mean(w))
            se = float(np.std(w, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
            rows.append({"window": j, "h": hname, "mean": mean, "se": se})
    m = len(rows)
    z_corr = float(sps.norm.ppf(1.0 - alpha / (2.0 * m)))
    ok = True
    worst, worst_z = rows[0], -1.0
    for r in rows:
        z = abs(r["mean"]) / r["se"] if r["se"] > 0.0 else (0.0 if r["mean"] == 0.0 else math.inf)
        r["z"] = z
        if z > z_corr:
            ok = False
        if z > worst_z:
            worst, worst_z = r, z
    return EnsembleReport(
        name=name, anchor=anchor, estimate=worst["mean"],
        half_width_99=Z_99 * worst["se"], n_paths=n_paths,
        verdict="PASS" if ok else "FAIL", seed=seed,
        details={"n_statistics": m, "z_threshold": z_corr,
                 "worst": {"window": worst["window"], "h": worst["h"],
                           "z": worst_z},
                 "rows": [{k: r[k] for k in ("window", "h", "mean", "se", "z")}
                          for r in rows]})


def angle_bracket_check(config: GalerkinConfig, phi: SpectralField,
                        n_paths: int, seed: int, name: str = "angle_bracket",
                        anchor: str = "angle-bracket") -> EnsembleReport:
    """E <M, phi>(T)^2 against the mean of the predictable bracket.

    The bracket of the pairing is int_0^T C2 <u(s) [+ P_n g], phi>^2 ds with
    C2 = rate * E[y^2]. Verdict PASS when the two 99% intervals overlap.
    """
    c2 = lipschitz_constant(config.coef, config.levy)
    lhs = np.empty(n_paths)
    rhs = np.empty(n_paths)
    for i in range(n_paths):
        train = sample_train(config.levy, config.horizon, rng=derive_rng(seed, i))
        path = integrate(config, train=train)
        m = extract_Mn(path, config, method="jump_sum")
        lhs[i] = pair_scalar(m, phi).right[-1] ** 2
        sp_r = np.asarray([spectral.inner_h(apply_F(config.coef, float(t), u, 1.0), phi)
                           for t, u in zip(path.grid, path.states_right)])
        sp_l = np.asarray([spectral.inner_h(apply_F(config.coef, float(t), u, 1.0), phi)
                           for t, u in zip(path.grid, path.states_left)])
        rhs[i] = cumulative_cell_trapezoid(path.grid, c2 * sp_r ** 2,
                                           c2 * sp_l ** 2)[-1]
    lm, rm = float(np.mean(lhs)), float(np.mean(rhs))
    lh = Z_99 * float(np.std(lhs, ddof=1)) / math.sqrt(n_paths)
    rh = Z_99 * float(np.std(rhs, ddof=1)) / math.sqrt(n_paths)
    ok = abs(lm - rm) <= lh + rh
    return EnsembleReport(
        name=name, anchor=anchor, estimate=lm, half_width_99=lh,
        n_paths=n_paths, verdict="PASS" if ok else "FAIL", seed=seed,
        details={"bracket_mean": rm, "bracket_half_width_99": rh})


def frozen_angle_bracket_check(u0: SpectralField, config: GalerkinConfig,
                               phi: SpectralField, n_paths: int, seed: int,
                               name: str = "angle_bracket_frozen",
                               anchor: str = "angle-bracket") -> EnsembleReport:
    """Closed-form pin on a state frozen at u0.

    With the state held fixed, the compensated pairing is
    M(t) = c * (sum of marks up to t) - c * rate * E[y] * t, c = <u0 [+g], phi>,
    and E M(T)^2 = rate * E[y^2] * c^2 * T exactly. PASS when the sample mean
    sits within three standard errors of that value.
    """
    c = spectral.inner_h(apply_F(config.coef, 0.0, u0, 1.0), phi)
    horizon = config.horizon
    drift = config.levy.rate * config.levy.mean_mark() * c
    closed = lipschitz_constant(config.coef, config.levy) * c ** 2 * horizon
    vals = np.empty(n_paths)
    for i in range(n_paths):
        train = sample_train(config.levy, horizon, rng=derive_rng(seed, i))
        vals[i] = (c * float(np.sum(train.marks)) - drift * horizon) ** 2
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1)) / math.sqrt(n_paths)
    ok = abs(mean - closed) <= 3.0 * se
    return EnsembleReport(
        name=name, anchor=anchor, estimate=mean, half_width_99=Z_99 * se,
        n_paths=n_paths, verdict="PASS" if ok else "FAIL", seed=seed,
        details={"closed_form": closed, "three_se": 3.0 * se})
