"""Ensemble drivers and Monte Carlo checks of the a-priori bounds.

Paths are embarrassingly parallel: every path index owns a counter-based
random stream, so results do not depend on how indices are split across
workers, and reductions always run in index order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import spectral
from .jumps import cumulative_cell_trapezoid, derive_rng, sample_train
from .martingales import extract_Mn
from .noise import jump_scale
from .reporting import Z_99, EnsembleReport
from .sde import BlowUpError, GalerkinConfig, integrate


def resolve_workers(explicit: int | None = None) -> int:
    """Worker count: explicit argument, else NSJUMP_WORKERS, else 1."""
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("NSJUMP_WORKERS", "").strip()
    return max(1, int(env)) if env else 1


def _ensemble_chunk(args):
    config, seed, indices, stat_fn, stat_args = args
    rows, blowups = [], []
    for i in indices:
        train = sample_train(config.levy, config.horizon, rng=derive_rng(seed, int(i)))
        try:
            path = integrate(config, train=train)
        except BlowUpError as err:
            blowups.append((int(i), float(err.time)))
            rows.append(None)
            continue
        rows.append(np.asarray(stat_fn(path, config, *stat_args), dtype=float))
    return rows, blowups


def run_path_ensemble(config: GalerkinConfig, n_paths: int, seed: int, stat_fn,
                      stat_args=(), workers: int | None = None
                      ) -> tuple[np.ndarray, list[tuple[int, float]]]:
    """Per-path statistic matrix; rows of paths that blew up are NaN.

    stat_fn(path, config, *stat_args) -> 1d float vector, identical length on
    every path. Must be a module-level callable when workers > 1.
    """
    workers = resolve_workers(workers)
    indices = np.arange(n_paths)
    if workers == 1 or n_paths < 4 * workers:
        rows, blowups = _ensemble_chunk((config, seed, indices, stat_fn, stat_args))
    else:
        chunks = np.array_split(indices, 4 * workers)
        rows, blowups = [], []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            jobs = [(config, seed, c, stat_fn, stat_args) for c in chunks if c.size]
            for r, b in pool.map(_ensemble_chunk, jobs):
                rows.extend(r)
                blowups.extend(b)
    width = next((len(r) for r in rows if r is not None), 1)
    out = np.full((n_paths, width), np.nan)
    for i, r in enumerate(rows):
        if r is not None:
            out[i] = r
    return out, blowups


def _mean_ci(values: np.ndarray) -> tuple[float, float]:
    est = float(np.mean(values))
    hw = Z_99 * float(np.std(values, ddof=1)) / math.sqrt(len(values)) \
        if len(values) > 1 else 0.0
    return est, hw


# ---------------------------------------------------------------------------
# per-path statistics (module level so they survive pickling)


def _stat_sup_h_pow(path, config, p):
    sup = max(spectral.norm(u, 0.0) for u in path.states_right)
    sup = max(sup, max(spectral.norm(u, 0.0) for u in path.states_left))
    return [sup ** p]


def _stat_v_integral(path, config):
    vr = path.observable(lambda u: spectral.norm(u, 1.0) ** 2)
    vl = path.observable_left(lambda u: spectral.norm(u, 1.0) ** 2)
    return [cumulative_cell_trapezoid(path.grid, vr, vl)[-1]]


def _stat_m_moment(path, config, p):
    m = extract_Mn(path, config, method="jump_sum")
    sup = max(spectral.norm(u, 0.0) for u in m.states_right)
    sig = 0.0  # H norm of the shifted state drives both surrogates
    sh_r = np.asarray([jump_scale(config.coef, u, sig) for u in path.states_right])
    sh_l = np.asarray([jump_scale(config.coef, u, sig) for u in path.states_left])
    c2 = config.levy.rate * config.levy.moment(2.0)
    cp = config.levy.rate * config.levy.moment(p)
    bracket = c2 * cumulative_cell_trapezoid(path.grid, sh_r ** 2, sh_l ** 2)[-1]
    higher = cp * cumulative_cell_trapezoid(path.grid, sh_r ** p, sh_l ** p)[-1]
    return [sup ** p, bracket ** (p / 2.0), higher]


# ---------------------------------------------------------------------------
# uniformity-in-n estimates


def _band_report(per_n: dict[str, tuple[float, float]], blow_total: int,
                 ensemble_size: int, seed: int, name: str, anchor: str
                 ) -> EnsembleReport:
    """1.5x uniform-band verdict over the per-n estimates."""
    hi_key = max(per_n, key=lambda k: per_n[k][0])
    lo_key = min(per_n, key=lambda k: per_n[k][0])
    hi, hi_hw = per_n[hi_key]
    lo, lo_hw = per_n[lo_key]
    band_ok = (hi - hi_hw) <= 1.5 * (lo + lo_hw)
    verdict = "PASS" if band_ok and blow_total == 0 else "FAIL"
    return EnsembleReport(
        name=name, anchor=anchor, estimate=hi, half_width_99=hi_hw,
        n_paths=ensemble_size, verdict=verdict, seed=seed, per_n=dict(per_n),
        details={"band_ratio": hi / lo if lo > 0.0 else None,
                 "blowups": blow_total,
                 "n_list": [int(k) for k in sorted(per_n, key=int)]})


def _per_n_report(config: GalerkinConfig, n_list, ensemble_size: int, seed: int,
                  stat_fn, stat_args, name: str, anchor: str,
                  workers: int | None) -> EnsembleReport:
    """Common-random-number sweep over n with the 1.5x uniform-band verdict."""
    if not n_list:
        raise ValueError("n_list must be nonempty")
    per_n: dict[str, tuple[float, float]] = {}
    blow_total = 0
    for n in sorted(n_list):
        cfg = replace(config, n=n, u0=spectral.project_Pn(config.u0, n))
        rows, blowups = run_path_ensemble(cfg, ensemble_size, seed, stat_fn,
                                          stat_args, workers)
        blow_total += len(blowups)
        vals = rows[:, 0]
        vals = vals[np.isfinite(vals)]
        per_n[str(n)] = _mean_ci(vals)
    return _band_report(per_n, blow_total, ensemble_size, seed, name, anchor)


def _stat_sup2_and_v(path, config):
    return _stat_sup_h_pow(path, config, 2.0) + _stat_v_integral(path, config)


def uniformity_reports(config: GalerkinConfig, n_list, ensemble_size: int,
                       seed: int, workers: int | None = None
                       ) -> list[EnsembleReport]:
    """moment_sup_H(p=2) and energy_V_integral from a single shared sweep.

    Same verdicts as calling the two operations separately with this seed;
    the paths are only generated once.
    """
    per_sup: dict[str, tuple[float, float]] = {}
    per_v: dict[str, tuple[float, float]] = {}
    blow_total = 0
    for n in sorted(n_list):
        cfg = replace(config, n=n, u0=spectral.project_Pn(config.u0, n))
        rows, blowups = run_path_ensemble(cfg, ensemble_size, seed,
                                          _stat_sup2_and_v, (), workers)
        blow_total += len(blowups)
        good = rows[np.all(np.isfinite(rows), axis=1)]
        per_sup[str(n)] = _mean_ci(good[:, 0])
        per_v[str(n)] = _mean_ci(good[:, 1])
    return [
        _band_report(per_sup, blow_total, ensemble_size, seed,
                     "moment_sup_H_p2", "moment-sup-H"),
        _band_report(per_v, blow_total, ensemble_size, seed,
                     "energy_V_integral", "energy-V-integral"),
    ]


def moment_sup_H(config: GalerkinConfig, p: float, n_list, ensemble_size: int,
                 seed: int, workers: int | None = None) -> EnsembleReport:
    """E[sup_{t<=T} |u_n(t)|_H^p] per n, with the uniform-band verdict.

    The same trains drive every n (common random numbers), so the comparison
    across n isolates the Galerkin truncation from the noise realization.
    """
    if not 1.0 <= p <= 4.0 + config.coef.gamma:
        raise ValueError(f"moment order p={p} outside the certified range")
    return _per_n_report(config, n_list, ensemble_size, seed, _stat_sup_h_pow,
                         (p,), f"moment_sup_H_p{p:g}", "moment-sup-H", workers)


def energy_V_integral(config: GalerkinConfig, n_list, ensemble_size: int,
                      seed: int, workers: int | None = None) -> EnsembleReport:
    """E[int_0^T |u_n(s)|_V^2 ds] per n, uniform-band verdict."""
    return _per_n_report(config, n_list, ensemble_size, seed, _stat_v_integral,
                         (), "energy_V_integral", "energy-V-integral", workers)


def M_moment_bound(config: GalerkinConfig, p: float, ensemble_size: int,
                   seed: int, workers: int | None = None) -> EnsembleReport:
    """Finite-sample surrogates for the martingale moment bound; INFO only.

    LHS is E[sup_t |M_n|_H^p]; the comparison value is the usual bracket
    surrogate E[(C2 int |u [+g]|^2)^{p/2}] plus, for p > 2, the p-th order
    jump term. The multiplicative constant in front is not pinned down, so
    only the ratio is reported.
    """
    if p not in (2.0, 2, 5.0, 5):
        raise ValueError("p must be 2 or 5")
    rows, blowups = run_path_ensemble(config, ensemble_size, seed,
                                      _stat_m_moment, (float(p),), workers)
    good = rows[np.all(np.isfinite(rows), axis=1)]
    lhs, lhs_hw = _mean_ci(good[:, 0])
    rhs = float(np.mean(good[:, 1])) + (float(np.mean(good[:, 2])) if p > 2 else 0.0)
    return EnsembleReport(
        name=f"M_moment_p{p:g}", anchor="M-moment", estimate=lhs,
        half_width_99=lhs_hw, n_paths=ensemble_size, verdict="INFO", seed=seed,
        details={"bracket_surrogate": rhs,
                 "ratio": lhs / rhs if rhs > 0.0 else None,
                 "blowups": len(blowups)})


# ---------------------------------------------------------------------------
# Taylor remainder of the p-th power of the H norm

C5_FROZEN = 15.6  # calibrated once on the scalar reduction sweep, then frozen


def taylor_ratio_sweep(p: float, n_t: int = 2001, n_c: int = 401) -> float:
    """Worst ratio of the remainder to (|x|^{p-2}+|h|^{p-2})|h|^2.

    By homogeneity and polarization the ratio depends only on t = |h|/|x| and
    the cosine c = <x,h>/(|x||h|), so a dense 2d sweep brackets the supremum.
    """
    t = np.logspace(-3.0, 3.0, n_t)[None, :]
    c = np.linspace(-1.0, 1.0, n_c)[:, None]
    sq = 1.0 + 2.0 * c * t + t * t
    lhs = np.abs(sq ** (p / 2.0) - 1.0 - p * c * t)
    rhs = (1.0 + t ** (p - 2.0)) * t * t
    return float(np.max(lhs / rhs))


def _taylor_c(p: float) -> float:
    if p == 2.0:
        return 1.0
    if p == 5.0:
        return C5_FROZEN
    raise ValueError("p must be 2 or 5")


def taylor_remainder_bound(samples: int, p: float, seed: int,
                           cutoff: int = 8) -> EnsembleReport:
    """Holdout check of | |x+h|^p - |x|^p - p|x|^{p-2}<x,h> | <= c_p (...) |h|^2.

    Random solenoidal fields with magnitudes spread over four decades, plus
    aligned pairs h = t x that realize the worst direction. p = 2 is an exact
    algebraic identity (the remainder equals |h|_H^2) and is asserted as such.
    """
    p = float(p)
    c_p = _taylor_c(p)
    rng = derive_rng(seed)
    worst = 0.0
    violations = 0
    for i in range(samples):
        x = spectral.random_solenoidal_field(cutoff, rng)
        h = spectral.random_solenoidal_field(cutoff, rng)
        x = x * float(10.0 ** rng.uniform(-2.0, 2.0))
        if i % 3 == 0:
            h = x * float(rng.uniform(-2.0, 2.0))  # aligned worst direction
        else:
            h = h * float(10.0 ** rng.uniform(-2.0, 2.0))
        nx, nh = spectral.norm(x, 0.0), spectral.norm(h, 0.0)
        if nh == 0.0:
            continue
        ip = spectral.inner_h(x, h)
        lhs = abs(spectral.norm(x + h, 0.0) ** p - nx ** p
                  - p * nx ** (p - 2.0) * ip)
        if p == 2.0:
            if abs(lhs - nh ** 2) > 1e-10 * (1.0 + nh ** 2):
                violations += 1
            worst = max(worst, lhs / (2.0 * nh ** 2))
            continue
        bound = c_p * (nx ** (p - 2.0) + nh ** (p - 2.0)) * nh ** 2
        worst = max(worst, lhs / bound * c_p)
        if lhs > bound:
            violations += 1
    return EnsembleReport(
        name=f"taylor_remainder_p{p:g}", anchor="taylor-remainder",
        estimate=worst, half_width_99=0.0, n_paths=samples,
        verdict="PASS" if violations == 0 else "FAIL", seed=seed,
        details={"c_p": c_p, "violations": violations})
