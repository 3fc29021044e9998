"""Finite-activity Poisson random measures on [0,T] x R.

The intensity is Leb x nu with nu = rate * (mark law); the mark law is a
probability measure supported away from 0, so jump counts are Poisson(rate*T)
and all moments m_p = int |y|^p d(mark law) exist in closed form.

Integrals against the measure follow the right-closed convention: an event at
exactly t is included in integrals over (0, t].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .reporting import EnsembleReport, RunningMoments, Z_99


def derive_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based splittable stream: one Philox key per (seed, path index)."""
    key = np.array([np.uint64(seed), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Jump intensity: total rate plus a named mark law.

    uniform_annulus: uniform on [-1,-gap] u [gap,1] (symmetric, mean zero)
    uniform_interval: uniform on [lo,hi] with 0 outside [lo,hi]
    """

    rate: float
    mark_law: str = "uniform_annulus"
    gap: float = 0.1
    lo: float = 0.1
    hi: float = 0.5

    def __post_init__(self):
        if self.rate < 0.0:
            raise ValueError(f"jump rate must be nonnegative, got {self.rate}")
        if self.mark_law == "uniform_annulus":
            if not 0.0 < self.gap < 1.0:
                raise ValueError("annulus gap must lie in (0,1)")
        elif self.mark_law == "uniform_interval":
            if not self.lo < self.hi:
                raise ValueError("interval law needs lo < hi")
            if self.lo <= 0.0 <= self.hi:
                raise ValueError("interval law must not contain 0")
        else:
            raise ValueError(f"unknown mark law {self.mark_law!r}")

    # -- closed-form mark-law quantities ------------------------------------

    def moment(self, p: float) -> float:
        """m_p = int |y|^p d(mark law)."""
        if self.mark_law == "uniform_annulus":
            g = self.gap
            return (1.0 - g ** (p + 1.0)) / ((p + 1.0) * (1.0 - g))
        a, b = abs(self.lo), abs(self.hi)
        if self.hi < 0.0:
            a, b = abs(self.hi), abs(self.lo)
        return (b ** (p + 1.0) - a ** (p + 1.0)) / ((p + 1.0) * (b - a))

    def mean_mark(self) -> float:
        if self.mark_law == "uniform_annulus":
            return 0.0
        return 0.5 * (self.lo + self.hi)

    def support_intervals(self) -> list[tuple[float, float]]:
        if self.mark_law == "uniform_annulus":
            return [(-1.0, -self.gap), (self.gap, 1.0)]
        return [(self.lo, self.hi)]

    def density(self) -> float:
        """Constant density of the mark law on its support."""
        if self.mark_law == "uniform_annulus":
            return 1.0 / (2.0 * (1.0 - self.gap))
        return 1.0 / (self.hi - self.lo)

    def abs_band_mass(self, c: float, d: float) -> float:
        """Mark-law mass of {y : c <= |y| <= d} (exact interval arithmetic)."""
        if d < c:
            return 0.0
        c = max(c, 0.0)
        total = 0.0
        for lo, hi in self.support_intervals():
            for band in ((c, d), (-d, -c)):
                total += max(0.0, min(hi, band[1]) - max(lo, band[0]))
        return total * self.density()

    def sample_marks(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.mark_law == "uniform_annulus":
            mag = rng.uniform(self.gap, 1.0, size)
            sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
            return sign * mag
        return rng.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class MarkedJumpTrain:
    """One realization of the jump measure over (0, T]."""

    horizon: float
    times: np.ndarray
    marks: np.ndarray

    def __post_init__(self):
        t = self.times
        if t.size:
            if not (np.all(np.diff(t) > 0.0) and t[0] > 0.0 and t[-1] <= self.horizon):
                raise ValueError("jump times must be strictly increasing in (0, T]")
            if np.any(self.marks == 0.0):
                raise ValueError("marks must be nonzero")
        if t.size != self.marks.size:
            raise ValueError("times and marks length mismatch")

    @property
    def count(self) -> int:
        return int(self.times.size)

    def count_up_to(self, t: float) -> int:
        """Number of events in (0, t] (right-closed)."""
        return int(np.searchsorted(self.times, t, side="right"))


def sample_train(spec: LevyMeasureSpec, horizon: float, seed=None,
                 rng: np.random.Generator | None = None) -> MarkedJumpTrain:
    """Draw one train: exponential inter-arrivals, iid marks, fixed by seed."""
    if horizon <= 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if rng is None:
        rng = derive_rng(int(seed))
    if spec.rate == 0.0:
        return MarkedJumpTrain(horizon, np.empty(0), np.empty(0))
    times = []
    t = 0.0
    chunk = max(int(2.0 * spec.rate * horizon) + 10, 16)
    while True:
        gaps = rng.exponential(1.0 / spec.rate, chunk)
        arrivals = t + np.cumsum(gaps)
        keep = arrivals[arrivals <= horizon]
        times.append(keep)
        if keep.size < arrivals.size:
            break
        t = arrivals[-1]
    times = np.concatenate(times)
    marks = spec.sample_marks(rng, times.size)
    return MarkedJumpTrain(horizon, times, marks)


# ---------------------------------------------------------------------------
# integrals against eta and the compensated measure


def integrate_eta(integrand, train: MarkedJumpTrain, t: float, zero=0.0):
    """sum over events with tau <= t of integrand(tau, y); right-closed in t."""
    total = zero
    m = train.count_up_to(t)
    for i in range(m):
        total = total + integrand(float(train.times[i]), float(train.marks[i]))
    return total


def integrate_eta_tilde(integrand, train: MarkedJumpTrain, spec: LevyMeasureSpec,
                        compensator_integral, t: float, zero=0.0):
    """eta-integral minus the supplied compensator int_0^t int integrand dnu ds."""
    return integrate_eta(integrand, train, t, zero=zero) - compensator_integral(t)


_LEGGAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _leggauss(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    if nodes not in _LEGGAUSS_CACHE:
        _LEGGAUSS_CACHE[nodes] = np.polynomial.legendre.leggauss(nodes)
    return _LEGGAUSS_CACHE[nodes]


def mark_quadrature(spec: LevyMeasureSpec, nodes: int = 64
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Nodes y_j and weights w_j with int g d(mark law) = sum w_j g(y_j)."""
    if nodes < 1:
        raise ValueError("quadrature needs a positive node count")
    xs, ws = _leggauss(nodes)
    ys, wt = [], []
    dens = spec.density()
    for lo, hi in spec.support_intervals():
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        ys.append(mid + half * xs)
        wt.append(half * dens * ws)
    return np.concatenate(ys), np.concatenate(wt)


def nu_expectation(spec: LevyMeasureSpec, g, nodes: int = 64) -> float:
    """int g(y) d(mark law) by Gauss-Legendre panels on the support intervals."""
    y, w = mark_quadrature(spec, nodes)
    try:
        vals = np.asarray(g(y), dtype=float)
        if vals.shape != y.shape:
            raise TypeError
    except TypeError:
        vals = np.asarray([g(v) for v in y], dtype=float)
    return float(np.dot(w, vals))


def nu_time_integral(spec: LevyMeasureSpec, f, horizon: float,
                     time_nodes: int = 401, mark_nodes: int = 64) -> float:
    """int_0^T int f(s,y) nu(dy) ds with nu = rate * mark law (Simpson in s)."""
    from scipy.integrate import simpson

    ts = np.linspace(0.0, horizon, time_nodes)
    vals = np.array([nu_expectation(spec, lambda y, s=s: f(s, y), mark_nodes) for s in ts])
    return spec.rate * float(simpson(vals, x=ts))


def ito_isometry_check(integrand, spec: LevyMeasureSpec, horizon: float,
                       ensemble_size: int, seed: int,
                       mark_nodes: int = 64) -> EnsembleReport:
    """Monte Carlo check of E|int int f deta~|^2 = int int f^2 dnu ds.

    The integrand must be deterministic. The compensator and the right-hand
    side are computed by quadrature, so closed-form test values stay external.
    """
    comp_T = nu_time_integral(spec, integrand, horizon, mark_nodes=mark_nodes)
    rhs = nu_time_integral(spec, lambda s, y: integrand(s, y) ** 2, horizon,
                           mark_nodes=mark_nodes)
    stats = RunningMoments()
    for i in range(ensemble_size):
        train = sample_train(spec, horizon, rng=derive_rng(seed, i))
        val = integrate_eta(integrand, train, horizon) - comp_T
        stats.add(val * val)
    hw = stats.half_width_99()
    ok = abs(stats.mean - rhs) <= hw
    return EnsembleReport(
        name="ito-isometry", anchor="ito-isometry", estimate=stats.mean,
        half_width_99=hw, n_paths=ensemble_size,
        verdict="PASS" if ok else "FAIL", seed=seed,
        details={"rhs_closed_form": rhs, "z": Z_99},
    )


# ---------------------------------------------------------------------------
# norm annuli and counting compensators


@dataclass(frozen=True)
class AnnulusSet:
    """The set {v : alpha <= |v|_U' <= beta}; membership from the norm alone."""

    alpha: float
    beta: float = math.inf

    def __post_init__(self):
        if not 0.0 < self.alpha <= self.beta:
            raise ValueError("annulus needs 0 < alpha <= beta")

    def contains_norm(self, r: float) -> bool:
        return self.alpha <= r <= self.beta

    def distance_norm(self, r) -> np.ndarray:
        """U'-distance from a point with norm r to the annulus."""
        r = np.asarray(r, dtype=float)
        return np.maximum(0.0, np.maximum(self.alpha - r, r - self.beta))


def cumulative_cell_trapezoid(grid: np.ndarray, f_right: np.ndarray,
                              f_left: np.ndarray | None = None) -> np.ndarray:
    """Cumulative trapezoid on a jump-adapted grid.

    On each cell [t_i, t_{i+1}] the integrand is continuous from the right at
    t_i and has a left limit at t_{i+1}, so the rule uses f_right at the cell
    start and f_left at the cell end. Returns the cumulative values on grid.
    """
    if f_left is None:
        f_left = f_right
    h = np.diff(grid)
    cells = 0.5 * h * (np.asarray(f_right)[:-1] + np.asarray(f_left)[1:])
    out = np.zeros(len(grid))
    np.cumsum(cells, out=out[1:])
    return out


def counting_compensator(set_a: AnnulusSet, image_scale_right: np.ndarray,
                         spec: LevyMeasureSpec, grid: np.ndarray, t: float | None,
                         image_scale_left: np.ndarray | None = None):
    """int_0^t nu({y : |y| * scale(s) in the annulus}) ds.

    Valid for coefficients whose jump image is |y|-homogeneous in U'-norm
    (both shipped kinds). Exact interval measure in the mark, trapezoid in s.
    With t=None the cumulative values on the whole grid come back instead.
    """
    def band(scales):
        scales = np.asarray(scales, dtype=float)
        out = np.zeros_like(scales)
        pos = scales > 0.0
        with np.errstate(divide="ignore"):
            out[pos] = [spec.abs_band_mass(set_a.alpha / r, set_a.beta / r)
                        for r in scales[pos]]
        return spec.rate * out

    fr = band(image_scale_right)
    fl = band(image_scale_left) if image_scale_left is not None else fr
    cum = cumulative_cell_trapezoid(grid, fr, fl)
    return cum if t is None else float(np.interp(t, grid, cum))


def smoothed_counting_compensator(g_of_norm, image_scale_right: np.ndarray,
                                  spec: LevyMeasureSpec, grid: np.ndarray, t: float,
                                  image_scale_left: np.ndarray | None = None,
                                  mark_nodes: int = 64) -> np.ndarray:
    """Cumulative int_0^. int g(|y| * scale(s)) nu(dy) ds on the grid.

    g maps a U'-norm value to [0,1] (the smoothed indicators); the mark
    integral uses Gauss-Legendre panels since g is no longer an indicator.
    """
    y, w = mark_quadrature(spec, mark_nodes)
    ay = np.abs(y)

    def nu_g(scales):
        scales = np.asarray(scales, dtype=float)
        vals = np.asarray(g_of_norm(scales[:, None] * ay[None, :]), dtype=float)
        return spec.rate * (vals @ w)

    fr = nu_g(image_scale_right)
    fl = nu_g(image_scale_left) if image_scale_left is not None else fr
    cum = cumulative_cell_trapezoid(grid, fr, fl)
    return cum if t is None else float(np.interp(t, grid, cum))


# ---------------------------------------------------------------------------
# serialization


_TRAIN_CSV_HEADER = "index,time,mark"


def train_to_csv(train: MarkedJumpTrain) -> str:
    lines = [_TRAIN_CSV_HEADER]
    for i, (t, y) in enumerate(zip(train.times, train.marks)):
        lines.append(f"{i},{float(t)!r},{float(y)!r}")
    return "\n".join(lines) + "\n"


def train_from_csv(text: str, horizon: float) -> MarkedJumpTrain:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if lines[0] != _TRAIN_CSV_HEADER:
        raise ValueError("unexpected CSV header for jump train")
    times, marks = [], []
    for ln in lines[1:]:
        _, t, y = ln.split(",")
        times.append(float(t))
        marks.append(float(y))
    return MarkedJumpTrain(horizon, np.asarray(times), np.asarray(marks))


def train_to_json_dict(train: MarkedJumpTrain) -> dict:
    return {"horizon": train.horizon,
            "times": [float(t) for t in train.times],
            "marks": [float(y) for y in train.marks]}


def train_from_json_dict(d: dict) -> MarkedJumpTrain:
    return MarkedJumpTrain(float(d["horizon"]),
                           np.asarray(d["times"], dtype=float),
                           np.asarray(d["marks"], dtype=float))
