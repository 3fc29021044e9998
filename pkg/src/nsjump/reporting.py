"""Ensemble statistics and the report record shared by the verification ops.

Accumulators merge associatively and commutatively so ensemble results do not
depend on worker scheduling; the drivers still reduce in path-index order to
keep report files byte-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

Z_99 = 2.576  # pinned half-width multiplier for the reported 99% intervals


class KahanSum:
    """Compensated summation."""

    def __init__(self):
        self.total = 0.0
        self._c = 0.0

    def add(self, x: float):
        y = float(x) - self._c
        t = self.total + y
        self._c = (t - self.total) - y
        self.total = t

    def merge(self, other: "KahanSum"):
        self.add(other.total)
        self.add(-other._c)


class RunningMoments:
    """Streaming mean/variance (Welford) with a parallel merge rule."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x: float):
        self.n += 1
        delta = float(x) - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (float(x) - self.mean)

    def add_many(self, xs):
        for x in np.asarray(xs, dtype=float).ravel():
            self.add(x)

    def merge(self, other: "RunningMoments"):
        if other.n == 0:
            return
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean, other.m2
            return
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean += delta * other.n / n
        self.m2 += other.m2 + delta * delta * self.n * other.n / n
        self.n = n

    @property
    def variance(self) -> float:
        if self.n < 2:
            return 0.0
        return self.m2 / (self.n - 1)

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def half_width_99(self) -> float:
        if self.n == 0:
            return float("inf")
        return Z_99 * self.std / np.sqrt(self.n)


def bonferroni_z(n_tests: int, alpha: float = 0.01) -> float:
    """Normal quantile for simultaneous level alpha across n_tests intervals."""
    from scipy.stats import norm as _norm

    n_tests = max(int(n_tests), 1)
    return float(_norm.ppf(1.0 - alpha / (2.0 * n_tests)))


@dataclass
class EnsembleReport:
    """Outcome of one verification check."""

    name: str
    anchor: str
    estimate: float
    half_width_99: float
    n_paths: int
    verdict: str  # PASS | FAIL | INFO
    seed: int
    per_n: dict[int, tuple[float, float]] = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict != "FAIL"

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "estimate": self.estimate,
            "half_width_99": self.half_width_99,
            "n_paths": self.n_paths,
            "verdict": self.verdict,
            "seed": self.seed,
            "per_n": {str(k): [v[0], v[1]] for k, v in self.per_n.items()},
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))


def report_from_json_dict(d: dict) -> EnsembleReport:
    return EnsembleReport(
        name=d["name"], anchor=d["anchor"], estimate=d["estimate"],
        half_width_99=d["half_width_99"], n_paths=d["n_paths"],
        verdict=d["verdict"], seed=d["seed"],
        per_n={int(k): (v[0], v[1]) for k, v in d.get("per_n", {}).items()},
        details=d.get("details", {}),
    )
