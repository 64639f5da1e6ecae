"""Sample sizes, seeded sampling and proportion estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm


def z_value(confidence: float) -> float:
    """Two-sided standard-normal quantile for a confidence level."""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    return float(norm.ppf(0.5 + confidence / 2.0))


@dataclass(frozen=True)
class SamplingPlan:
    p: float
    q: float
    confidence: float
    error: float
    z: float
    n: int


def plan_sample(p: float = 0.5, confidence: float = 0.95, error: float = 0.05) -> SamplingPlan:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if not 0.0 < error < 1.0:
        raise ValueError(f"error must be in (0, 1), got {error}")
    z = z_value(confidence)
    q = 1.0 - p
    # infinite-population formula; no finite correction
    n = max(1, math.ceil(z * z * p * q / (error * error)))
    return SamplingPlan(p, q, confidence, error, z, n)


def required_sample_size(p: float = 0.5, confidence: float = 0.95, error: float = 0.05) -> int:
    return plan_sample(p, confidence, error).n


def draw_sample(rows: Sequence, n: int, seed: int, key=lambda r: r.author_id) -> list:
    """Uniform sample without replacement, returned sorted by ``key``."""
    if n < 0 or n > len(rows):
        raise ValueError(f"cannot draw {n} rows from {len(rows)}")
    ordered = sorted(rows, key=key)
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(len(ordered), size=n, replace=False))
    return [ordered[i] for i in picks]


def estimate_proportion(k: int, n: int, confidence: float = 0.95) -> tuple[float, float, float]:
    """Point estimate k/n with a Wald interval clamped to [0, 1]."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= k <= n:
        raise ValueError(f"k must be in [0, {n}], got {k}")
    p = k / n
    half = z_value(confidence) * math.sqrt(p * (1.0 - p) / n)
    return p, max(0.0, p - half), min(1.0, p + half)
