"""Shared test utilities: fixture profiles, random session builders,
and the independent least-squares oracle used to cross-check fits."""

from __future__ import annotations

import random
from datetime import datetime, timezone

from gputrace import (
    DEFAULT_DEVICE,
    DeviceInfo,
    EventMarker,
    SimProfile,
    SimSegment,
    gb_to_bytes,
)

# A ten-step pipeline shaped like a single-cell analysis run: one long
# low-utilization load phase, a short ramp to the memory peak, then a
# long fully-utilized tail where memory settles lower.
PIPELINE_PROFILE = """\
# load: low util, modest memory
60,5,10,35,80
2,20,11.5,40,120
# ramp to the peak
5,60,60,55,300
5,90,90,65,520
6,95,101.3,70,650
# full-util tail, memory settles
74,100,84,68,600
mark,0,load
mark,62,qc
mark,66,norm_hvg
mark,73,regress
mark,74,pca
mark,76,knn
mark,86,umap_tsne
mark,106,clustering
mark,114,diff_expr
mark,134,trajectory
"""

PIPELINE_MARKS_S = [0, 62, 66, 73, 74, 76, 86, 106, 114, 134]
PIPELINE_RUNTIMES_S = [62, 4, 7, 1, 2, 10, 20, 8, 20, 18]
PIPELINE_DURATION_S = 152

# Fixed wall anchor so synthetic fixtures are stable across runs.
FIXED_WALL = datetime(2024, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


def linear_points(size_lo, value_lo, size_hi, value_hi, n=10):
    """n collinear (size, value) pairs between two endpoints."""
    pts = []
    for i in range(n):
        frac = i / (n - 1)
        pts.append(
            (size_lo + frac * (size_hi - size_lo), value_lo + frac * (value_hi - value_lo))
        )
    return pts


def ols_oracle(xy):
    """Brute-force normal equations (uncentered): the independent route.

    Solves [n, Sx; Sx, Sxx] [b; a] = [Sy; Sxy] directly, no rescaling.
    """
    n = len(xy)
    sx = sum(x for x, _ in xy)
    sy = sum(y for _, y in xy)
    sxx = sum(x * x for x, _ in xy)
    sxy = sum(x * y for x, y in xy)
    det = n * sxx - sx * sx
    slope = (n * sxy - sx * sy) / det
    intercept = (sy * sxx - sx * sxy) / det
    return slope, intercept


def random_profile(rng: random.Random, device: DeviceInfo = DEFAULT_DEVICE) -> SimProfile:
    segments = []
    for _ in range(rng.randint(1, 4)):
        segments.append(
            SimSegment(
                duration_s=rng.choice([0.05, 0.1, 0.25, 0.5, 1.0, 2.0]),
                gpu_utilization=round(rng.uniform(0, 100), 1),
                memory_used=rng.randrange(0, device.memory_total + 1),
                temperature=round(rng.uniform(25, 90), 1),
                power_draw=rng.randrange(0, 700_001),
            )
        )
    return SimProfile(segments=tuple(segments), device=device)


def random_marks(rng: random.Random, duration_ms: int, min_count: int = 0):
    count = rng.randint(min_count, 5)
    times = sorted(rng.randint(0, duration_ms) for _ in range(count))
    labels = ["load", "qc", "pca, projected", 'step "x"', "knn", "cluster"]
    return tuple(
        EventMarker(elapsed_ms=t, label=rng.choice(labels)) for t in times
    )


def random_period(rng: random.Random) -> float:
    return rng.choice([0.05, 0.1, 0.25, 0.5, 1.0])


PEAK_GB = 101.3
PEAK_BYTES = gb_to_bytes(PEAK_GB)
