"""Concentric-circle information constellations and their continuous
deformation toward On-Off signalling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# guards the exact-boundary case (m=1 lands on 5.999...) without touching
# the interior values
_FLOOR_EPS = 1e-9


def circle_capacity(m: int) -> int:
    """Maximum number of points with pairwise distance >= t on the circle of
    radius m*t; the zero-radius circle holds a single point by convention.
    """
    if m < 0:
        raise ValueError("circle index must be >= 0")
    if m == 0:
        return 1
    return math.floor(math.pi / math.asin(1.0 / (2.0 * m)) + _FLOOR_EPS)


@dataclass
class Constellation:
    """M complex points (sqrt(uW)) under average power P_a with uniform
    message probabilities. ``rho`` is 0 for the pure information layout, 1 at
    the On-Off extreme, or the sentinel string "learned" for extracted
    autoencoder designs.
    """

    points: np.ndarray
    m: int
    p_a_uw: float
    rho: float | str = 0.0
    c: int | None = None
    t: float | None = None
    m_on: int | None = None
    on_indices: list[int] | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex).reshape(-1)
        if self.points.size != self.m:
            raise ValueError("points length must equal m")

    @property
    def degenerate(self) -> bool:
        return self.m == 1

    def avg_power(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    def min_dist(self) -> float:
        """Minimum pairwise Euclidean distance (not squared)."""
        if self.m < 2:
            raise ValueError("need at least two points")
        d = np.abs(self.points[:, None] - self.points[None, :])
        iu = np.triu_indices(self.m, k=1)
        return float(d[iu].min())

    def to_json(self) -> dict:
        rho = self.rho if isinstance(self.rho, str) else float(self.rho)
        return {
            "m": self.m,
            "p_a_uw": self.p_a_uw,
            "rho": rho,
            "points": [[float(p.real), float(p.imag)] for p in self.points],
            "meta": {
                "c": self.c,
                "t": self.t,
                "m_on": self.m_on,
                "on_indices": self.on_indices,
            },
        }

    @classmethod
    def from_json(cls, d: dict) -> "Constellation":
        meta = d.get("meta", {})
        pts = np.array([complex(re, im) for re, im in d["points"]])
        return cls(points=pts, m=int(d["m"]), p_a_uw=float(d["p_a_uw"]),
                   rho=d["rho"], c=meta.get("c"), t=meta.get("t"),
                   m_on=meta.get("m_on"), on_indices=meta.get("on_indices"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Constellation":
        return cls.from_json(json.loads(Path(path).read_text()))


def _circle_counts(m_total: int) -> list[int]:
    """Points per circle: fill circles 0..C-1 to capacity, remainder on C."""
    counts = []
    remaining = m_total
    idx = 0
    while remaining > 0:
        cap = circle_capacity(idx)
        counts.append(min(cap, remaining))
        remaining -= counts[-1]
        idx += 1
    return counts


def layout_info(m: int, p_a_uw: float) -> Constellation:
    """Arrange M points on concentric circles with radii {0, t, 2t, ...} so the
    average power equals P_a exactly; circles alternate a half-slot phase
    stagger to help inter-circle spacing.
    """
    if m < 1:
        raise ValueError("M must be >= 1")
    if not p_a_uw > 0:
        raise ValueError("P_a must be positive")
    if m == 1:
        return Constellation(points=np.zeros(1, dtype=complex), m=1,
                             p_a_uw=p_a_uw, rho=0.0, c=0, t=0.0)

    counts = _circle_counts(m)
    c = len(counts) - 1
    denom = sum(k * (ring * ring) for ring, k in enumerate(counts))
    t = math.sqrt(m * p_a_uw / denom)

    pts = []
    for ring, k in enumerate(counts):
        if ring == 0:
            pts.append(0j)
            continue
        phi0 = 0.0 if ring % 2 == 0 else math.pi / k
        ang = phi0 + 2.0 * math.pi * np.arange(k) / k
        pts.extend(ring * t * np.exp(1j * ang))
    return Constellation(points=np.array(pts), m=m, p_a_uw=p_a_uw, rho=0.0,
                         c=c, t=t)


def m_on_count(m: int, p_star: float) -> int:
    """Number of points to migrate outward: the count in {1..M} whose
    fraction m/M best matches the target On probability (ties to smaller).
    """
    if m < 1:
        raise ValueError("M must be >= 1")
    if not (0.0 < p_star <= 1.0):
        raise ValueError("p_star must be in (0, 1]")
    cand = np.arange(1, m + 1)
    return int(cand[np.argmin(np.abs(p_star - cand / m))])


def _phase_02pi(pts: np.ndarray) -> np.ndarray:
    return np.mod(np.angle(pts), 2.0 * math.pi)


def select_on_points(points: np.ndarray, m_on: int,
                     tie_rank: np.ndarray | None = None) -> np.ndarray:
    """Indices of the m_on largest-modulus points, ordered by ascending phase.

    Modulus ties break by ``tie_rank`` (smaller first) when given, then by
    ascending phase, then by index; the returned on-set is phase-sorted so it
    can be matched one-to-one with the equally spaced target phases.
    """
    mod = np.abs(points)
    ph = _phase_02pi(points)
    n = points.size
    rank = np.zeros(n) if tie_rank is None else np.asarray(tie_rank, dtype=float)
    order = sorted(range(n), key=lambda i: (-mod[i], rank[i], ph[i], i))
    chosen = order[:m_on]
    chosen.sort(key=lambda i: (ph[i], i))
    return np.array(chosen, dtype=int)


def transform_points(points: np.ndarray, rho: float, m_on: int,
                     p_a_uw: float, tie_rank: np.ndarray | None = None):
    """On-Off deformation of a point set at average power P_a.

    The m_on selected points move along amplitude/phase interpolants toward
    the circle of radius sqrt(M*P_a/m_on) with equally spaced phases; the
    rest rescale by the common factor restoring the average-power equality.
    When the off points carry no power (or none exist) a global rescale
    enforces the equality instead; that factor is exactly 1 at rho in {0,1}.

    Returns (new_points, on_indices).
    """
    if not (0.0 <= rho <= 1.0):
        raise ValueError("rho must be in [0, 1]")
    pts = np.asarray(points, dtype=complex).copy()
    m = pts.size
    total = m * p_a_uw
    r_target = math.sqrt(total / m_on)

    on_idx = select_on_points(pts, m_on, tie_rank)
    if rho == 0.0:
        # amplitude and phase shifts vanish and the off rescale is exactly 1
        return pts, on_idx
    mod = np.abs(pts[on_idx])
    ph = _phase_02pi(pts[on_idx])
    target_ph = 2.0 * math.pi * np.arange(m_on) / m_on
    # interpolated form of |c|+alpha and angle(c)+beta; exact at both endpoints
    new_mod = (1.0 - rho) * mod + rho * r_target
    new_ph = (1.0 - rho) * ph + rho * target_ph
    pts[on_idx] = new_mod * np.exp(1j * new_ph)

    off_mask = np.ones(m, dtype=bool)
    off_mask[on_idx] = False
    on_power = float(np.sum(np.abs(pts[on_idx]) ** 2))
    off_power = float(np.sum(np.abs(pts[off_mask]) ** 2))
    if off_power > 0.0:
        # s vanishes exactly at the On-Off endpoint
        s = 0.0 if rho == 1.0 else math.sqrt(max(0.0, total - on_power) / off_power)
        pts[off_mask] *= s
    elif on_power > 0.0:
        pts *= math.sqrt(total / on_power)
    return pts, on_idx


def swipt_transform(base: Constellation, rho: float, p_star: float) -> Constellation:
    """Deform an information constellation toward the On-Off extreme.

    At rho=0 the base layout is returned unchanged; at rho=1 exactly m_on
    points sit equally phased on the radius-sqrt(M*P_a/m_on) circle and the
    rest at the origin.
    """
    if base.rho != 0.0:
        raise ValueError("base constellation must have rho = 0")
    if not base.p_a_uw > 0:
        raise ValueError("P_a must be positive")
    m_on = m_on_count(base.m, p_star)
    pts, on_idx = transform_points(base.points, rho, m_on, base.p_a_uw)
    return Constellation(points=pts, m=base.m, p_a_uw=base.p_a_uw, rho=float(rho),
                         c=base.c, t=base.t, m_on=m_on,
                         on_indices=[int(i) for i in on_idx])
