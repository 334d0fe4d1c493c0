"""Trajectory similarity (EDR, DTW) and distribution similarity (cosine,
sliced Wasserstein) plus the min-match set comparison protocol.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numba
import numpy as np

from .errors import ValidationError
from .geodata import Extent, Trajectory
from .raster import rasterize_trajectory


def _points(t) -> np.ndarray:
    pts = t.points if isinstance(t, Trajectory) else t
    return np.ascontiguousarray(np.asarray(pts, dtype=np.float64).reshape(-1, 2))


@numba.njit(cache=True)
def _edr_kernel(a, b, tau2):
    n, m = a.shape[0], b.shape[0]
    prev = np.empty(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    for j in range(m + 1):
        prev[j] = j
    for i in range(1, n + 1):
        cur[0] = i
        ax, ay = a[i - 1, 0], a[i - 1, 1]
        for j in range(1, m + 1):
            dx = ax - b[j - 1, 0]
            dy = ay - b[j - 1, 1]
            sub = 0 if dx * dx + dy * dy < tau2 else 1
            best = prev[j - 1] + sub
            if prev[j] + 1 < best:
                best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


@numba.njit(cache=True)
def _dtw_kernel(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[0] = np.inf
        ax, ay = a[i - 1, 0], a[i - 1, 1]
        for j in range(1, m + 1):
            dx = ax - b[j - 1, 0]
            dy = ay - b[j - 1, 1]
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = dx * dx + dy * dy + best
        prev, cur = cur, prev
    return prev[m]


def edr(a, b, tau: float = 20.0) -> int:
    """Edit distance on real sequences; points match when closer than ``tau`` meters."""
    if not tau > 0:
        raise ValidationError("tau must be positive")
    return int(_edr_kernel(_points(a), _points(b), float(tau) ** 2))


def dtw(a, b) -> float:
    """Dynamic time warping with squared Euclidean point cost (accumulated m^2)."""
    pa, pb = _points(a), _points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ValidationError("dtw needs non-empty trajectories")
    return float(_dtw_kernel(pa, pb))


@numba.njit(parallel=True, cache=True)
def _min_match(gen_pts, gen_off, ref_pts, ref_off, tau2):
    n_gen = gen_off.shape[0] - 1
    n_ref = ref_off.shape[0] - 1
    edr_min = np.empty(n_gen)
    dtw_min = np.empty(n_gen)
    for g in numba.prange(n_gen):
        a = gen_pts[gen_off[g] : gen_off[g + 1]]
        be, bd = np.inf, np.inf
        for r in range(n_ref):
            b = ref_pts[ref_off[r] : ref_off[r + 1]]
            e = _edr_kernel(a, b, tau2)
            if e < be:
                be = e
            d = _dtw_kernel(a, b)
            if d < bd:
                bd = d
        edr_min[g] = be
        dtw_min[g] = bd
    return edr_min, dtw_min


def _pack(trajs):
    pts = [_points(t) for t in trajs]
    off = np.zeros(len(pts) + 1, dtype=np.int64)
    off[1:] = np.cumsum([len(p) for p in pts])
    return np.ascontiguousarray(np.concatenate(pts)), off


def min_match(generated, reference, tau: float = 20.0) -> tuple[np.ndarray, np.ndarray]:
    """Per generated trajectory, the minimum EDR and DTW over all reference trajectories."""
    gp, go = _pack(generated)
    rp, ro = _pack(reference)
    return _min_match(gp, go, rp, ro, float(tau) ** 2)


# -- heatmaps -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Heatmap:
    data: np.ndarray  # (n, n), indexed [iy, ix]
    extent: Extent

    @property
    def is_empty(self) -> bool:
        return not np.any(self.data)

    def points_and_weights(self) -> tuple[np.ndarray, np.ndarray]:
        iy, ix = np.nonzero(self.data)
        cs = self.extent.cell_size
        pts = np.column_stack(
            [self.extent.origin_x + (ix + 0.5) * cs, self.extent.origin_y + (iy + 0.5) * cs]
        )
        return pts, self.data[iy, ix]


def heatmap_from(trajs: Sequence[Trajectory], extent: Extent) -> Heatmap:
    counts = np.zeros((extent.n, extent.n))
    for t in trajs:
        counts += rasterize_trajectory(t, extent).data[0]
    return heatmap_from_counts(counts, extent)


def heatmap_from_counts(counts, extent: Extent) -> Heatmap:
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValidationError("heatmap counts must be non-negative")
    total = counts.sum()
    return Heatmap(counts / total if total > 0 else counts.copy(), extent)


def cosine_sim(p: Heatmap, q: Heatmap) -> float:
    if p.is_empty or q.is_empty:
        raise ValidationError("cosine similarity of an all-zero heatmap is undefined")
    a, b = p.data.ravel(), q.data.ravel()
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def wasserstein2_1d(x, wx, y, wy) -> float:
    """Exact order-2 Wasserstein distance between weighted 1-D point sets.

    Integrates the squared difference of the two quantile functions over the
    merged cumulative-weight breakpoints.
    """
    x, wx, y, wy = (np.asarray(v, dtype=np.float64) for v in (x, wx, y, wy))
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    x, wx, y, wy = x[ox], wx[ox] / wx.sum(), y[oy], wy[oy] / wy.sum()
    cx, cy = np.cumsum(wx), np.cumsum(wy)
    cx[-1] = cy[-1] = 1.0
    u = np.union1d(cx, cy)
    lo = np.concatenate([[0.0], u[:-1]])
    mid = 0.5 * (lo + u)
    qx = x[np.minimum(np.searchsorted(cx, mid), len(x) - 1)]
    qy = y[np.minimum(np.searchsorted(cy, mid), len(y) - 1)]
    return float(np.sqrt(np.sum((u - lo) * (qx - qy) ** 2)))


def projection_angles(n_proj: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, np.pi, size=n_proj)


def sliced_wasserstein(p: Heatmap, q: Heatmap, n_proj: int = 500, seed: int = 0) -> float:
    """Root-mean-square over random directions of the 1-D W2 between projected heatmaps (meters)."""
    if p.is_empty or q.is_empty:
        raise ValidationError("sliced Wasserstein needs non-empty heatmaps")
    if n_proj < 1:
        raise ValidationError("n_proj must be at least 1")
    pp, pw = p.points_and_weights()
    qp, qw = q.points_and_weights()
    theta = projection_angles(n_proj, seed)
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    px, qx = pp @ dirs.T, qp @ dirs.T
    sq = [wasserstein2_1d(px[:, k], pw, qx[:, k], qw) ** 2 for k in range(n_proj)]
    return float(np.sqrt(np.mean(sq)))


# -- set comparison ---------------------------------------------------------------


@dataclass
class SimilarityReport:
    edr_mean: float
    dtw_mean: float
    cosine: float
    sliced_wasserstein: float
    n_generated: int
    n_reference: int
    tau: float = 20.0
    n_proj: int = 500
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate_sets(
    generated: Sequence[Trajectory],
    reference: Sequence[Trajectory],
    extent: Extent,
    tau: float = 20.0,
    n_proj: int = 500,
    seed: int = 0,
) -> SimilarityReport:
    if not generated or not reference:
        raise ValidationError("evaluate_sets needs non-empty generated and reference lists")
    edr_min, dtw_min = min_match(generated, reference, tau)
    hg, hr = heatmap_from(generated, extent), heatmap_from(reference, extent)
    return SimilarityReport(
        edr_mean=float(np.mean(edr_min)),
        dtw_mean=float(np.mean(dtw_min)),
        cosine=cosine_sim(hg, hr),
        sliced_wasserstein=sliced_wasserstein(hg, hr, n_proj, seed),
        n_generated=len(generated),
        n_reference=len(reference),
        tau=float(tau),
        n_proj=int(n_proj),
        seed=int(seed),
    )
