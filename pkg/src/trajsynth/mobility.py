"""Baseline mobility models: random waypoint, Gauss-Markov and their
street-restricted variants (M-RWP routes with BFS, M-GM projects onto streets).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np

from .errors import ValidationError
from .geodata import Extent, Trajectory
from .raster import RasterGrid, largest_component


class Model(str, Enum):
    RWP = "rwp"
    GM = "gm"
    M_RWP = "mrwp"
    M_GM = "mgm"


@dataclass(frozen=True)
class MobilityConfig:
    model: Model = Model.RWP
    speed_min: float = 0.5
    speed_max: float = 2.0
    gm_alpha: float = 0.75
    gm_mean_speed: float = 1.25
    gm_sigma: float = 0.5
    # heading noise (rad); the speed noise is gm_sigma
    gm_heading_sigma: float = 0.5
    # fraction of the side treated as border band by M-GM
    gm_edge_margin: float = 0.1
    step_seconds: float = 1.0
    horizon_steps: int = 64

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if not 0 <= self.speed_min <= self.speed_max:
            raise ValidationError("need 0 <= speed_min <= speed_max")
        if not 0 <= self.gm_alpha <= 1:
            raise ValidationError("gm_alpha must lie in [0, 1]")
        if not 0 <= self.gm_edge_margin < 0.5:
            raise ValidationError("gm_edge_margin must lie in [0, 0.5)")
        if self.gm_sigma < 0 or self.gm_heading_sigma < 0:
            raise ValidationError("Gauss-Markov sigmas must be non-negative")
        if not self.step_seconds > 0:
            raise ValidationError("step_seconds must be positive")
        if self.horizon_steps < 1:
            raise ValidationError("horizon_steps must be at least 1")

    def with_model(self, model) -> "MobilityConfig":
        return replace(self, model=Model(model))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.value
        return d


def speed_matched_config(model, extent: Extent, point_interval: float = 1.0, horizon_steps: int = 64) -> MobilityConfig:
    """Config whose walkers move at roughly one cell per sample, like routed ground truth.

    Waypoint speeds are uniform in [0.5, 1.5] x pace and the GM mean speed is the
    pace itself (sigma 0.3 x pace), with ``pace = cell_size / point_interval``.
    """
    pace = extent.cell_size / point_interval
    return MobilityConfig(
        model=model,
        speed_min=0.5 * pace,
        speed_max=1.5 * pace,
        gm_mean_speed=pace,
        gm_sigma=0.3 * pace,
        step_seconds=point_interval,
        horizon_steps=horizon_steps,
    )


def _require(cfg: MobilityConfig, model: Model) -> None:
    if cfg.model is not model:
        raise ValidationError(f"config is for {cfg.model.value}, expected {model.value}")


def gauss_markov_step(prev: float, mean: float, alpha: float, sigma: float, w: float) -> float:
    """One step of the variance-stabilised Gauss-Markov recurrence."""
    return alpha * prev + (1.0 - alpha) * mean + sigma * math.sqrt(1.0 - alpha * alpha) * w


def gm_process(cfg: MobilityConfig, steps: int, rng: np.random.Generator, heading0: float):
    """Raw speed and heading sequences (length ``steps``) before any motion constraints."""
    speeds = np.empty(steps)
    headings = np.empty(steps)
    s, h = cfg.gm_mean_speed, heading0
    w = rng.standard_normal((steps, 2))
    for k in range(steps):
        s = gauss_markov_step(s, cfg.gm_mean_speed, cfg.gm_alpha, cfg.gm_sigma, w[k, 0])
        h = gauss_markov_step(h, heading0, cfg.gm_alpha, cfg.gm_heading_sigma, w[k, 1])
        speeds[k], headings[k] = s, h
    return speeds, headings


# -- free-space models --------------------------------------------------------------


def gen_rwp(cfg: MobilityConfig, extent: Extent, seed: int) -> Trajectory:
    """Random waypoint without pauses; leftover step time carries into the next leg."""
    _require(cfg, Model.RWP)
    rng = np.random.default_rng(seed)
    lo = np.array([extent.origin_x, extent.origin_y])

    def uniform_point():
        return lo + rng.random(2) * extent.side

    pos = uniform_point()
    target = uniform_point()
    speed = rng.uniform(cfg.speed_min, cfg.speed_max)
    points = [pos.copy()]
    for _ in range(cfg.horizon_steps - 1):
        budget = cfg.step_seconds
        while budget > 0 and speed > 0:
            gap = target - pos
            dist = float(np.hypot(*gap))
            need = dist / speed
            if need <= budget:
                pos = target
                budget -= need
                target = uniform_point()
                speed = rng.uniform(cfg.speed_min, cfg.speed_max)
            else:
                pos = pos + gap * (speed * budget / dist)
                budget = 0.0
        points.append(pos.copy())
    return Trajectory(np.array(points), point_interval=cfg.step_seconds)


def _reflect(value: float, lo: float, hi: float) -> tuple[float, bool]:
    span = hi - lo
    if span <= 0:
        return lo, False
    u = (value - lo) % (2 * span)
    flipped = not (lo <= value <= hi)
    return lo + (u if u <= span else 2 * span - u), flipped


def gen_gm(cfg: MobilityConfig, extent: Extent, seed: int) -> Trajectory:
    """Gauss-Markov speed and heading with specular reflection at the extent walls.

    Negative speeds are treated as standing still. A wall hit mirrors both the
    current and the mean heading.
    """
    _require(cfg, Model.GM)
    rng = np.random.default_rng(seed)
    pos = np.array([extent.origin_x, extent.origin_y]) + rng.random(2) * extent.side
    mean_h = rng.uniform(0.0, 2 * math.pi)
    s, h = cfg.gm_mean_speed, mean_h
    points = [pos.copy()]
    w = rng.standard_normal((cfg.horizon_steps - 1, 2))
    for k in range(cfg.horizon_steps - 1):
        s = gauss_markov_step(s, cfg.gm_mean_speed, cfg.gm_alpha, cfg.gm_sigma, w[k, 0])
        h = gauss_markov_step(h, mean_h, cfg.gm_alpha, cfg.gm_heading_sigma, w[k, 1])
        step = max(s, 0.0) * cfg.step_seconds
        x, fx = _reflect(pos[0] + step * math.cos(h), extent.origin_x, extent.max_x)
        y, fy = _reflect(pos[1] + step * math.sin(h), extent.origin_y, extent.max_y)
        if fx:
            h, mean_h = math.pi - h, math.pi - mean_h
        if fy:
            h, mean_h = -h, -mean_h
        pos = np.array([x, y])
        points.append(pos.copy())
    return Trajectory(np.array(points), point_interval=cfg.step_seconds)


# -- street-restricted models ---------------------------------------------------------

# (dx, dy) in N, E, S, W order; N is +y.
NEIGHBORS = ((0, 1), (1, 0), (0, -1), (-1, 0))


def _mask_array(mask) -> np.ndarray:
    arr = mask.data[0] if isinstance(mask, RasterGrid) else np.asarray(mask)
    return np.asarray(arr, dtype=bool)


def bfs_path(mask, start: tuple[int, int], goal: tuple[int, int]) -> list[tuple[int, int]]:
    """Shortest 4-connected street path between cells ``(ix, iy)``, endpoints included.

    Neighbours are expanded in N, E, S, W order so ties resolve deterministically.
    """
    grid = _mask_array(mask)
    n_rows, n_cols = grid.shape
    start, goal = (int(start[0]), int(start[1])), (int(goal[0]), int(goal[1]))
    for c in (start, goal):
        if not (0 <= c[0] < n_cols and 0 <= c[1] < n_rows and grid[c[1], c[0]]):
            raise ValidationError(f"cell {c} is not a street cell")
    if start == goal:
        return [start]
    parent = {start: None}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        cx, cy = cur
        for dx, dy in NEIGHBORS:
            nxt = (cx + dx, cy + dy)
            if nxt in parent:
                continue
            if not (0 <= nxt[0] < n_cols and 0 <= nxt[1] < n_rows) or not grid[nxt[1], nxt[0]]:
                continue
            parent[nxt] = cur
            if nxt == goal:
                path = [nxt]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                return path[::-1]
            queue.append(nxt)
    raise ValidationError(f"goal {goal} is unreachable from {start}")


def _street_cells(mask) -> tuple[np.ndarray, Extent]:
    grid = _mask_array(mask)
    if not grid.any():
        raise ValidationError("street mask is empty")
    comp = largest_component(grid, connectivity=4)
    cells = np.argwhere(comp)[:, ::-1]  # (ix, iy)
    extent = mask.extent if isinstance(mask, RasterGrid) else Extent(side=float(grid.shape[0]) * 10.0)
    return cells, extent


def gen_m_rwp(cfg: MobilityConfig, mask, seed: int) -> Trajectory:
    """Random waypoint over street cells, legs routed by :func:`bfs_path`.

    The walker advances along the leg's cell-centre polyline at the leg speed and
    each emitted point is the centre of the path cell nearest to its position.
    """
    _require(cfg, Model.M_RWP)
    cells, extent = _street_cells(mask)
    grid = _mask_array(mask)
    rng = np.random.default_rng(seed)
    cur = tuple(cells[rng.integers(len(cells))])
    out = [cur]
    if len(cells) == 1:
        out *= cfg.horizon_steps
        return Trajectory(extent.cell_centers(out), point_interval=cfg.step_seconds)

    leg: list = [cur]
    along = 0.0  # meters travelled on the current leg
    speed = 0.0
    while len(out) < cfg.horizon_steps:
        budget = cfg.step_seconds
        while budget > 0:
            remaining = (len(leg) - 1) * extent.cell_size - along
            if remaining <= 1e-12:
                goal = tuple(cells[rng.integers(len(cells))])
                leg = bfs_path(grid, leg[-1], goal)
                along = 0.0
                speed = rng.uniform(cfg.speed_min, cfg.speed_max)
                if len(leg) == 1:
                    continue
                remaining = (len(leg) - 1) * extent.cell_size
            if speed <= 0:
                break
            need = remaining / speed
            if need <= budget:
                along += remaining
                budget -= need
            else:
                along += speed * budget
                budget = 0.0
        k = min(int(math.floor(along / extent.cell_size + 0.5)), len(leg) - 1)
        out.append(leg[k])
    return Trajectory(extent.cell_centers(out), point_interval=cfg.step_seconds)


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2 * math.pi) - math.pi


def _edge_heading(cell, n: int, margin: int) -> float | None:
    """Inward mean heading for a cell within ``margin`` cells of the border, else None."""
    ux = (cell[0] < margin) - (cell[0] >= n - margin)
    uy = (cell[1] < margin) - (cell[1] >= n - margin)
    if ux == 0 and uy == 0:
        return None
    return math.atan2(uy, ux)


def gen_m_gm(cfg: MobilityConfig, mask, seed: int) -> Trajectory:
    """Gauss-Markov motion confined to street cells.

    A step whose landing cell is off-street (or not adjacent to the current cell)
    is redirected to the street 4-neighbour whose direction deviates least from
    the current heading; the walker then moves along that axis from the current
    cell centre. With no street neighbour the heading is resampled uniformly.
    Inside the border band (``gm_edge_margin`` of the side) the mean heading is
    turned inward, as in the classic Gauss-Markov edge rule.
    """
    _require(cfg, Model.M_GM)
    cells, extent = _street_cells(mask)
    grid = _mask_array(mask)
    n = grid.shape[0]
    cs = extent.cell_size
    origin = np.array([extent.origin_x, extent.origin_y])
    rng = np.random.default_rng(seed)

    cell = tuple(int(v) for v in cells[rng.integers(len(cells))])
    pos = origin + (np.array(cell) + 0.5) * cs
    mean_h = rng.uniform(0.0, 2 * math.pi)
    s, h = cfg.gm_mean_speed, mean_h
    out = [cell]
    w = rng.standard_normal((cfg.horizon_steps - 1, 2))

    edge_cells = max(1, int(round(cfg.gm_edge_margin * n)))

    def is_street(c):
        return 0 <= c[0] < n and 0 <= c[1] < n and grid[c[1], c[0]]

    for k in range(cfg.horizon_steps - 1):
        s = gauss_markov_step(s, cfg.gm_mean_speed, cfg.gm_alpha, cfg.gm_sigma, w[k, 0])
        h = gauss_markov_step(h, mean_h, cfg.gm_alpha, cfg.gm_heading_sigma, w[k, 1])
        step = max(s, 0.0) * cfg.step_seconds
        prop = pos + step * np.array([math.cos(h), math.sin(h)])
        pc = tuple(int(v) for v in np.floor((prop - origin) / cs))
        if is_street(pc) and max(abs(pc[0] - cell[0]), abs(pc[1] - cell[1])) <= 1 and (
            pc == cell or is_street((pc[0], cell[1])) or is_street((cell[0], pc[1]))
        ):
            pos, cell = prop, pc
        else:
            options = [(dx, dy) for dx, dy in NEIGHBORS if is_street((cell[0] + dx, cell[1] + dy))]
            if not options:
                h = mean_h = rng.uniform(0.0, 2 * math.pi)
                out.append(cell)
                continue
            dev = [abs(_wrap(math.atan2(dy, dx) - h)) for dx, dy in options]
            dx, dy = options[int(np.argmin(dev))]
            new_h = math.atan2(dy, dx)
            # keep the heading continuous so the recurrence does not see a 2*pi jump
            h = h + _wrap(new_h - h)
            mean_h = h
            centre = origin + (np.array(cell) + 0.5) * cs
            pos = centre + min(step, cs) * np.array([dx, dy], dtype=float)
            landed = tuple(int(v) for v in np.floor((pos - origin) / cs).clip(0, n - 1))
            if is_street(landed):
                cell = landed
            else:
                pos = centre
        inward = _edge_heading(cell, n, edge_cells)
        if inward is not None:
            mean_h = h + _wrap(inward - h)
        out.append(cell)
    return Trajectory(extent.cell_centers(out), point_interval=cfg.step_seconds)


def generate(cfg: MobilityConfig, count: int, seed: int, extent: Extent | None = None, mask=None):
    """Batch helper: trajectory ``k`` uses seed ``(seed, k)`` via :class:`numpy.random.SeedSequence`."""
    seqs = np.random.SeedSequence(seed).spawn(count)
    seeds = [int(s.generate_state(1)[0]) for s in seqs]
    if cfg.model in (Model.RWP, Model.GM):
        if extent is None:
            extent = mask.extent if isinstance(mask, RasterGrid) else Extent()
        fn = gen_rwp if cfg.model is Model.RWP else gen_gm
        return [fn(cfg, extent, s) for s in seeds]
    if mask is None:
        raise ValidationError(f"{cfg.model.value} needs a street mask")
    fn = gen_m_rwp if cfg.model is Model.M_RWP else gen_m_gm
    return [fn(cfg, mask, s) for s in seeds]
