"""Map and trajectory data formats, synthetic generators and spatial splits.

Coordinates are planar meters in a local frame. An :class:`Extent` is the
square ``[origin_x, origin_x + side] x [origin_y, origin_y + side]`` divided
into ``side / cell_size`` cells per axis. All stored coordinates are quantized
to 0.01 m so that files round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

# OpenStreetMap-style highway tags treated as major roads; everything else is minor.
MAJOR_TAGS = frozenset({"major", "motorway", "trunk", "primary", "secondary"})


def quantize(values) -> np.ndarray:
    """Round to 0.01 m so that ``float("%.2f" % v) == v`` for every entry."""
    return np.rint(np.asarray(values, dtype=np.float64) * 100.0) / 100.0


@dataclass(frozen=True)
class Extent:
    origin_x: float = 0.0
    origin_y: float = 0.0
    side: float = 640.0
    cell_size: float = 10.0

    def __post_init__(self):
        if not self.side > 0:
            raise ValidationError(f"extent side must be positive, got {self.side}")
        if not self.cell_size > 0:
            raise ValidationError(f"cell_size must be positive, got {self.cell_size}")
        ratio = self.side / self.cell_size
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError(
                f"side {self.side} is not an integer multiple of cell_size {self.cell_size}"
            )

    @property
    def n(self) -> int:
        """Cells per side."""
        return int(round(self.side / self.cell_size))

    @property
    def max_x(self) -> float:
        return self.origin_x + self.side

    @property
    def max_y(self) -> float:
        return self.origin_y + self.side

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return (
            (p[:, 0] >= self.origin_x)
            & (p[:, 0] <= self.max_x)
            & (p[:, 1] >= self.origin_y)
            & (p[:, 1] <= self.max_y)
        )

    def cells_of(self, points) -> np.ndarray:
        """Map points to integer cells ``(ix, iy)``, clamping the upper edge to n-1."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        rel = (p - (self.origin_x, self.origin_y)) / self.cell_size
        idx = np.floor(rel).astype(np.int64)
        return np.clip(idx, 0, self.n - 1)

    def cell_centers(self, cells) -> np.ndarray:
        c = np.asarray(cells, dtype=np.float64).reshape(-1, 2)
        return quantize((c + 0.5) * self.cell_size + (self.origin_x, self.origin_y))

    def overlaps(self, other: "Extent") -> bool:
        """True when the two squares share interior area (touching edges do not count)."""
        return (
            self.origin_x < other.max_x
            and other.origin_x < self.max_x
            and self.origin_y < other.max_y
            and other.origin_y < self.max_y
        )

    def to_dict(self) -> dict:
        return {
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "side": self.side,
            "cell_size": self.cell_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Extent":
        try:
            return cls(
                float(d["origin_x"]), float(d["origin_y"]), float(d["side"]), float(d["cell_size"])
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad extent object: {exc}") from exc


class RoadClass(str, Enum):
    MAJOR = "major"
    MINOR = "minor"

    @classmethod
    def from_tag(cls, tag: str) -> "RoadClass":
        return cls.MAJOR if str(tag).strip().lower() in MAJOR_TAGS else cls.MINOR


@dataclass(frozen=True)
class Road:
    points: tuple[tuple[float, float], ...]
    road_class: RoadClass = RoadClass.MINOR

    @classmethod
    def make(cls, points, road_class=RoadClass.MINOR) -> "Road":
        q = quantize(points).reshape(-1, 2)
        return cls(tuple((float(x), float(y)) for x, y in q), RoadClass(road_class))


@dataclass(frozen=True)
class StreetMap:
    extent: Extent
    roads: tuple[Road, ...] = ()

    def __post_init__(self):
        for k, road in enumerate(self.roads):
            if len(road.points) < 2:
                raise ValidationError(f"road {k} has fewer than 2 vertices")
            inside = self.extent.contains(road.points)
            if not inside.all():
                bad = road.points[int(np.argmin(inside))]
                raise ValidationError(f"road {k} vertex {bad} lies outside the extent")

    def to_dict(self) -> dict:
        return {
            "extent": self.extent.to_dict(),
            "roads": [
                {"class": r.road_class.value, "points": [list(p) for p in r.points]}
                for r in self.roads
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StreetMap":
        if not isinstance(d, dict) or "extent" not in d or "roads" not in d:
            raise ParseError("map object needs 'extent' and 'roads'")
        extent = Extent.from_dict(d["extent"])
        roads = []
        for k, r in enumerate(d["roads"]):
            try:
                pts = np.asarray(r["points"], dtype=np.float64)
                tag = r.get("class", "minor")
            except (KeyError, TypeError, ValueError, AttributeError) as exc:
                raise ParseError(f"bad road {k}: {exc}") from exc
            if pts.ndim != 2 or pts.shape[1] != 2:
                raise ParseError(f"road {k}: points must be a list of [x, y] pairs")
            roads.append(Road.make(pts, RoadClass.from_tag(tag)))
        return cls(extent, tuple(roads))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered planar points in meters, sampled every ``point_interval`` seconds."""

    points: np.ndarray
    point_interval: float = 1.0
    traj_id: str | None = None

    def __post_init__(self):
        pts = quantize(self.points).reshape(-1, 2)
        if len(pts) == 0:
            raise ValidationError("a trajectory needs at least one point")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and bool(np.array_equal(self.points, other.points))
            and self.point_interval == other.point_interval
        )

    def __hash__(self):
        return hash(self.points.tobytes())


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass
class Dataset:
    entries: list[tuple[StreetMap, list[Trajectory]]] = field(default_factory=list)
    split: Split = Split.TRAIN

    def __len__(self):
        return len(self.entries)


# -- file I/O ---------------------------------------------------------------


def load_map(path) -> StreetMap:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return StreetMap.from_dict(raw)


def save_map(street_map: StreetMap, path) -> None:
    Path(path).write_text(street_map.dumps() + "\n")


def load_trajectories(path, extent: Extent) -> list[Trajectory]:
    """Read ``traj_id,seq,x,y`` rows; trajectories keep first-appearance order."""
    groups: dict[str, list[tuple[int, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != [
            "traj_id",
            "seq",
            "x",
            "y",
        ]:
            raise ParseError(f"{path}: expected header traj_id,seq,x,y")
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = (int(row["seq"]), float(row["x"]), float(row["y"]))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            groups.setdefault(row["traj_id"], []).append(rec)

    out = []
    for tid, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        seqs = [r[0] for r in rows]
        if seqs != list(range(len(rows))):
            raise ValidationError(f"trajectory {tid}: sequence numbers are not contiguous from 0")
        pts = np.array([(r[1], r[2]) for r in rows])
        inside = extent.contains(pts)
        if not inside.all():
            raise ValidationError(f"trajectory {tid}: point {pts[np.argmin(inside)]} outside extent")
        out.append(Trajectory(pts, traj_id=tid))
    return out


def save_trajectories(trajs: Sequence[Trajectory], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("traj_id,seq,x,y\n")
        for k, tr in enumerate(trajs):
            tid = tr.traj_id if tr.traj_id is not None else f"t{k}"
            for s, (x, y) in enumerate(tr.points):
                fh.write(f"{tid},{s},{x:.2f},{y:.2f}\n")


# -- synthetic data -----------------------------------------------------------


def synth_map(
    seed: int,
    extent: Extent = Extent(),
    grid_pitch: float = 160.0,
    diagonal_count: int = 2,
    major_fraction: float = 0.35,
) -> StreetMap:
    """Axis-aligned street grid with a few major lines and random diagonal chords.

    Chords run between grid intersections, so the road graph stays connected.
    """
    if grid_pitch < 2 * extent.cell_size:
        raise ValidationError("grid_pitch must be at least twice the cell size")
    rng = np.random.default_rng(seed)
    offsets = np.arange(0.0, extent.side + 1e-9, grid_pitch)
    xs = extent.origin_x + offsets
    ys = extent.origin_y + offsets

    def pick_major(count: int) -> set[int]:
        k = max(1, int(round(major_fraction * count)))
        return set(rng.choice(count, size=min(k, count), replace=False).tolist())

    major_v, major_h = pick_major(len(xs)), pick_major(len(ys))
    roads = []
    for k, x in enumerate(xs):
        cls = RoadClass.MAJOR if k in major_v else RoadClass.MINOR
        roads.append(Road.make([(x, extent.origin_y), (x, extent.max_y)], cls))
    for k, y in enumerate(ys):
        cls = RoadClass.MAJOR if k in major_h else RoadClass.MINOR
        roads.append(Road.make([(extent.origin_x, y), (extent.max_x, y)], cls))

    if len(xs) >= 2:
        for _ in range(diagonal_count):
            i0, i1 = rng.choice(len(xs), size=2, replace=False)
            j0, j1 = rng.choice(len(ys), size=2, replace=False)
            roads.append(Road.make([(xs[i0], ys[j0]), (xs[i1], ys[j1])], RoadClass.MINOR))
    return StreetMap(extent, tuple(roads))


def synth_trajectories(
    street_map: StreetMap,
    count: int,
    seed: int,
    major_cost: float = 1.0,
    minor_cost: float = 3.0,
    point_interval: float = 1.0,
) -> list[Trajectory]:
    """Class-weighted shortest street paths between random street cells.

    Moving into a major-road cell costs ``major_cost``, into a minor-only cell
    ``minor_cost``; endpoints come from the largest 4-connected street component.
    """
    from scipy.sparse.csgraph import dijkstra

    from . import raster

    if count <= 0:
        return []
    grid = raster.rasterize_map(street_map)
    major = grid.data[0].astype(bool)
    street = major | grid.data[1].astype(bool)
    comp = raster.largest_component(street, connectivity=4)
    cost = np.where(major, major_cost, minor_cost)
    graph, _ = raster.grid_graph(comp, cost)
    cells = np.argwhere(comp)  # (iy, ix) rows in scan order
    rng = np.random.default_rng(seed)
    ext = street_map.extent
    out = []
    while len(out) < count:
        a, b = rng.integers(0, len(cells), size=2)
        src, dst = int(a), int(b)
        dist, pred = dijkstra(graph, indices=src, return_predecessors=True)
        if not math.isfinite(dist[dst]):
            continue
        path = [dst]
        while path[-1] != src:
            path.append(pred[path[-1]])
        path.reverse()
        pts = ext.cell_centers(cells[np.array(path)][:, ::-1])
        out.append(Trajectory(pts, point_interval=point_interval))
    return out


def spatial_split(
    datasets: Iterable[tuple[StreetMap, list[Trajectory]]],
    boundary: float,
    axis: str = "x",
) -> tuple[Dataset, Dataset]:
    """Entries west (or south) of ``boundary`` train; the rest test."""
    if axis not in ("x", "y"):
        raise ValidationError("axis must be 'x' or 'y'")
    train, test = Dataset(split=Split.TRAIN), Dataset(split=Split.TEST)
    for street_map, trajs in datasets:
        ext = street_map.extent
        lo = ext.origin_x if axis == "x" else ext.origin_y
        hi = lo + ext.side
        if hi <= boundary:
            train.entries.append((street_map, list(trajs)))
        elif lo >= boundary:
            test.entries.append((street_map, list(trajs)))
        else:
            raise ValidationError(f"extent [{lo}, {hi}] straddles the boundary {boundary}")
    return train, test
