"""Rasterization of maps and trajectories, and the inverse image-to-path step.

Arrays are indexed ``data[channel, iy, ix]``: row ``iy`` holds cells whose
y-coordinate falls in ``[origin_y + iy*cell, origin_y + (iy+1)*cell)``. Image
files (PGM/PNG) are written with y pointing up, so the file's first row is
``iy = n - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix

from .errors import ParseError, ValidationError
from .geodata import Extent, RoadClass, StreetMap, Trajectory

_STRUCT8 = np.ones((3, 3), dtype=bool)
_STRUCT4 = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class RasterGrid:
    extent: Extent
    data: np.ndarray  # (channels, n, n)

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim == 2:
            d = d[None]
        if d.ndim != 3 or d.shape[1] != d.shape[2]:
            raise ValidationError(f"raster data must be (C, N, N), got {d.shape}")
        if d.shape[1] != self.extent.n:
            raise ValidationError(f"raster size {d.shape[1]} does not match extent n={self.extent.n}")
        if d.shape[1] < 8:
            raise ValidationError("rasters need at least 8 cells per side")
        object.__setattr__(self, "data", d)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]


# -- discrete lines -----------------------------------------------------------


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """8-connected cells of the segment, endpoints included."""
    cells = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        cells.append((x, y))
        if x == x1 and y == y1:
            return cells
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def line4(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """4-connected variant of :func:`bresenham`: diagonal moves get an x-step corner cell."""
    cells = []
    prev = None
    for c in bresenham(x0, y0, x1, y1):
        if prev is not None and c[0] != prev[0] and c[1] != prev[1]:
            cells.append((c[0], prev[1]))
        cells.append(c)
        prev = c
    return cells


def _draw(canvas: np.ndarray, cells: np.ndarray, line) -> None:
    if len(cells) == 1:
        canvas[cells[0, 1], cells[0, 0]] = 1
        return
    for (xa, ya), (xb, yb) in zip(cells[:-1], cells[1:]):
        for x, y in line(int(xa), int(ya), int(xb), int(yb)):
            canvas[y, x] = 1


# -- forward rasterization ----------------------------------------------------


def rasterize_trajectory(traj: Trajectory, extent: Extent) -> RasterGrid:
    canvas = np.zeros((extent.n, extent.n), dtype=np.uint8)
    _draw(canvas, extent.cells_of(traj.points), bresenham)
    return RasterGrid(extent, canvas[None])


def rasterize_polyline(points, extent: Extent) -> np.ndarray:
    canvas = np.zeros((extent.n, extent.n), dtype=np.uint8)
    _draw(canvas, extent.cells_of(points), line4)
    return canvas


def rasterize_map(street_map: StreetMap) -> RasterGrid:
    """Channel 0 holds major roads, channel 1 minor roads; one cell wide, 4-connected."""
    ext = street_map.extent
    data = np.zeros((2, ext.n, ext.n), dtype=np.uint8)
    for road in street_map.roads:
        ch = 0 if road.road_class is RoadClass.MAJOR else 1
        data[ch] |= rasterize_polyline(road.points, ext)
    return RasterGrid(ext, data)


def street_mask(map_raster: RasterGrid) -> RasterGrid:
    if map_raster.channels != 2:
        raise ValidationError(f"street_mask needs a 2-channel map raster, got {map_raster.channels}")
    mask = (map_raster.data[0] > 0) | (map_raster.data[1] > 0)
    return RasterGrid(map_raster.extent, mask.astype(np.uint8)[None])


# -- connectivity helpers -----------------------------------------------------


def largest_component(mask: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Boolean mask of the largest connected component; ties go to the first in scan order."""
    mask = np.asarray(mask, dtype=bool)
    labels, count = ndimage.label(mask, structure=_STRUCT8 if connectivity == 8 else _STRUCT4)
    if count == 0:
        return np.zeros_like(mask)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def component_count(mask: np.ndarray, connectivity: int = 8) -> int:
    _, count = ndimage.label(
        np.asarray(mask, dtype=bool), structure=_STRUCT8 if connectivity == 8 else _STRUCT4
    )
    return int(count)


def grid_graph(mask: np.ndarray, cell_cost: np.ndarray | None = None):
    """Directed 4-neighbour graph over ``mask`` cells.

    Nodes are numbered in ``np.argwhere(mask)`` order. The edge ``u -> v``
    weighs ``cell_cost[v]`` (1 when omitted). Returns ``(csr_matrix, index)``
    where ``index[iy, ix]`` is the node id or -1.
    """
    mask = np.asarray(mask, dtype=bool)
    n_rows, n_cols = mask.shape
    index = -np.ones(mask.shape, dtype=np.int64)
    cells = np.argwhere(mask)
    index[cells[:, 0], cells[:, 1]] = np.arange(len(cells))
    cost = np.ones(mask.shape) if cell_cost is None else np.asarray(cell_cost, dtype=np.float64)
    rows, cols, vals = [], [], []
    for dy, dx in ((1, 0), (0, 1), (-1, 0), (0, -1)):
        ny, nx = cells[:, 0] + dy, cells[:, 1] + dx
        ok = (ny >= 0) & (ny < n_rows) & (nx >= 0) & (nx < n_cols)
        ok[ok] &= mask[ny[ok], nx[ok]]
        rows.append(index[cells[ok, 0], cells[ok, 1]])
        cols.append(index[ny[ok], nx[ok]])
        vals.append(cost[ny[ok], nx[ok]])
    graph = csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(cells), len(cells)),
    )
    return graph, index


# -- image -> trajectory ------------------------------------------------------


def image_to_trajectory(img: RasterGrid, threshold: float = 0.5, extent: Extent | None = None) -> Trajectory:
    """Order the cells of the largest 8-connected blob into a walk.

    Starts at a cell with exactly one neighbour (first in scan order), or at
    the first cell in scan order when the blob has none, then repeatedly steps
    to the nearest unvisited cell until the blob is exhausted.
    """
    if img.channels != 1:
        raise ValidationError("image_to_trajectory needs a 1-channel raster")
    extent = extent or img.extent
    binary = img.data[0] >= threshold
    if not binary.any():
        raise ValidationError("raster is empty after thresholding")
    comp = largest_component(binary, connectivity=8)
    cells = np.argwhere(comp)  # (iy, ix), scan order

    padded = np.pad(comp, 1).astype(np.int32)
    degree = ndimage.convolve(padded, _STRUCT8.astype(np.int32), mode="constant")[1:-1, 1:-1] - 1
    ends = np.flatnonzero(degree[cells[:, 0], cells[:, 1]] == 1)
    current = int(ends[0]) if len(ends) else 0

    remaining = np.ones(len(cells), dtype=bool)
    order = []
    pos = cells.astype(np.float64)
    for _ in range(len(cells)):
        order.append(current)
        remaining[current] = False
        if not remaining.any():
            break
        d2 = ((pos - pos[current]) ** 2).sum(axis=1)
        d2[~remaining] = np.inf
        current = int(np.argmin(d2))
    ordered = cells[order]
    return Trajectory(extent.cell_centers(ordered[:, ::-1]))


# -- D4 symmetries -------------------------------------------------------------


def dihedral_transform(grid, element: int):
    """Apply symmetry ``element`` in 0..7 to the last two axes.

    ``element = 4*f + r`` flips the columns when ``f == 1`` and then rotates by
    ``r`` quarter turns (``np.rot90`` direction). Accepts a :class:`RasterGrid`
    or a bare array.
    """
    if not 0 <= element <= 7:
        raise ValidationError("dihedral element must be in 0..7")
    arr = grid.data if isinstance(grid, RasterGrid) else np.asarray(grid)
    if arr.shape[-1] != arr.shape[-2]:
        raise ValidationError("dihedral_transform needs a square raster")
    flip, rot = divmod(element, 4)
    out = arr[..., ::-1] if flip else arr
    out = np.ascontiguousarray(np.rot90(out, k=rot, axes=(-2, -1)))
    if isinstance(grid, RasterGrid):
        return RasterGrid(grid.extent, out)
    return out


def dihedral_compose(a: int, b: int) -> int:
    """Element equal to applying ``b`` first and then ``a``."""
    fa, ra = divmod(a, 4)
    fb, rb = divmod(b, 4)
    # (R^ra F^fa)(R^rb F^fb) = R^(ra + (-1)^fa rb) F^(fa + fb)
    rot = (ra + (-rb if fa else rb)) % 4
    return 4 * ((fa + fb) % 2) + rot


# -- image files ---------------------------------------------------------------


def to_image(channel: np.ndarray) -> np.ndarray:
    """Unit-interval channel -> uint8 image rows with y pointing up."""
    img = np.clip(np.asarray(channel, dtype=np.float64), 0.0, 1.0)
    return np.round(img[::-1] * 255.0).astype(np.uint8)


def write_pgm(grid: RasterGrid, stem) -> list[Path]:
    """Write one binary PGM per channel as ``<stem>.ch<k>.pgm``."""
    paths = []
    for k in range(grid.channels):
        img = to_image(grid.data[k])
        path = Path(f"{stem}.ch{k}.pgm")
        with open(path, "wb") as fh:
            fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
            fh.write(img.tobytes())
        paths.append(path)
    return paths


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM back into a unit-interval array indexed ``[iy, ix]``."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while raw[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    body = np.frombuffer(raw[pos + 1 : pos + 1 + width * height], dtype=np.uint8)
    if body.size != width * height:
        raise ParseError(f"{path}: truncated pixel data")
    return body.reshape(height, width)[::-1].astype(np.float64) / maxval


def save_png(channel: np.ndarray, path, scale: int = 1) -> None:
    from PIL import Image

    img = to_image(channel)
    if scale > 1:
        img = np.kron(img, np.ones((scale, scale), dtype=np.uint8))
    Image.fromarray(img).save(path, format="PNG", optimize=False)
