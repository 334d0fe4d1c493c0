"""Radio bands and hexagonal base-station layout."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ValidationError
from ..geodata import Extent


@dataclass(frozen=True)
class Band:
    carrier_ghz: float
    bandwidth_hz: float
    tx_power_dbm: float
    noise_figure_db: float = 9.0

    def __post_init__(self):
        if not self.carrier_ghz > 0 or not self.bandwidth_hz > 0:
            raise ValidationError("band carrier and bandwidth must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_BANDS = (
    Band(3.7, 40e6, 43.0, 9.0),
    Band(0.7, 10e6, 40.0, 9.0),
)


@dataclass(frozen=True)
class BaseStation:
    id: int
    position: tuple[float, float]
    height: float = 25.0
    bands: tuple[Band, ...] = DEFAULT_BANDS


def hex_layout(
    extent: Extent,
    spacing: float = 500.0,
    height: float = 25.0,
    bands: tuple[Band, ...] = DEFAULT_BANDS,
) -> list[BaseStation]:
    """Triangular lattice (nearest-neighbour distance ``spacing``) over the extent plus one guard ring.

    Row ``r`` sits at ``origin_y + r * spacing * sqrt(3)/2`` and odd rows are
    shifted by ``spacing / 2``. Stations are numbered row by row.
    """
    if not spacing > 0:
        raise ValidationError("spacing must be positive")
    pitch = spacing * math.sqrt(3.0) / 2.0
    rows = range(-1, int(math.floor(extent.side / pitch + 1e-9)) + 2)
    cols = range(-1, int(math.floor(extent.side / spacing + 1e-9)) + 2)
    stations = []
    for r in rows:
        shift = spacing / 2.0 if r % 2 else 0.0
        for c in cols:
            x = extent.origin_x + c * spacing + shift
            y = extent.origin_y + r * pitch
            stations.append(BaseStation(len(stations), (x, y), height, tuple(bands)))
    return stations


def station_positions(stations) -> np.ndarray:
    return np.array([s.position for s in stations], dtype=np.float64)


def interior_rows(extent: Extent, spacing: float) -> int:
    pitch = spacing * math.sqrt(3.0) / 2.0
    return int(math.floor(extent.side / pitch + 1e-9)) + 1
