"""Large-scale channel: UMa NLOS path loss and sum-of-sinusoids shadow fading."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from .layout import Band, BaseStation


def pathloss_db(band: Band | float, d2d, bs_height: float = 25.0, ut_height: float = 1.5):
    """3GPP urban-macro NLOS path loss in dB (always NLOS).

    ``band`` may be a :class:`Band` or a carrier frequency in GHz. ``d2d`` is
    the horizontal distance in meters and must be at least 1 m.
    """
    f_ghz = band.carrier_ghz if isinstance(band, Band) else float(band)
    d2d = np.asarray(d2d, dtype=np.float64)
    if np.any(d2d < 1.0):
        raise ValidationError("path loss model is only valid for d2d >= 1 m")
    d3d = np.sqrt(d2d**2 + (bs_height - ut_height) ** 2)
    pl = 13.54 + 39.08 * np.log10(d3d) + 20.0 * math.log10(f_ghz) - 0.6 * (ut_height - 1.5)
    return float(pl) if pl.ndim == 0 else pl


def exponential_wavenumbers(n: int, decorr_m: float, rng: np.random.Generator) -> np.ndarray:
    """Radial wavenumbers whose isotropic 2-D sum has autocorrelation ``exp(-d / decorr_m)``.

    The radial density is ``k d^2 / (1 + (k d)^2)^(3/2)``, with CDF
    ``1 - 1/sqrt(1 + (k d)^2)``; draws are stratified over the CDF.
    """
    u = (np.arange(n) + rng.random(n)) / n
    return np.sqrt(1.0 / (1.0 - u) ** 2 - 1.0) / decorr_m


@dataclass(frozen=True, eq=False)
class Sinusoids:
    wavevectors: np.ndarray  # (N_s, 2) rad/m
    phases: np.ndarray  # (N_s,) rad


@dataclass(eq=False)
class ShadowField:
    """Independent shadowing fields per (station id, band index)."""

    sigma_db: float = 6.0
    decorr_m: float = 50.0
    components: dict = field(default_factory=dict)

    @classmethod
    def generate(
        cls,
        station_ids,
        n_bands: int,
        seed: int,
        sigma_db: float = 6.0,
        decorr_m: float = 50.0,
        n_sinusoids: int = 100,
    ) -> "ShadowField":
        if n_sinusoids < 1:
            raise ValidationError("need at least one sinusoid")
        rng = np.random.default_rng(seed)
        comps = {}
        for sid in station_ids:
            for b in range(n_bands):
                k = exponential_wavenumbers(n_sinusoids, decorr_m, rng)
                theta = rng.uniform(0.0, 2 * math.pi, n_sinusoids)
                phases = rng.uniform(0.0, 2 * math.pi, n_sinusoids)
                vec = np.column_stack([k * np.cos(theta), k * np.sin(theta)])
                comps[(int(sid), b)] = Sinusoids(vec, phases)
        return cls(sigma_db, decorr_m, comps)

    def value(self, station: int, band: int, positions) -> np.ndarray:
        key = (int(station), int(band))
        if key not in self.components:
            raise ValidationError(f"no shadow field for station {station}, band {band}")
        comp = self.components[key]
        p = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        ns = len(comp.phases)
        arg = p @ comp.wavevectors.T + comp.phases
        return self.sigma_db * math.sqrt(2.0 / ns) * np.cos(arg).sum(axis=1)


def shadow_db(field_: ShadowField, station, band: int, position) -> float | np.ndarray:
    sid = station.id if isinstance(station, BaseStation) else station
    vals = field_.value(sid, band, position)
    return float(vals[0]) if np.ndim(position) == 1 else vals


def thermal_noise_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db
