"""SINR, equal-share rates, KPIs and the step-based episode loop."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..errors import ValidationError
from ..geodata import Extent, Trajectory
from .channel import ShadowField, pathloss_db, thermal_noise_dbm
from .layout import DEFAULT_BANDS, Band, BaseStation, hex_layout, station_positions

MIN_DISTANCE_M = 1.0
RATE_FLOOR = 1.0


@dataclass(frozen=True)
class EpisodeConfig:
    extent: Extent = Extent(0.0, 0.0, 1920.0, 10.0)
    spacing: float = 500.0
    bands: tuple[Band, ...] = DEFAULT_BANDS
    bs_height: float = 25.0
    ut_height: float = 1.5
    shadow_sigma_db: float = 6.0
    shadow_decorr_m: float = 50.0
    n_sinusoids: int = 100
    n_users: int = 100
    horizon_steps: int = 64
    step_seconds: float = 1.0
    handover_penalty: float = 0.0
    log_base: float = 10.0
    # per-user candidate list length sent to external policies (0 = all)
    extern_candidates: int = 0

    def __post_init__(self):
        bands = tuple(b if isinstance(b, Band) else Band(**b) for b in self.bands)
        object.__setattr__(self, "bands", bands)
        if isinstance(self.extent, dict):
            object.__setattr__(self, "extent", Extent.from_dict(self.extent))
        if not bands:
            raise ValidationError("at least one band is required")
        if not self.spacing > 0 or not self.bs_height > 0 or not self.ut_height > 0:
            raise ValidationError("spacing and heights must be positive")
        if self.shadow_sigma_db < 0 or not self.shadow_decorr_m > 0 or self.n_sinusoids < 1:
            raise ValidationError("invalid shadowing parameters")
        if self.n_users < 1 or self.horizon_steps < 1 or not self.step_seconds > 0:
            raise ValidationError("n_users, horizon_steps and step_seconds must be positive")
        if not self.log_base > 1 or self.handover_penalty < 0 or self.extern_candidates < 0:
            raise ValidationError("invalid log_base, handover_penalty or extern_candidates")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["extent"] = self.extent.to_dict()
        d["bands"] = [b.to_dict() for b in self.bands]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValidationError(f"unknown episode config keys: {sorted(unknown)}")
        return cls(**known)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def with_(self, **kw) -> "EpisodeConfig":
        return replace(self, **kw)


@dataclass
class NetworkState:
    stations: list[BaseStation]
    bands: tuple[Band, ...]
    positions: np.ndarray  # (U, 2)
    association: np.ndarray | None = None  # (U, 2): station index, band index
    time_step: float = 1.0
    step: int = 0
    handover_count: int = 0
    bs_height: float = 25.0
    ut_height: float = 1.5

    @property
    def n_users(self) -> int:
        return len(self.positions)


def received_power_dbm(state: NetworkState, fields: ShadowField | None) -> np.ndarray:
    """(U, S, B) received power; distances are clamped to 1 m."""
    pos = np.asarray(state.positions, dtype=np.float64).reshape(-1, 2)
    st = station_positions(state.stations)
    d = np.maximum(np.linalg.norm(pos[:, None, :] - st[None, :, :], axis=-1), MIN_DISTANCE_M)
    out = np.empty((len(pos), len(state.stations), len(state.bands)))
    for b, band in enumerate(state.bands):
        out[:, :, b] = band.tx_power_dbm - pathloss_db(band, d, state.bs_height, state.ut_height)
        if fields is not None:
            for s, station in enumerate(state.stations):
                out[:, s, b] -= fields.value(station.id, b, pos)
    return out


def sinr_matrix(state: NetworkState, fields: ShadowField | None) -> np.ndarray:
    """(U, S, B) SINR in dB of every user towards every (station, band)."""
    rx_mw = 10.0 ** (received_power_dbm(state, fields) / 10.0)
    noise_mw = np.array([10.0 ** (thermal_noise_dbm(b.bandwidth_hz, b.noise_figure_db) / 10.0) for b in state.bands])
    total = rx_mw.sum(axis=1, keepdims=True)
    interference = total - rx_mw
    return 10.0 * np.log10(rx_mw / (interference + noise_mw[None, None, :]))


def sinr_db(state: NetworkState, fields: ShadowField | None, user: int, station: int, band: int) -> float:
    if not 0 <= user < state.n_users:
        raise ValidationError(f"unknown user {user}")
    sub = replace(state, positions=np.asarray(state.positions).reshape(-1, 2)[user : user + 1])
    return float(sinr_matrix(sub, fields)[0, station, band])


def _argmax_assoc(score: np.ndarray) -> np.ndarray:
    # flat index is station-major, band-minor; argmax returns the first maximum
    u, s, b = score.shape
    flat = np.argmax(score.reshape(u, s * b), axis=1)
    return np.column_stack([flat // b, flat % b]).astype(np.int64)


def max_sinr_association(sinr: np.ndarray) -> np.ndarray:
    return _argmax_assoc(sinr)


def max_sinr_policy(state: NetworkState, fields: ShadowField | None) -> np.ndarray:
    """Associate each user with its best (station, band); ties go to the lowest station, then band."""
    return max_sinr_association(sinr_matrix(state, fields))


def greedy_load_aware_association(sinr: np.ndarray, bandwidths: Sequence[float]) -> np.ndarray:
    """Users in id order take the cell-band maximizing ``B / (n + 1) * log2(1 + SINR)``."""
    bw = np.asarray(bandwidths, dtype=np.float64)
    se = np.log2(1.0 + 10.0 ** (sinr / 10.0))
    loads = np.zeros(sinr.shape[1:], dtype=np.int64)
    assoc = np.empty((sinr.shape[0], 2), dtype=np.int64)
    for u in range(sinr.shape[0]):
        marginal = bw[None, :] / (loads + 1) * se[u]
        s, b = _argmax_assoc(marginal[None])[0]
        assoc[u] = (s, b)
        loads[s, b] += 1
    return assoc


def cell_loads(assoc: np.ndarray, n_stations: int, n_bands: int) -> np.ndarray:
    loads = np.zeros((n_stations, n_bands), dtype=np.int64)
    if assoc is not None:
        np.add.at(loads, (assoc[:, 0], assoc[:, 1]), 1)
    return loads


def user_rates(assoc: np.ndarray, sinr: np.ndarray, bandwidths: Sequence[float]) -> np.ndarray:
    """Equal-share rate of every user in bit/s."""
    assoc = np.asarray(assoc, dtype=np.int64)
    bw = np.asarray(bandwidths, dtype=np.float64)
    loads = cell_loads(assoc, sinr.shape[1], sinr.shape[2])
    users = np.arange(len(assoc))
    own = sinr[users, assoc[:, 0], assoc[:, 1]]
    n = loads[assoc[:, 0], assoc[:, 1]]
    return bw[assoc[:, 1]] / n * np.log2(1.0 + 10.0 ** (own / 10.0))


@dataclass(frozen=True)
class KPI:
    p5_rate: float
    utility: float
    handovers: int


def count_handovers(prev_assoc, new_assoc) -> int:
    if prev_assoc is None:
        return 0
    prev = np.asarray(prev_assoc)
    new = np.asarray(new_assoc)
    if prev.shape != new.shape:
        raise ValidationError("associations cover different user sets")
    return int(np.any(prev != new, axis=1).sum())


def kpis(rates, prev_assoc, new_assoc, log_base: float = 10.0) -> KPI:
    r = np.asarray(rates, dtype=np.float64)
    if r.size == 0:
        raise ValidationError("no user rates")
    p5 = float(np.percentile(r, 5.0))
    util = float(np.mean(np.log(np.maximum(r, RATE_FLOOR)) / math.log(log_base)))
    return KPI(p5, util, count_handovers(prev_assoc, new_assoc))


@dataclass(frozen=True)
class Observation:
    """What a policy sees at one step."""

    step: int
    sinr_db: np.ndarray  # (U, S, B)
    loads: np.ndarray  # (S, B) under the previous association (zeros at step 0)
    previous: np.ndarray | None
    station_ids: tuple[int, ...]
    bandwidths: tuple[float, ...]


Policy = Callable[[Observation], np.ndarray]


class MaxSinrPolicy:
    name = "maxsinr"

    def __call__(self, obs: Observation) -> np.ndarray:
        return max_sinr_association(obs.sinr_db)


class GreedyLoadAwarePolicy:
    name = "greedy"

    def __call__(self, obs: Observation) -> np.ndarray:
        return greedy_load_aware_association(obs.sinr_db, obs.bandwidths)


def validate_association(assoc, n_users: int, n_stations: int, n_bands: int) -> np.ndarray:
    a = np.asarray(assoc)
    if a.shape != (n_users, 2) or not np.issubdtype(a.dtype, np.integer):
        raise ValidationError(f"association must be an integer array of shape ({n_users}, 2)")
    if np.any(a < 0) or np.any(a[:, 0] >= n_stations) or np.any(a[:, 1] >= n_bands):
        raise ValidationError("association references an unknown station or band")
    return a.astype(np.int64)


def user_positions(trajs: Sequence[Trajectory], step: int, step_seconds: float) -> np.ndarray:
    out = np.empty((len(trajs), 2))
    t = step * step_seconds
    for u, tr in enumerate(trajs):
        out[u] = tr.points[int(math.floor(t / tr.point_interval + 1e-9))]
    return out


def check_coverage(trajs: Sequence[Trajectory], horizon: int, step_seconds: float) -> None:
    if not trajs:
        raise ValidationError("episode needs at least one user trajectory")
    last = (horizon - 1) * step_seconds
    for u, tr in enumerate(trajs):
        need = int(math.floor(last / tr.point_interval + 1e-9)) + 1
        if len(tr) < need:
            raise ValidationError(f"trajectory {u} has {len(tr)} points, horizon needs {need}")


@dataclass
class EpisodeResult:
    records: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def kpi_csv(self) -> str:
        rows = ["step,p5_rate,utility,handovers"]
        rows += [f"{r['step']},{r['p5_rate']:.6f},{r['utility']:.9f},{r['handovers']}" for r in self.records]
        return "\n".join(rows) + "\n"

    def summary_json(self) -> str:
        return json.dumps(self.summary, sort_keys=True, indent=2)


def build_network(cfg: EpisodeConfig, seed: int) -> tuple[list[BaseStation], ShadowField]:
    stations = hex_layout(cfg.extent, cfg.spacing, cfg.bs_height, cfg.bands)
    fields = ShadowField.generate(
        [s.id for s in stations],
        len(cfg.bands),
        seed,
        cfg.shadow_sigma_db,
        cfg.shadow_decorr_m,
        cfg.n_sinusoids,
    )
    return stations, fields


def run_episode(
    trajs: Sequence[Trajectory], policy: Policy, cfg: EpisodeConfig = EpisodeConfig(), seed: int = 0
) -> EpisodeResult:
    """Step users along their trajectories, query ``policy`` each step, and record KPIs.

    ``seed`` fixes the shadowing realization; the layout is deterministic.
    The reward of a step is ``utility - handover_penalty * handovers``.
    """
    trajs = list(trajs)
    check_coverage(trajs, cfg.horizon_steps, cfg.step_seconds)
    stations, fields = build_network(cfg, seed)
    bandwidths = tuple(b.bandwidth_hz for b in cfg.bands)
    state = NetworkState(
        stations,
        cfg.bands,
        user_positions(trajs, 0, cfg.step_seconds),
        time_step=cfg.step_seconds,
        bs_height=cfg.bs_height,
        ut_height=cfg.ut_height,
    )
    result = EpisodeResult()
    all_rates = []
    for step in range(cfg.horizon_steps):
        state.step = step
        state.positions = user_positions(trajs, step, cfg.step_seconds)
        sinr = sinr_matrix(state, fields)
        obs = Observation(
            step,
            sinr,
            cell_loads(state.association, len(stations), len(cfg.bands)),
            None if state.association is None else state.association.copy(),
            tuple(s.id for s in stations),
            bandwidths,
        )
        assoc = validate_association(policy(obs), len(trajs), len(stations), len(cfg.bands))
        rates = user_rates(assoc, sinr, bandwidths)
        k = kpis(rates, state.association, assoc, cfg.log_base)
        state.handover_count += k.handovers
        state.association = assoc
        all_rates.append(rates)
        result.records.append(
            {
                "step": step,
                "p5_rate": k.p5_rate,
                "utility": k.utility,
                "handovers": k.handovers,
                "reward": k.utility - cfg.handover_penalty * k.handovers,
            }
        )
    recs = result.records
    result.summary = {
        "steps": len(recs),
        "users": len(trajs),
        "seed": int(seed),
        "policy": getattr(policy, "name", type(policy).__name__),
        "mean_step_p5_rate": float(np.mean([r["p5_rate"] for r in recs])),
        "episode_p5_rate": float(np.percentile(np.concatenate(all_rates), 5.0)),
        "mean_utility": float(np.mean([r["utility"] for r in recs])),
        "total_handovers": int(state.handover_count),
        "mean_reward": float(np.mean([r["reward"] for r in recs])),
    }
    return result
