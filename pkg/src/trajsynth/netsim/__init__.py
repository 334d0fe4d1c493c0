"""Dual-band hexagonal cellular network driven by user trajectories."""

from .channel import ShadowField, Sinusoids, exponential_wavenumbers, pathloss_db, shadow_db, thermal_noise_dbm
from .extern import ExternalPolicy, decode_response, encode_request
from .layout import DEFAULT_BANDS, Band, BaseStation, hex_layout, interior_rows, station_positions
from .sim import (
    KPI,
    EpisodeConfig,
    EpisodeResult,
    GreedyLoadAwarePolicy,
    MaxSinrPolicy,
    NetworkState,
    Observation,
    build_network,
    cell_loads,
    count_handovers,
    greedy_load_aware_association,
    kpis,
    max_sinr_association,
    max_sinr_policy,
    received_power_dbm,
    run_episode,
    sinr_db,
    sinr_matrix,
    user_positions,
    user_rates,
)

POLICIES = {"maxsinr": MaxSinrPolicy, "greedy": GreedyLoadAwarePolicy}

__all__ = [
    "KPI",
    "POLICIES",
    "Band",
    "BaseStation",
    "DEFAULT_BANDS",
    "EpisodeConfig",
    "EpisodeResult",
    "ExternalPolicy",
    "GreedyLoadAwarePolicy",
    "MaxSinrPolicy",
    "NetworkState",
    "Observation",
    "ShadowField",
    "Sinusoids",
    "build_network",
    "cell_loads",
    "count_handovers",
    "decode_response",
    "encode_request",
    "exponential_wavenumbers",
    "greedy_load_aware_association",
    "hex_layout",
    "interior_rows",
    "kpis",
    "max_sinr_association",
    "max_sinr_policy",
    "pathloss_db",
    "received_power_dbm",
    "run_episode",
    "shadow_db",
    "sinr_db",
    "sinr_matrix",
    "station_positions",
    "thermal_noise_dbm",
    "user_positions",
    "user_rates",
]
