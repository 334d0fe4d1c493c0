"""Association policy served by an external process over newline-delimited JSON.

Each step the simulator writes one request line to the child's stdin::

    {"step": 3,
     "candidates": [[[station_id, band, sinr_db], ...], ...],   # one list per user
     "loads": [[station_id, band, users], ...]}                 # nonzero loads only

and reads one response line mapping user index to its choice::

    {"0": [station_id, band], "1": [station_id, band], ...}

Candidates per user are sorted by decreasing SINR and optionally truncated.
"""

from __future__ import annotations

import json
import shlex
import subprocess

import numpy as np

from ..errors import TrajsynthError, ValidationError
from .sim import Observation


def encode_request(obs: Observation, max_candidates: int = 0) -> dict:
    u, s, b = obs.sinr_db.shape
    flat = obs.sinr_db.reshape(u, s * b)
    order = np.argsort(-flat, axis=1, kind="stable")
    if max_candidates:
        order = order[:, :max_candidates]
    ids = obs.station_ids
    candidates = [
        [[ids[k // b], int(k % b), round(float(flat[i, k]), 6)] for k in order[i]] for i in range(u)
    ]
    loads = [[ids[si], int(bi), int(obs.loads[si, bi])] for si, bi in zip(*np.nonzero(obs.loads))]
    return {"step": obs.step, "candidates": candidates, "loads": loads}


def decode_response(msg, obs: Observation) -> np.ndarray:
    if not isinstance(msg, dict):
        raise ValidationError("policy response must be a JSON object")
    u = obs.sinr_db.shape[0]
    index = {sid: k for k, sid in enumerate(obs.station_ids)}
    assoc = np.empty((u, 2), dtype=np.int64)
    for i in range(u):
        choice = msg.get(str(i))
        if not isinstance(choice, list) or len(choice) != 2:
            raise ValidationError(f"policy response lacks a [station, band] pair for user {i}")
        sid, band = choice
        if sid not in index or not isinstance(band, int) or not 0 <= band < obs.sinr_db.shape[2]:
            raise ValidationError(f"policy chose an unknown (station, band) for user {i}: {choice}")
        assoc[i] = (index[sid], band)
    return assoc


class ExternalPolicy:
    """Runs ``command`` once and exchanges one JSON line per step with it."""

    name = "extern"

    def __init__(self, command, max_candidates: int = 0):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.max_candidates = max_candidates
        try:
            self.proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        except OSError as exc:
            raise TrajsynthError(f"cannot start policy process: {exc}") from exc

    def __call__(self, obs: Observation) -> np.ndarray:
        line = json.dumps(encode_request(obs, self.max_candidates), separators=(",", ":"))
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
            reply = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise TrajsynthError(f"policy process failed: {exc}") from exc
        if not reply:
            raise TrajsynthError("policy process closed its output")
        try:
            msg = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"policy sent invalid JSON: {exc}") from exc
        return decode_response(msg, obs)

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
