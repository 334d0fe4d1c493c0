"""Brute-force reference implementations used as independent oracles."""

from functools import lru_cache

import numpy as np
from scipy.optimize import linprog


@lru_cache(maxsize=None)
def _edit_scripts(m: int, n: int):
    """Every alignment of lengths m, n as (diagonal flat indices, number of gap moves)."""
    if m == 0 or n == 0:
        return (((), m + n),)
    out = []
    for diag, gaps in _edit_scripts(m - 1, n - 1):
        out.append((diag + ((m - 1) * 64 + (n - 1),), gaps))
    for diag, gaps in _edit_scripts(m - 1, n):
        out.append((diag, gaps + 1))
    for diag, gaps in _edit_scripts(m, n - 1):
        out.append((diag, gaps + 1))
    return tuple(out)


def edr_brute(a, b, tau):
    a, b = np.asarray(a, float).reshape(-1, 2), np.asarray(b, float).reshape(-1, 2)
    mismatch = np.ones((64, 64), dtype=np.int64)
    if len(a) and len(b):
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
        mismatch[: len(a), : len(b)] = d >= tau
    flat = mismatch.ravel()
    return min(gaps + int(flat[list(diag)].sum()) for diag, gaps in _edit_scripts(len(a), len(b)))


@lru_cache(maxsize=None)
def _warping_paths(m: int, n: int):
    """All monotone, boundary-aligned warping paths as tuples of flat cell indices."""
    if m == 1 and n == 1:
        return ((0,),)
    out = []
    for dm, dn in ((1, 1), (1, 0), (0, 1)):
        pm, pn = m - dm, n - dn
        if pm >= 1 and pn >= 1:
            for p in _warping_paths(pm, pn):
                out.append(p + ((m - 1) * 64 + (n - 1),))
    return tuple(out)


def dtw_brute(a, b):
    a, b = np.asarray(a, float).reshape(-1, 2), np.asarray(b, float).reshape(-1, 2)
    cost = np.zeros((64, 64))
    cost[: len(a), : len(b)] = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    flat = cost.ravel()
    return min(float(flat[list(p)].sum()) for p in _warping_paths(len(a), len(b)))


def w2_1d_lp(x, wx, y, wy):
    """Order-2 Wasserstein distance by solving the transport linear program."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    wx, wy = np.asarray(wx, float) / np.sum(wx), np.asarray(wy, float) / np.sum(wy)
    m, n = len(x), len(y)
    cost = ((x[:, None] - y[None, :]) ** 2).ravel()
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n : (i + 1) * n] = 1
    for j in range(n):
        a_eq[m + j, j::n] = 1
    res = linprog(cost, A_eq=a_eq, b_eq=np.concatenate([wx, wy]), bounds=(0, None), method="highs")
    return float(np.sqrt(max(res.fun, 0.0)))
