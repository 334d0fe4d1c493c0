"""Ancestral sampling conditioned on a street-map raster."""

from __future__ import annotations

import numpy as np
import torch

from ..errors import NumericError, ValidationError
from ..geodata import Extent
from ..raster import RasterGrid
from .denoiser import Denoiser
from .schedule import NoiseSchedule, reverse_step
from .training import from_model_space


def sample_step(model: Denoiser, street_map, l_t, schedule: NoiseSchedule, t: int, noise):
    """``l_{t-1}`` from ``l_t``; the final step (t = 1) must receive zero noise."""
    t = schedule.check_t(t)
    if t == 1 and torch.is_tensor(noise) and bool(torch.any(noise != 0)):
        raise ValidationError("the last sampling step adds no noise")
    with torch.no_grad():
        eps_hat = model(street_map, l_t, torch.full((l_t.shape[0],), float(t), dtype=l_t.dtype))
    return reverse_step(l_t, eps_hat, schedule, t, noise)


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def generate(
    model: Denoiser,
    street_map,
    schedule: NoiseSchedule,
    count: int,
    seed: int = 0,
    batch_size: int = 64,
    first_index: int = 0,
) -> list[np.ndarray]:
    """Draw ``count`` trajectory rasters (1 x N x N, values in [0, 1]) for one map.

    Sample ``i`` draws all of its noise from a generator seeded by
    ``(seed, first_index + i)``, so it does not depend on the other samples.
    """
    if count < 0:
        raise ValidationError("count must be non-negative")
    if count == 0:
        return []
    dtype = next(model.parameters()).dtype
    m = street_map.data if isinstance(street_map, RasterGrid) else street_map
    m = torch.as_tensor(np.asarray(m, dtype=np.float64), dtype=dtype)
    if m.ndim != 3:
        raise ValidationError("street map raster must be (2, N, N)")
    n = m.shape[-1]
    model.eval()
    out: list[np.ndarray] = []
    for start in range(0, count, batch_size):
        idx = range(first_index + start, first_index + min(count, start + batch_size))
        gens = [torch.Generator().manual_seed(sample_seed(seed, i)) for i in idx]
        x = torch.stack([torch.randn((1, n, n), generator=g, dtype=dtype) for g in gens])
        maps = m[None].expand(len(gens), -1, -1, -1)
        for t in range(schedule.T, 0, -1):
            if t > 1:
                noise = torch.stack([torch.randn((1, n, n), generator=g, dtype=dtype) for g in gens])
            else:
                noise = torch.zeros_like(x)
            x = sample_step(model, maps, x, schedule, t, noise)
            if not torch.isfinite(x).all():
                raise NumericError("non-finite raster during sampling", step=t)
        out.extend(from_model_space(x).double().numpy())
    return out


def rasters_to_grids(samples, extent: Extent) -> list[RasterGrid]:
    return [RasterGrid(extent, s) for s in samples]
