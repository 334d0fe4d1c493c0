"""Conditional U-Net noise predictor.

The street-map raster is concatenated with the noisy trajectory raster on the
channel axis. Each residual block adds a projection of a sinusoidal step
embedding; one self-attention block sits at the lowest resolution.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ValidationError


@dataclass(frozen=True)
class DenoiserConfig:
    map_channels: int = 2
    traj_channels: int = 1
    base_width: int = 8
    depth: int = 2
    groups: int = 8
    attention: bool = True

    @property
    def widths(self) -> list[int]:
        return [self.base_width * 2**level for level in range(self.depth)]

    def to_dict(self) -> dict:
        return asdict(self)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / half)
    args = t[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


def _norm(ch: int, groups: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(groups, ch), ch)


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, temb_dim: int, groups: int):
        super().__init__()
        self.norm1 = _norm(in_ch, groups)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.temb = nn.Linear(temb_dim, out_ch)
        self.norm2 = _norm(out_ch, groups)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class SelfAttention(nn.Module):
    def __init__(self, ch: int, groups: int):
        super().__init__()
        self.norm = _norm(ch, groups)
        self.qkv = nn.Conv2d(ch, 3 * ch, 1)
        self.proj = nn.Conv2d(ch, ch, 1)

    def forward(self, x):
        b, c, h, w = x.shape
        q, k, v = self.qkv(self.norm(x)).reshape(b, 3, c, h * w).unbind(1)
        attn = torch.softmax(torch.einsum("bci,bcj->bij", q, k) / math.sqrt(c), dim=-1)
        out = torch.einsum("bij,bcj->bci", attn, v).reshape(b, c, h, w)
        return x + self.proj(out)


class Denoiser(nn.Module):
    def __init__(self, cfg: DenoiserConfig = DenoiserConfig()):
        super().__init__()
        if cfg.base_width % 2 or cfg.base_width % min(cfg.groups, cfg.base_width):
            raise ValidationError("base_width must be even and divisible by the group count")
        self.cfg = cfg
        widths = cfg.widths
        temb_dim = 4 * cfg.base_width
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.base_width, temb_dim), nn.SiLU(), nn.Linear(temb_dim, temb_dim)
        )
        self.inc = nn.Conv2d(cfg.map_channels + cfg.traj_channels, widths[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        ch = widths[0]
        for w in widths:
            self.down_blocks.append(ResBlock(ch, w, temb_dim, cfg.groups))
            self.downsamples.append(nn.Conv2d(w, w, 3, stride=2, padding=1))
            ch = w

        self.mid1 = ResBlock(ch, ch, temb_dim, cfg.groups)
        self.attn = SelfAttention(ch, cfg.groups) if cfg.attention else nn.Identity()
        self.mid2 = ResBlock(ch, ch, temb_dim, cfg.groups)

        self.upsamples = nn.ModuleList()
        self.up_blocks = nn.ModuleList()
        for w in reversed(widths):
            self.upsamples.append(nn.Conv2d(ch, ch, 3, padding=1))
            self.up_blocks.append(ResBlock(ch + w, w, temb_dim, cfg.groups))
            ch = w

        self.out_norm = _norm(ch, cfg.groups)
        self.out = nn.Conv2d(ch, cfg.traj_channels, 3, padding=1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, street_map: torch.Tensor, l_t: torch.Tensor, t) -> torch.Tensor:
        if street_map.shape[0] != l_t.shape[0] or street_map.shape[-2:] != l_t.shape[-2:]:
            raise ValidationError(
                f"map {tuple(street_map.shape)} and trajectory {tuple(l_t.shape)} shapes disagree"
            )
        size = l_t.shape[-1]
        if l_t.shape[-2] != size or size % (2**self.cfg.depth):
            raise ValidationError(f"raster side {size} must be square and divisible by 2^depth")
        if not torch.is_tensor(t):
            t = torch.full((l_t.shape[0],), float(t))
        t = t.to(dtype=l_t.dtype).reshape(-1).expand(l_t.shape[0])
        temb = self.time_mlp(timestep_embedding(t, self.cfg.base_width))

        h = self.inc(torch.cat([street_map, l_t], dim=1))
        skips = []
        for block, down in zip(self.down_blocks, self.downsamples):
            h = block(h, temb)
            skips.append(h)
            h = down(h)
        h = self.mid2(self.attn(self.mid1(h, temb)), temb)
        for up, block in zip(self.upsamples, self.up_blocks):
            h = up(F.interpolate(h, scale_factor=2, mode="nearest"))
            h = block(torch.cat([h, skips.pop()], dim=1), temb)
        return self.out(F.silu(self.out_norm(h)))


def build_denoiser(cfg: DenoiserConfig = DenoiserConfig(), seed: int = 0, dtype=torch.float32) -> Denoiser:
    """Deterministic initialisation that leaves the global torch RNG untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = Denoiser(cfg)
    return model.to(dtype)


def denoiser_apply(model: Denoiser, street_map, l_t, t) -> torch.Tensor:
    """Evaluate the network without tracking gradients; rejects non-finite weights."""
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            raise ValidationError(f"parameter {name} has non-finite values")
    dtype = next(model.parameters()).dtype
    m = torch.as_tensor(street_map, dtype=dtype)
    x = torch.as_tensor(l_t, dtype=dtype)
    if m.ndim == 3:
        m, x = m[None], x[None]
    with torch.no_grad():
        return model(m, x, t)
