"""Noise-prediction training with joint D4 augmentation of map/trajectory pairs."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from ..errors import NumericError, ValidationError
from ..geodata import Dataset
from ..raster import dihedral_transform, rasterize_map, rasterize_trajectory
from .denoiser import Denoiser
from .schedule import NoiseSchedule


def to_model_space(binary):
    """{0, 1} trajectory raster -> [-1, 1]."""
    return 2.0 * binary - 1.0


def from_model_space(x):
    """[-1, 1] -> [0, 1], clipped."""
    if torch.is_tensor(x):
        return ((x + 1.0) / 2.0).clamp(0.0, 1.0)
    return np.clip((np.asarray(x) + 1.0) / 2.0, 0.0, 1.0)


@dataclass
class TrainingSet:
    """Rasterized pairs: ``trajs[k]`` belongs to ``maps[map_index[k]]``."""

    maps: np.ndarray  # (K, 2, N, N) in {0, 1}
    trajs: np.ndarray  # (M, 1, N, N) in {0, 1}
    map_index: np.ndarray  # (M,)

    def __post_init__(self):
        self.maps = np.asarray(self.maps, dtype=np.float32)
        self.trajs = np.asarray(self.trajs, dtype=np.float32)
        self.map_index = np.asarray(self.map_index, dtype=np.int64)
        if len(self.trajs) == 0:
            raise ValidationError("training set has no trajectories")
        if len(self.trajs) != len(self.map_index):
            raise ValidationError("map_index must have one entry per trajectory")
        if self.maps.shape[-2:] != self.trajs.shape[-2:]:
            raise ValidationError("map and trajectory rasters differ in size")

    @property
    def size(self) -> int:
        return self.trajs.shape[-1]

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "TrainingSet":
        maps, trajs, index = [], [], []
        for k, (street_map, entries) in enumerate(dataset.entries):
            maps.append(rasterize_map(street_map).data)
            for tr in entries:
                trajs.append(rasterize_trajectory(tr, street_map.extent).data)
                index.append(k)
        if not trajs:
            raise ValidationError("training dataset is empty")
        return cls(np.stack(maps), np.stack(trajs), np.array(index))


@dataclass
class TrainBatch:
    maps: torch.Tensor  # (B, 2, N, N)
    l0: torch.Tensor  # (B, 1, N, N), model space
    t: torch.Tensor  # (B,), integers in [1, T]
    eps: torch.Tensor  # (B, 1, N, N)

    def to(self, dtype) -> "TrainBatch":
        return TrainBatch(self.maps.to(dtype), self.l0.to(dtype), self.t, self.eps.to(dtype))


@dataclass(frozen=True)
class OptConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 16
    augment: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def noisy_input(batch: TrainBatch, schedule: NoiseSchedule) -> torch.Tensor:
    g = torch.tensor(schedule.gamma, dtype=batch.l0.dtype)[batch.t - 1][:, None, None, None]
    return g.sqrt() * batch.l0 + (1.0 - g).sqrt() * batch.eps


def loss_fn(model: Denoiser, batch: TrainBatch, schedule: NoiseSchedule) -> torch.Tensor:
    pred = model(batch.maps, noisy_input(batch, schedule), batch.t)
    return torch.mean((pred - batch.eps) ** 2)


def loss_and_grad(model: Denoiser, batch: TrainBatch, schedule: NoiseSchedule):
    """MSE noise-prediction loss and its gradient for every named parameter."""
    model.zero_grad(set_to_none=True)
    loss = loss_fn(model, batch, schedule)
    if not torch.isfinite(loss):
        raise NumericError("non-finite loss")
    loss.backward()
    grads = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }
    return float(loss.detach()), grads


def sample_batch(
    data: TrainingSet,
    schedule: NoiseSchedule,
    batch_size: int,
    rng: np.random.Generator,
    gen: torch.Generator,
    augment: bool = True,
) -> TrainBatch:
    idx = rng.integers(0, len(data.trajs), size=batch_size)
    elements = rng.integers(0, 8, size=batch_size) if augment else np.zeros(batch_size, dtype=int)
    maps, trajs = [], []
    for k, e in zip(idx, elements):
        maps.append(dihedral_transform(data.maps[data.map_index[k]], int(e)))
        trajs.append(dihedral_transform(data.trajs[k], int(e)))
    l0 = to_model_space(torch.from_numpy(np.stack(trajs)))
    t = torch.randint(1, schedule.T + 1, (batch_size,), generator=gen)
    eps = torch.randn(l0.shape, generator=gen, dtype=l0.dtype)
    return TrainBatch(torch.from_numpy(np.stack(maps)), l0, t, eps)


def make_optimizer(model: Denoiser, cfg: OptConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(
        model.parameters(),
        lr=cfg.lr,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )


def train_step(model, optimizer, batch: TrainBatch, schedule: NoiseSchedule) -> float:
    model.train()
    optimizer.zero_grad(set_to_none=True)
    loss = loss_fn(model, batch, schedule)
    if not torch.isfinite(loss):
        raise NumericError("non-finite loss")
    loss.backward()
    optimizer.step()
    return float(loss.detach())


@dataclass
class TrainResult:
    model: Denoiser
    losses: list[float] = field(default_factory=list)

    def loss_csv(self) -> str:
        rows = ["step,loss"] + [f"{k + 1},{v:.9g}" for k, v in enumerate(self.losses)]
        return "\n".join(rows) + "\n"


def train(
    model: Denoiser,
    data,
    schedule: NoiseSchedule,
    opt_cfg: OptConfig = OptConfig(),
    steps: int = 1000,
    seed: int = 0,
    log_every: int = 0,
    logger=None,
) -> TrainResult:
    """Run ``steps`` Adam updates in place; batches and noise are drawn from ``seed``."""
    if isinstance(data, Dataset):
        data = TrainingSet.from_dataset(data)
    if data.size % (2**model.cfg.depth):
        raise ValidationError(f"raster size {data.size} not divisible by 2^{model.cfg.depth}")
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(int(np.random.SeedSequence(seed).generate_state(1)[0]))
    optimizer = make_optimizer(model, opt_cfg)
    dtype = next(model.parameters()).dtype
    result = TrainResult(model)
    for step in range(1, steps + 1):
        batch = sample_batch(data, schedule, opt_cfg.batch_size, rng, gen, opt_cfg.augment).to(dtype)
        try:
            loss = train_step(model, optimizer, batch, schedule)
        except NumericError as exc:
            raise NumericError("training diverged", step=step) from exc
        result.losses.append(loss)
        if logger is not None and log_every and step % log_every == 0:
            window = result.losses[-log_every:]
            logger.info("step %d loss %.5f", step, sum(window) / len(window))
    model.eval()
    return result


def loss_is_finite(values) -> bool:
    return all(math.isfinite(v) for v in values)
