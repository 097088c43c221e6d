"""Window sampling, training losses, Adam and the single-member training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, Frequency, scale_windows
from .exceptions import ConfigError, DataError, TrainingError
from .model import LookbackGrid, ModelConfig, ParallelModel, build_model, model_forward
from .tensor import Tensor, backward, guarded_div, mul, tabs, tsum

log = logging.getLogger(__name__)

LOSSES = ("SMAPE", "MAPE", "MASE")

# iterations per frequency for the parallel model and for classic per-lookback members
ITERATIONS_PARALLEL = {
    Frequency.YEARLY: 10_000, Frequency.QUARTERLY: 15_000, Frequency.MONTHLY: 15_000,
    Frequency.WEEKLY: 5_000, Frequency.DAILY: 5_000, Frequency.HOURLY: 5_000,
}
ITERATIONS_CLASSIC = {
    Frequency.YEARLY: 15_000, Frequency.QUARTERLY: 15_000, Frequency.MONTHLY: 15_000,
    Frequency.WEEKLY: 5_000, Frequency.DAILY: 5_000, Frequency.HOURLY: 5_000,
}
HISTORY_COEFFICIENT = {
    Frequency.YEARLY: 1.5, Frequency.QUARTERLY: 1.5, Frequency.MONTHLY: 1.5,
    Frequency.WEEKLY: 10.0, Frequency.DAILY: 10.0, Frequency.HOURLY: 10.0,
}


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one ensemble member.

    Attributes:
        L_H: forecast origins are drawn from the last ``ceil(L_H * H)``
            positions of each training segment.
        scaling: ``"per-union"`` (one factor per series) or ``"per-window"``.
    """

    iterations: int = 10_000
    batch_size: int = 1024
    lr: float = 1e-3
    loss: str = "SMAPE"
    L_H: float = 1.5
    seed: int = 0
    precision: int = 64
    scaling: str = "per-union"

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError(f"iterations must be non-negative, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if not self.L_H > 0:
            raise ConfigError(f"L_H must be positive, got {self.L_H}")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, got {self.precision}")
        if self.scaling not in ("per-union", "per-window"):
            raise ConfigError(f"unknown scaling mode {self.scaling!r}")

    @classmethod
    def preset(cls, frequency: Frequency, loss: str = "SMAPE", parallel: bool = True,
               seed: int = 0) -> "TrainConfig":
        """Published settings: batch 1024, lr 1e-3, per-frequency iterations and ``L_H``."""
        table = ITERATIONS_PARALLEL if parallel else ITERATIONS_CLASSIC
        freq = Frequency.QUARTERLY if frequency is Frequency.OTHER else frequency
        return cls(iterations=table[freq], loss=loss, L_H=HISTORY_COEFFICIENT[freq], seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# sampling


@dataclass
class Batch:
    """A training batch; every array carries a trailing head axis.

    Attributes:
        inputs: ``[B, L, W]`` scaled, zero-padded windows.
        input_mask: ``[B, L, W]`` 1 where an observation sits inside the head window.
        targets: ``[B, H, W]`` scaled next-``H`` values.
        target_mask: ``[B, H, W]`` 1 where the target lies inside the training segment.
        scales: ``[B, W]`` scale factors.
        series: ``[B]`` indices of the drawn series.
        cuts: ``[B]`` forecast origins (number of history points before the target).
        m: ``[B]`` seasonal periods.
    """

    inputs: np.ndarray
    input_mask: np.ndarray
    targets: np.ndarray
    target_mask: np.ndarray
    scales: np.ndarray
    series: np.ndarray
    cuts: np.ndarray
    m: np.ndarray


class WindowSampler:
    """Draws series uniformly with replacement and a recent forecast origin for each.

    For a training segment of length ``T`` the origin ``cut`` (number of
    observed points before the target) is uniform on
    ``[max(1, T - ceil(L_H * H)), T - 1]``; targets running past ``T`` are
    masked. Segments of length 1 admit no origin and are dropped.
    """

    def __init__(self, histories: Sequence[np.ndarray], grid: LookbackGrid, L_H: float,
                 m: Sequence[int] | int = 1, scaling: str = "per-union"):
        self.grid, self.scaling = grid, scaling
        L, H = grid.L, grid.horizon
        limit = math.ceil(L_H * H)
        ms = np.broadcast_to(np.asarray(m, dtype=np.int64), (len(histories),))
        keep = [i for i, h in enumerate(histories) if len(h) >= 2]
        if not keep:
            raise DataError("no training series with at least two observations")
        self.index = np.array(keep)
        self.lengths = np.array([len(histories[i]) for i in keep])
        self.m = ms[self.index]
        self.admissible = np.minimum(limit, self.lengths - 1)
        chunks, starts, pos = [], [], 0
        for i in keep:
            chunk = np.concatenate([np.zeros(L), np.asarray(histories[i], dtype=np.float64), np.zeros(H)])
            chunks.append(chunk)
            starts.append(pos)
            pos += chunk.size
        self.flat = np.concatenate(chunks)
        self.starts = np.array(starts)
        self.heads = grid.head_masks().T[None]

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        L, H = self.grid.L, self.grid.horizon
        pick = rng.integers(0, self.index.size, batch_size)
        n_adm = self.admissible[pick]
        cuts = self.lengths[pick] - n_adm + rng.integers(0, n_adm)
        base = self.starts[pick] + cuts
        window = self.flat[base[:, None] + np.arange(L)]
        target = self.flat[base[:, None] + L + np.arange(H)]
        avail = (cuts[:, None] - L + np.arange(L) >= 0).astype(np.float64)
        tmask = (cuts[:, None] + np.arange(H) < self.lengths[pick][:, None]).astype(np.float64)
        inputs = window[:, :, None] * self.heads
        input_mask = avail[:, :, None] * self.heads
        W = self.grid.W
        targets = np.repeat(target[:, :, None], W, axis=2)
        inputs, targets, scales = scale_windows(inputs, targets, self.scaling)
        return Batch(inputs, input_mask, targets, np.repeat(tmask[:, :, None], W, axis=2),
                     scales, self.index[pick], cuts, self.m[pick])


def sample_batch(ds: Dataset, grid: LookbackGrid, cfg: TrainConfig, rng: np.random.Generator) -> Batch:
    """One batch from the training segments of ``ds`` (see :class:`WindowSampler`)."""
    if len(ds) == 0:
        raise DataError("cannot sample from an empty dataset")
    sampler = WindowSampler(ds.train(), grid, cfg.L_H, [s.m for s in ds], cfg.scaling)
    return sampler.sample(cfg.batch_size, rng)


# ---------------------------------------------------------------------------
# losses


def _masked_mean(term: Tensor, target_mask) -> Tensor:
    if target_mask is None:
        return term.mean()
    target_mask = np.asarray(target_mask, dtype=term.dtype)
    count = max(float(target_mask.sum()), 1.0)
    return tsum(mul(term, target_mask)) * (1.0 / count)


def _tensor(x, like=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=None if like is None else like.dtype)


def loss_smape(yhat, y, target_mask=None) -> Tensor:
    """Masked mean of ``200 |y - yhat| / (|y| + |yhat| + eps)``."""
    yhat = _tensor(yhat)
    y = _tensor(y, yhat)
    return _masked_mean(guarded_div(200.0 * tabs(y - yhat), tabs(y) + tabs(yhat)), target_mask)


def loss_mape(yhat, y, target_mask=None) -> Tensor:
    """Masked mean of ``100 |y - yhat| / (|y| + eps)``."""
    yhat = _tensor(yhat)
    y = _tensor(y, yhat)
    return _masked_mean(guarded_div(100.0 * tabs(y - yhat), tabs(y)), target_mask)


def mase_scale(insample: np.ndarray, m, insample_mask: np.ndarray | None = None) -> np.ndarray:
    """Mean absolute lag-``m`` difference along axis 1, over pairs of observed points.

    Args:
        insample: ``[N, T]`` or ``[N, T, W]``.
        m: seasonal period, scalar or one per row.
        insample_mask: same shape as ``insample``; 1 marks observed points.

    Returns:
        ``[N]`` or ``[N, W]`` scales; rows without a valid pair give 0.
    """
    insample = np.asarray(insample, dtype=np.float64)
    mask = np.ones_like(insample) if insample_mask is None else np.asarray(insample_mask, dtype=np.float64)
    ms = np.broadcast_to(np.asarray(m, dtype=np.int64), (insample.shape[0],))
    out = np.zeros((insample.shape[0],) + insample.shape[2:])
    for lag in np.unique(ms):
        rows = ms == lag
        if lag < 1:
            raise DataError(f"seasonal period must be positive, got {lag}")
        if lag >= insample.shape[1]:
            continue
        x, mk = insample[rows], mask[rows]
        pairs = mk[:, lag:] * mk[:, :-lag]
        total = (np.abs(x[:, lag:] - x[:, :-lag]) * pairs).sum(axis=1)
        count = pairs.sum(axis=1)
        out[rows] = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return out


def loss_mase(yhat, y, insample, m, target_mask=None, insample_mask=None) -> Tensor:
    """Masked mean of ``|y - yhat|`` divided by the in-sample naive scale (+eps).

    ``insample`` runs along axis 1 and matches the leading (and head) axes of
    ``yhat``.
    """
    insample = np.asarray(insample)
    if insample.shape[1] <= (np.max(m) if np.ndim(m) else m):
        raise DataError(f"in-sample length {insample.shape[1]} must exceed the seasonal period {m}")
    yhat = _tensor(yhat)
    y = _tensor(y, yhat)
    scale = mase_scale(insample, m, insample_mask)
    scale = np.expand_dims(scale, 1).astype(yhat.dtype)
    return _masked_mean(guarded_div(tabs(y - yhat), np.broadcast_to(scale, yhat.shape)), target_mask)


def multihead_loss(forecasts, targets, loss: str, target_mask=None, insample=None, m=1,
                   insample_mask=None) -> Tensor:
    """Configured loss over all heads of ``[N, H, W]`` forecasts.

    Every head shares the target mask, so the masked mean over ``(n, h, w)``
    equals the mean over heads of each head's own loss.
    """
    forecasts = _tensor(forecasts)
    targets = np.asarray(targets, dtype=forecasts.dtype)
    if targets.ndim == 2:
        targets = np.repeat(targets[:, :, None], forecasts.shape[2], axis=2)
    if target_mask is not None:
        target_mask = np.broadcast_to(np.asarray(target_mask, dtype=forecasts.dtype)
                                      if np.ndim(target_mask) == 3
                                      else np.asarray(target_mask, dtype=forecasts.dtype)[:, :, None],
                                      forecasts.shape)
    if loss == "SMAPE":
        return loss_smape(forecasts, targets, target_mask)
    if loss == "MAPE":
        return loss_mape(forecasts, targets, target_mask)
    if loss == "MASE":
        if insample is None:
            raise DataError("MASE loss needs the in-sample windows")
        return loss_mase(forecasts, targets, insample, m, target_mask, insample_mask)
    raise ConfigError(f"unknown loss {loss!r}")


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype, copy=False)


def lr_at(iteration: int, total: int, base_lr: float) -> float:
    """Three equal plateaus: ``base_lr``, ``base_lr / 10``, ``base_lr / 100``."""
    if not 0 <= iteration < total:
        raise ConfigError(f"iteration {iteration} outside [0, {total})")
    return base_lr * 10.0 ** -min(2, 3 * iteration // total)


# ---------------------------------------------------------------------------
# training loop


def batch_loss(model: ParallelModel, batch: Batch, loss: str) -> Tensor:
    forecast = model_forward(model, Tensor(batch.inputs, dtype=model.dtype))
    return multihead_loss(forecast, batch.targets, loss, batch.target_mask,
                          insample=batch.inputs, m=batch.m, insample_mask=batch.input_mask)


def train_member(ds: Dataset, model_cfg: ModelConfig, cfg: TrainConfig,
                 grid: LookbackGrid | None = None, log_path=None,
                 model: ParallelModel | None = None) -> tuple[ParallelModel, np.ndarray]:
    """Fit one network on the training segments of ``ds``.

    Args:
        grid: lookback grid; defaults to ``2H .. 7H`` for the dataset horizon.
        log_path: if given, the loss trace is written there as ``iteration,loss,lr``.
        model: continue from this network instead of a fresh one.

    Returns:
        The trained model and the per-iteration loss trace.

    Raises:
        TrainingError: the loss became non-finite.
    """
    if grid is None:
        grid = LookbackGrid.from_horizon(ds.horizon())
    if model is None:
        model = build_model(model_cfg, grid, cfg.seed, cfg.precision)
    trace = np.zeros(cfg.iterations)
    if cfg.iterations == 0:
        return model, trace
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    sampler = WindowSampler(ds.train(), grid, cfg.L_H, [s.m for s in ds], cfg.scaling)
    params = model.parameters()
    state = AdamState.zeros(params)
    fh = open(log_path, "w") if log_path is not None else None
    try:
        if fh:
            fh.write("iteration,loss,lr\n")
        for it in range(cfg.iterations):
            lr = lr_at(it, cfg.iterations, cfg.lr)
            loss = batch_loss(model, sampler.sample(cfg.batch_size, rng), cfg.loss)
            value = float(loss.item())
            if not math.isfinite(value):
                raise TrainingError(f"non-finite {cfg.loss} loss at iteration {it}")
            grads = backward(loss)
            adam_step(params, [grads.get(p, 0.0) for p in params], state, lr)
            trace[it] = value
            if fh:
                fh.write(f"{it},{value!r},{lr!r}\n")
    finally:
        if fh:
            fh.close()
    return model, trace
