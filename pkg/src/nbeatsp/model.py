"""Multi-head N-BEATS network with zero-padded, bias-free input layers.

Each block holds ``W`` heads, one per lookback length. Head ``w`` owns a
bias-free input projection from its ``l_w`` most recent observations, a pair
of coefficient projections and a forecast/backcast basis; the hidden FC trunk
is shared by all heads. Heads are evaluated together by right-aligning every
window in a length-``L`` buffer, zero-padding the oldest positions and
batching the trunk over ``W * N`` rows. Because the input projection has no
bias and the backcast is re-masked after every block, head ``w`` of the
parallel network computes exactly what a standalone single-head network
built from the same weights computes on the unpadded window
(see :meth:`ParallelModel.head_slice`).

Tensors are laid out ``[N, L, W]`` at the public boundary and ``[W, N, L]``
internally.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .exceptions import ConfigError, DataError, DimensionError, SerializationError
from .tensor import Tensor, affine, mask, matmul, pad, parameter, relu, stack, transpose

FORMAT_VERSION = 1
MAGIC = b"NBEATSP\n"
PRESET_MULTIPLES = (2, 3, 4, 5, 6, 7)


@dataclass(frozen=True)
class LookbackGrid:
    """Lookback lengths ``l_1 < ... < l_W`` (samples) and the horizon ``H``."""

    lookbacks: tuple[int, ...]
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "lookbacks", tuple(int(v) for v in self.lookbacks))
        if self.horizon < 1:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if not self.lookbacks or min(self.lookbacks) < 1:
            raise ConfigError(f"lookbacks must be positive, got {self.lookbacks}")
        if any(b <= a for a, b in zip(self.lookbacks, self.lookbacks[1:])):
            raise ConfigError(f"lookbacks must be strictly increasing, got {self.lookbacks}")

    @classmethod
    def from_horizon(cls, horizon: int, multiples: Sequence[int] = PRESET_MULTIPLES) -> "LookbackGrid":
        return cls(tuple(k * horizon for k in multiples), horizon)

    @property
    def L(self) -> int:
        return self.lookbacks[-1]

    @property
    def W(self) -> int:
        return len(self.lookbacks)

    def head_masks(self) -> np.ndarray:
        """``[W, L]`` 0/1 array; head ``w`` keeps its ``l_w`` most recent positions."""
        out = np.zeros((self.W, self.L))
        for w, lb in enumerate(self.lookbacks):
            out[w, self.L - lb:] = 1.0
        return out

    def to_dict(self) -> dict:
        return {"lookbacks": list(self.lookbacks), "horizon": self.horizon}

    @classmethod
    def from_dict(cls, d: dict) -> "LookbackGrid":
        return cls(tuple(d["lookbacks"]), int(d["horizon"]))


# ---------------------------------------------------------------------------
# bases


def _time_grid(length: int) -> np.ndarray:
    return np.arange(length) / length


@dataclass(frozen=True)
class GenericBasis:
    """Learnable projection ``V theta + B`` (waveforms without imposed structure)."""

    dim_f: int = 32
    dim_b: int = 32
    name = "generic"
    learnable = True

    def forecast_dim(self, horizon: int) -> int:
        return self.dim_f

    def backcast_dim(self, length: int) -> int:
        return self.dim_b


@dataclass(frozen=True)
class TrendBasis:
    """Polynomial basis ``[1, t, ..., t^p]`` on ``t = [0, 1, ..., n-1] / n``."""

    degree: int = 2
    name = "trend"
    learnable = False

    def forecast_dim(self, horizon: int) -> int:
        return self.degree + 1

    def backcast_dim(self, length: int) -> int:
        return self.degree + 1

    def matrix(self, length: int) -> np.ndarray:
        t = _time_grid(length)
        return np.vstack([t ** p for p in range(self.degree + 1)])


@dataclass(frozen=True)
class SeasonalBasis:
    """Fourier basis: a constant row, then ``cos(2 pi i t)`` and ``sin(2 pi i t)``
    for ``i = 1 .. floor(n/2 - 1)``."""

    name = "seasonal"
    learnable = False

    @staticmethod
    def harmonics(length: int) -> int:
        return max(length // 2 - 1, 0)

    def forecast_dim(self, horizon: int) -> int:
        return 2 * self.harmonics(horizon) + 1

    def backcast_dim(self, length: int) -> int:
        return 2 * self.harmonics(length) + 1

    def matrix(self, length: int) -> np.ndarray:
        t = _time_grid(length)
        k = np.arange(1, self.harmonics(length) + 1)[:, None]
        return np.vstack([np.ones((1, length)), np.cos(2 * np.pi * k * t), np.sin(2 * np.pi * k * t)])


BasisKind = GenericBasis | TrendBasis | SeasonalBasis


def basis_apply(kind: BasisKind, theta, direction: str, length: int,
                V=None, B=None) -> Tensor:
    """Project coefficients ``theta`` (``[..., d]``) onto a length-``length`` signal.

    Fixed bases (trend, seasonal) build their matrix for ``length``; the
    generic basis needs its learnable ``V`` (``[d, length]``) and ``B``.
    """
    if direction not in ("forecast", "backcast"):
        raise ValueError(f"direction must be 'forecast' or 'backcast', got {direction!r}")
    theta = theta if isinstance(theta, Tensor) else Tensor(theta)
    if kind.learnable:
        if V is None:
            raise DimensionError("generic basis requires the learnable matrix V")
        out = matmul(theta, V)
        return out if B is None else out + B
    dim = kind.forecast_dim(length) if direction == "forecast" else kind.backcast_dim(length)
    if theta.shape[-1] != dim:
        raise DimensionError(f"{kind.name} basis of length {length} needs {dim} coefficients, "
                             f"got theta shape {theta.shape}")
    return matmul(theta, Tensor(kind.matrix(length), dtype=theta.dtype))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class StackConfig:
    basis: str = "generic"
    blocks: int = 1
    layers: int = 4
    width: int = 512
    shared: bool = False
    degree: int = 2
    dim_f: int = 32
    dim_b: int = 32

    def __post_init__(self):
        if self.basis not in ("generic", "trend", "seasonal"):
            raise ConfigError(f"unknown basis {self.basis!r}")
        if self.width < 1:
            raise ConfigError(f"width must be positive, got {self.width}")
        if self.layers < 1 or self.blocks < 1:
            raise ConfigError(f"layers and blocks must be positive, got {self.layers}, {self.blocks}")
        if self.basis == "trend" and not 0 <= self.degree <= 8:
            raise ConfigError(f"trend degree must be in [0, 8], got {self.degree}")
        if self.basis == "generic" and (self.dim_f < 1 or self.dim_b < 1):
            raise ConfigError(f"generic basis dims must be positive, got {self.dim_f}, {self.dim_b}")

    def basis_kind(self) -> BasisKind:
        if self.basis == "trend":
            return TrendBasis(self.degree)
        if self.basis == "seasonal":
            return SeasonalBasis()
        return GenericBasis(self.dim_f, self.dim_b)


@dataclass(frozen=True)
class ModelConfig:
    stacks: tuple[StackConfig, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "stacks", tuple(self.stacks))
        if not self.stacks:
            raise ConfigError("model needs at least one stack")

    @classmethod
    def generic(cls, stacks: int = 30, width: int = 512, layers: int = 4,
                dim_f: int = 32, dim_b: int = 32) -> "ModelConfig":
        return cls(tuple(StackConfig("generic", 1, layers, width, False, dim_f=dim_f, dim_b=dim_b)
                         for _ in range(stacks)))

    @classmethod
    def interpretable(cls, trend_width: int = 256, seasonal_width: int = 2048, blocks: int = 3,
                      layers: int = 4, degree: int = 2) -> "ModelConfig":
        return cls((StackConfig("trend", blocks, layers, trend_width, True, degree=degree),
                    StackConfig("seasonal", blocks, layers, seasonal_width, True)))

    def to_dict(self) -> dict:
        return {"stacks": [asdict(s) for s in self.stacks]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(tuple(StackConfig(**s) for s in d["stacks"]))


# ---------------------------------------------------------------------------
# blocks


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype)


class Block:
    """One multi-head block: per-head input maps, shared trunk, per-head bases."""

    def __init__(self, basis: BasisKind, grid: LookbackGrid, width: int, layers: int,
                 rng: np.random.Generator, dtype=np.float64):
        self.basis, self.grid, self.width, self.dtype = basis, grid, width, np.dtype(dtype)
        H = grid.horizon
        self.input_weights = [parameter(_glorot(rng, lb, width, dtype)) for lb in grid.lookbacks]
        self.trunk = [(parameter(_glorot(rng, width, width, dtype)), parameter(np.zeros(width, dtype)))
                      for _ in range(layers - 1)]
        dims_f = [basis.forecast_dim(H) for _ in grid.lookbacks]
        dims_b = [basis.backcast_dim(lb) for lb in grid.lookbacks]
        self.theta_f = [(parameter(_glorot(rng, width, d, dtype)), parameter(np.zeros(d, dtype)))
                        for d in dims_f]
        self.theta_b = [(parameter(_glorot(rng, width, d, dtype)), parameter(np.zeros(d, dtype)))
                        for d in dims_b]
        if basis.learnable:
            self.basis_f = [parameter(_glorot(rng, d, H, dtype)) for d in dims_f]
            self.bias_f = [parameter(np.zeros(H, dtype)) for _ in dims_f]
            self.basis_b = [parameter(_glorot(rng, d, lb, dtype)) for d, lb in zip(dims_b, grid.lookbacks)]
            self.bias_b = [parameter(np.zeros(lb, dtype)) for lb in grid.lookbacks]
        else:
            self.basis_f = [Tensor(basis.matrix(H), dtype=dtype) for _ in dims_f]
            self.bias_f = None
            self.basis_b = [Tensor(basis.matrix(lb), dtype=dtype) for lb in grid.lookbacks]
            self.bias_b = None
        self._finish()

    def _finish(self) -> None:
        W, L = self.grid.W, self.grid.L
        self._mask = self.grid.head_masks().astype(self.dtype)[:, None, :]
        self._df = max(Wt.shape[1] for Wt, _ in self.theta_f)
        self._db = max(Wt.shape[1] for Wt, _ in self.theta_b)
        if not self.basis.learnable:
            self._fixed_f = self._stack_basis(self.basis_f, self._df, self.grid.horizon)
            self._fixed_b = self._stack_basis(self.basis_b, self._db, L)
        assert len(self.input_weights) == W

    @property
    def layers(self) -> int:
        return len(self.trunk) + 1

    @staticmethod
    def _stack_basis(bases, dmax: int, length: int) -> Tensor:
        return stack([pad(B, ((0, dmax - B.shape[0]), (length - B.shape[1], 0))) for B in bases])

    @staticmethod
    def _stack_theta(layers, dmax: int) -> tuple[Tensor, Tensor]:
        weights = stack([pad(Wt, ((0, 0), (0, dmax - Wt.shape[1]))) for Wt, _ in layers])
        biases = stack([pad(bt, ((0, dmax - bt.shape[0]),)) for _, bt in layers])
        return weights, biases.reshape(len(layers), 1, dmax)

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for w, Wi in enumerate(self.input_weights):
            yield f"input.{w}", Wi
        for i, (Wt, bt) in enumerate(self.trunk):
            yield f"trunk.{i}.weight", Wt
            yield f"trunk.{i}.bias", bt
        for tag, layers in (("theta_f", self.theta_f), ("theta_b", self.theta_b)):
            for w, (Wt, bt) in enumerate(layers):
                yield f"{tag}.{w}.weight", Wt
                yield f"{tag}.{w}.bias", bt
        if self.basis.learnable:
            for tag, items in (("basis_f", self.basis_f), ("bias_f", self.bias_f),
                               ("basis_b", self.basis_b), ("bias_b", self.bias_b)):
                for w, p in enumerate(items):
                    yield f"{tag}.{w}", p

    def run(self, xw: Tensor) -> tuple[Tensor, Tensor]:
        """Backcast ``[W, N, L]`` and forecast ``[W, N, H]`` for a masked ``[W, N, L]`` input."""
        W, L, H = self.grid.W, self.grid.L, self.grid.horizon
        N = xw.shape[1]
        w_in = stack([pad(Wi, ((L - Wi.shape[0], 0), (0, 0))) for Wi in self.input_weights])
        h = relu(matmul(xw, w_in))
        if self.trunk:
            h = h.reshape(W * N, self.width)
            for Wt, bt in self.trunk:
                h = relu(affine(h, Wt, bt))
            h = h.reshape(W, N, self.width)
        wf, bf = self._stack_theta(self.theta_f, self._df)
        wb, bb = self._stack_theta(self.theta_b, self._db)
        theta_f = matmul(h, wf) + bf
        theta_b = matmul(h, wb) + bb
        if self.basis.learnable:
            forecast = matmul(theta_f, self._stack_basis(self.basis_f, self._df, H))
            forecast = forecast + stack(self.bias_f).reshape(W, 1, H)
            backcast = matmul(theta_b, self._stack_basis(self.basis_b, self._db, L))
            backcast = backcast + stack([pad(b, ((L - b.shape[0], 0),)) for b in self.bias_b]).reshape(W, 1, L)
        else:
            forecast = matmul(theta_f, self._fixed_f)
            backcast = matmul(theta_b, self._fixed_b)
        backcast = mask(backcast, np.broadcast_to(self._mask, backcast.shape))
        return backcast, forecast

    def head_slice(self, w: int) -> "Block":
        """Single-head block sharing head ``w``'s parameter tensors."""
        lb = self.grid.lookbacks[w]
        out = object.__new__(Block)
        out.basis, out.width, out.dtype = self.basis, self.width, self.dtype
        out.grid = LookbackGrid((lb,), self.grid.horizon)
        out.input_weights = [self.input_weights[w]]
        out.trunk = self.trunk
        out.theta_f = [self.theta_f[w]]
        out.theta_b = [self.theta_b[w]]
        out.basis_f = [self.basis_f[w]]
        out.basis_b = [self.basis_b[w]]
        out.bias_f = None if self.bias_f is None else [self.bias_f[w]]
        out.bias_b = None if self.bias_b is None else [self.bias_b[w]]
        out._finish()
        return out


def _to_heads(x, grid: LookbackGrid, dtype) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)
    if x.ndim != 3 or x.shape[1:] != (grid.L, grid.W):
        raise DimensionError(f"expected input of shape [N, {grid.L}, {grid.W}], got {x.shape}")
    xw = transpose(x, (2, 0, 1))
    return mask(xw, np.broadcast_to(grid.head_masks()[:, None, :], xw.shape))


class ParallelModel:
    """Stacks of multi-head blocks plus the lookback grid they serve.

    Attributes:
        config: the :class:`ModelConfig` the network was built from.
        grid: lookback grid; ``grid.W`` heads share each block's trunk.
        seed: initialization seed.
        stacks: per stack, its blocks in order. A stack with parameter
            sharing repeats one :class:`Block` object.
    """

    def __init__(self, config: ModelConfig, grid: LookbackGrid, seed: int,
                 stacks: list[list[Block]], dtype=np.float64):
        self.config, self.grid, self.seed = config, grid, seed
        self.stacks = stacks
        self.dtype = np.dtype(dtype)

    @property
    def precision(self) -> int:
        return 32 if self.dtype == np.float32 else 64

    @property
    def head_masks(self) -> np.ndarray:
        return self.grid.head_masks()

    def blocks(self) -> list[Block]:
        return [b for blocks in self.stacks for b in blocks]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        seen: set[int] = set()
        out = []
        for s, blocks in enumerate(self.stacks):
            for i, block in enumerate(blocks):
                if id(block) in seen:
                    continue
                seen.add(id(block))
                out.extend((f"stack{s}.block{i}.{name}", p) for name, p in block.named_parameters())
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def forward(self, x) -> Tensor:
        return model_forward(self, x)

    __call__ = forward

    def stack_forecasts(self, x) -> list[Tensor]:
        """Per-stack forecast contributions, each ``[N, H, W]``."""
        xw = _to_heads(x, self.grid, self.dtype)
        out = []
        for blocks in self.stacks:
            total = None
            for block in blocks:
                b, f = block.run(xw)
                xw = xw - b
                total = f if total is None else total + f
            out.append(transpose(total, (1, 2, 0)))
        return out

    def partial_forecasts(self, x) -> list[Tensor]:
        """Each block's forecast contribution ``[N, H, W]`` in order."""
        xw = _to_heads(x, self.grid, self.dtype)
        out = []
        for block in self.blocks():
            b, f = block.run(xw)
            xw = xw - b
            out.append(transpose(f, (1, 2, 0)))
        return out

    def residuals(self, x) -> list[np.ndarray]:
        """Input residual ``[N, L, W]`` entering each block, then the final one."""
        xw = _to_heads(x, self.grid, self.dtype)
        out = [transpose(xw, (1, 2, 0)).data]
        for block in self.blocks():
            b, _ = block.run(xw)
            xw = xw - b
            out.append(transpose(xw, (1, 2, 0)).data)
        return out

    def head_slice(self, w: int) -> "ParallelModel":
        """Standalone single-lookback model made of head ``w``'s parameters.

        The returned model shares tensors with this one; it consumes the
        unpadded ``l_w`` window.
        """
        memo: dict[int, Block] = {}
        stacks = []
        for blocks in self.stacks:
            for b in blocks:
                if id(b) not in memo:
                    memo[id(b)] = b.head_slice(w)
            stacks.append([memo[id(b)] for b in blocks])
        grid = LookbackGrid((self.grid.lookbacks[w],), self.grid.horizon)
        return ParallelModel(self.config, grid, self.seed, stacks, self.dtype)

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]


def build_model(config: ModelConfig, grid: LookbackGrid, seed: int = 0,
                precision: int = 64) -> ParallelModel:
    """Initialize a network: Glorot-uniform weights, zero biases, reproducible per seed."""
    if precision not in (32, 64):
        raise ConfigError(f"precision must be 32 or 64, got {precision}")
    dtype = np.float32 if precision == 32 else np.float64
    rng = np.random.default_rng(seed)
    stacks = []
    for sc in config.stacks:
        kind = sc.basis_kind()
        if sc.shared:
            block = Block(kind, grid, sc.width, sc.layers, rng, dtype)
            stacks.append([block] * sc.blocks)
        else:
            stacks.append([Block(kind, grid, sc.width, sc.layers, rng, dtype) for _ in range(sc.blocks)])
    return ParallelModel(config, grid, seed, stacks, dtype)


def embed_windows(histories: Sequence, grid: LookbackGrid) -> tuple[np.ndarray, np.ndarray]:
    """Right-align each history's last ``L`` values and replicate them per head.

    Returns:
        inputs: ``[N, L, W]``; head ``w`` keeps its last ``l_w`` positions and
            zeros elsewhere. Histories shorter than ``l_w`` are front-padded
            with zeros inside the head's window too.
        masks: ``[N, L, W]`` 0/1 marking positions that hold an observation.
    """
    L = grid.L
    buf = np.zeros((len(histories), L))
    avail = np.zeros((len(histories), L))
    for n, h in enumerate(histories):
        h = np.asarray(h, dtype=np.float64)
        if h.size == 0:
            raise DataError(f"history {n} is empty")
        tail = h[-L:]
        buf[n, L - tail.size:] = tail
        avail[n, L - tail.size:] = 1.0
    heads = grid.head_masks().T[None]
    return buf[:, :, None] * heads, avail[:, :, None] * heads


def block_forward(block: Block, x) -> tuple[Tensor, Tensor]:
    """Backcast ``[N, L, W]`` and forecast ``[N, H, W]`` of one block on a masked input."""
    xw = _to_heads(x, block.grid, block.dtype)
    b, f = block.run(xw)
    return transpose(b, (1, 2, 0)), transpose(f, (1, 2, 0))


def model_forward(model: ParallelModel, x) -> Tensor:
    """Doubly residual pass: each block sees the previous residual, forecasts add up.

    Args:
        x: ``[N, L, W]`` inputs (as from :func:`embed_windows`, scaled).

    Returns:
        ``[N, H, W]`` per-head forecasts.
    """
    xw = _to_heads(x, model.grid, model.dtype)
    forecast = None
    for block in model.blocks():
        b, f = block.run(xw)
        xw = xw - b
        forecast = f if forecast is None else forecast + f
    return transpose(forecast, (1, 2, 0))


def count_parameters(model: ParallelModel) -> int:
    """Number of scalar learnable parameters; shared tensors are counted once."""
    return int(sum(p.size for p in model.parameters()))


def count_parameters_for(config: ModelConfig, grid: LookbackGrid) -> int:
    """Parameter count of ``build_model(config, grid)`` without allocating it."""
    H = grid.horizon
    total = 0
    for sc in config.stacks:
        kind = sc.basis_kind()
        n = sum(grid.lookbacks) * sc.width + (sc.layers - 1) * (sc.width + 1) * sc.width
        for lb in grid.lookbacks:
            df, db = kind.forecast_dim(H), kind.backcast_dim(lb)
            n += (sc.width + 1) * (df + db)
            if kind.learnable:
                n += df * H + H + db * lb + lb
        total += n * (1 if sc.shared else sc.blocks)
    return total


def independent_parameter_count(config: ModelConfig, grid: LookbackGrid) -> int:
    """Total parameters of ``W`` separate single-lookback models over the same grid."""
    return sum(count_parameters_for(config, LookbackGrid((lb,), grid.horizon)) for lb in grid.lookbacks)


# ---------------------------------------------------------------------------
# serialization


def model_to_bytes(model: ParallelModel) -> bytes:
    named = model.named_parameters()
    header = {
        "format": "nbeatsp-model",
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "grid": model.grid.to_dict(),
        "seed": model.seed,
        "precision": model.precision,
        "basis_kinds": [s.basis for s in model.config.stacks],
        "parameters": [{"name": n, "shape": list(p.shape)} for n, p in named],
    }
    head = json.dumps(header, sort_keys=True).encode()
    body = b"".join(p.data.astype("<f8").tobytes() for _, p in named)
    return MAGIC + struct.pack("<Q", len(head)) + head + body


def model_from_bytes(blob: bytes) -> ParallelModel:
    if not blob.startswith(MAGIC):
        raise SerializationError("not a model container (bad magic)")
    try:
        (n,) = struct.unpack_from("<Q", blob, len(MAGIC))
        start = len(MAGIC) + 8
        header = json.loads(blob[start:start + n].decode())
    except (struct.error, ValueError) as exc:
        raise SerializationError(f"corrupt model header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise SerializationError(f"unsupported model format version {header.get('format_version')!r}, "
                                 f"expected {FORMAT_VERSION}")
    model = build_model(ModelConfig.from_dict(header["config"]), LookbackGrid.from_dict(header["grid"]),
                        header["seed"], header["precision"])
    named = model.named_parameters()
    if [(nm, list(p.shape)) for nm, p in named] != [(e["name"], e["shape"]) for e in header["parameters"]]:
        raise SerializationError("parameter layout in header does not match the rebuilt model")
    offset = start + n
    expected = offset + 8 * sum(p.size for _, p in named)
    if len(blob) != expected:
        raise SerializationError(f"model body has {len(blob) - offset} bytes, expected {expected - offset}")
    for _, p in named:
        arr = np.frombuffer(blob, dtype="<f8", count=p.size, offset=offset).reshape(p.shape)
        p.data = arr.astype(model.dtype)
        offset += 8 * p.size
    return model


def save_model(model: ParallelModel, path) -> str:
    """Write the container file; returns its sha256 hex digest."""
    blob = model_to_bytes(model)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load_model(path) -> ParallelModel:
    return model_from_bytes(Path(path).read_bytes())
