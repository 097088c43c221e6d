"""Bagging ensembles: member grid, training, median combination, persistence and transfer.

A member is one trained network for one (frequency, loss, repeat[, lookback])
grid cell. In parallel mode a member carries all ``W`` lookback heads and
each head is a separate vote in the median; in independent mode every
lookback is its own single-head member.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import M4_HORIZONS, Dataset, Frequency, scale_windows, unscale_forecast
from .exceptions import DataError, EnsembleError, NBeatsError, SerializationError
from .model import (PRESET_MULTIPLES, LookbackGrid, ModelConfig, ParallelModel, embed_windows, model_forward,
                    model_from_bytes, model_to_bytes)
from .tensor import Tensor, no_grad
from .training import ITERATIONS_CLASSIC, LOSSES, TrainConfig, train_member

ENSEMBLE_FORMAT_VERSION = 1
REGIMES = ("R_O", "R_SH", "R_SHLT")
M4_FREQUENCIES = (Frequency.YEARLY, Frequency.QUARTERLY, Frequency.MONTHLY,
                  Frequency.WEEKLY, Frequency.DAILY, Frequency.HOURLY)
# target frequency -> source members used to forecast it
DEFAULT_ROUTING = {Frequency.OTHER: Frequency.QUARTERLY}


def route_frequency(freq: Frequency, routing: Mapping[Frequency, Frequency] = DEFAULT_ROUTING) -> Frequency:
    return routing.get(freq, freq)


def regime_train_config(freq: Frequency, loss: str, regime: str, parallel: bool = True,
                        seed: int = 0) -> TrainConfig:
    """Training settings of a zero-shot regime.

    ``R_O`` keeps the source settings; ``R_SH`` retargets the horizon and
    trains 15k iterations for yearly/quarterly/monthly and 5k otherwise;
    ``R_SHLT`` also uses ``L_H = 10`` and 15k iterations everywhere.
    """
    base = TrainConfig.preset(freq, loss, parallel, seed)
    src = Frequency.QUARTERLY if freq is Frequency.OTHER else freq
    if regime == "R_O":
        return base
    if regime == "R_SH":
        return replace(base, iterations=ITERATIONS_CLASSIC[src])
    if regime == "R_SHLT":
        return replace(base, iterations=15_000, L_H=10.0)
    raise EnsembleError(f"unknown regime {regime!r}; expected one of {REGIMES}")


@dataclass(frozen=True)
class MemberSpec:
    index: int
    frequency: Frequency
    loss: str
    repeat: int
    multiples: tuple[int, ...]
    seed: int

    @property
    def key(self) -> str:
        look = "-".join(str(k) for k in self.multiples)
        return f"{self.index:04d}_{self.frequency.value}_{self.loss}_r{self.repeat}_l{look}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frequency"] = self.frequency.value
        d["multiples"] = list(self.multiples)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MemberSpec":
        return cls(int(d["index"]), Frequency.parse(d["frequency"]), d["loss"], int(d["repeat"]),
                   tuple(d["multiples"]), int(d["seed"]))


@dataclass(frozen=True)
class EnsembleSpec:
    """The bagging grid and how each member is trained.

    Attributes:
        lookback_mode: ``"parallel"`` (all lookbacks as heads of one member)
            or ``"independent"`` (one member per lookback).
        horizons: per-frequency horizon overrides (retargeted regimes);
            otherwise the dataset's horizon is used.
        train_overrides: ``TrainConfig`` fields applied on top of the
            regime preset (e.g. ``iterations``, ``batch_size``).
        heads_as_votes: each head is one median vote; when False the heads
            of a member are median-pooled first.
    """

    losses: tuple[str, ...] = LOSSES
    repeats: int = 10
    frequencies: tuple[Frequency, ...] = M4_FREQUENCIES
    lookback_mode: str = "parallel"
    multiples: tuple[int, ...] = PRESET_MULTIPLES
    model: ModelConfig = field(default_factory=ModelConfig.generic)
    regime: str = "R_O"
    horizons: dict = field(default_factory=dict)
    train_overrides: dict = field(default_factory=dict)
    heads_as_votes: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "losses", tuple(self.losses))
        object.__setattr__(self, "frequencies", tuple(
            Frequency.parse(f) if isinstance(f, str) else f for f in self.frequencies))
        object.__setattr__(self, "multiples", tuple(self.multiples))
        object.__setattr__(self, "horizons", {
            (Frequency.parse(k) if isinstance(k, str) else k): int(v) for k, v in self.horizons.items()})
        if not self.losses or any(l not in LOSSES for l in self.losses):
            raise EnsembleError(f"losses must be a non-empty subset of {LOSSES}, got {self.losses}")
        if self.repeats < 1:
            raise EnsembleError(f"repeats must be positive, got {self.repeats}")
        if not self.frequencies:
            raise EnsembleError("at least one frequency is required")
        if self.lookback_mode not in ("parallel", "independent"):
            raise EnsembleError(f"lookback_mode must be 'parallel' or 'independent', got {self.lookback_mode!r}")
        if self.regime not in REGIMES:
            raise EnsembleError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        unknown = set(self.train_overrides) - set(TrainConfig.__dataclass_fields__) - {"seed"}
        if unknown:
            raise EnsembleError(f"unknown training overrides {sorted(unknown)}")

    def members(self) -> list[MemberSpec]:
        """Grid cells in a fixed order: frequency, loss, repeat, then lookback."""
        looks = [self.multiples] if self.lookback_mode == "parallel" else [(k,) for k in self.multiples]
        out = []
        for freq in self.frequencies:
            for loss in self.losses:
                for r in range(self.repeats):
                    for mult in looks:
                        idx = len(out)
                        seed = int(np.random.SeedSequence([self.seed, idx]).generate_state(1)[0])
                        out.append(MemberSpec(idx, freq, loss, r, tuple(mult), seed))
        return out

    def train_config(self, member: MemberSpec) -> TrainConfig:
        cfg = regime_train_config(member.frequency, member.loss, self.regime,
                                  self.lookback_mode == "parallel", member.seed)
        overrides = {k: v for k, v in self.train_overrides.items() if k != "seed"}
        return replace(cfg, **overrides)

    def to_dict(self) -> dict:
        return {
            "losses": list(self.losses),
            "repeats": self.repeats,
            "frequencies": [f.value for f in self.frequencies],
            "lookback_mode": self.lookback_mode,
            "multiples": list(self.multiples),
            "model": self.model.to_dict(),
            "regime": self.regime,
            "horizons": {f.value: h for f, h in self.horizons.items()},
            "train_overrides": dict(self.train_overrides),
            "heads_as_votes": self.heads_as_votes,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        d = dict(d)
        if "model" in d:
            d["model"] = ModelConfig.from_dict(d["model"])
        return cls(**d)


@dataclass
class Member:
    spec: MemberSpec
    train: TrainConfig
    model: ParallelModel
    trace: np.ndarray | None = None
    seconds: float = 0.0

    @property
    def key(self) -> str:
        return self.spec.key


class TrainedEnsemble(list):
    """Members that trained successfully; ``failures`` maps member key to the error text."""

    def __init__(self, members=(), failures=None):
        super().__init__(members)
        self.failures: dict[str, str] = dict(failures or {})


def _member_horizon(spec: EnsembleSpec, member: MemberSpec, ds: Dataset) -> int:
    if member.frequency in spec.horizons:
        return spec.horizons[member.frequency]
    if len(ds):
        return ds.horizon()
    return M4_HORIZONS[member.frequency]


def _train_one(ds: Dataset, spec: EnsembleSpec, member: MemberSpec, log_dir) -> Member:
    subset = ds.subset(s for s in ds.series if s.frequency is member.frequency)
    if len(subset) == 0:
        raise DataError(f"no {member.frequency.value} series to train on")
    horizon = _member_horizon(spec, member, subset)
    grid = LookbackGrid(tuple(k * horizon for k in member.multiples), horizon)
    cfg = spec.train_config(member)
    log_path = None if log_dir is None else Path(log_dir) / f"{member.key}.loss.csv"
    start = time.perf_counter()
    model, trace = train_member(subset, spec.model, cfg, grid, log_path)
    return Member(member, cfg, model, trace, time.perf_counter() - start)


def train_ensemble(ds: Dataset, spec: EnsembleSpec, threads: int = 1, log_dir=None,
                   on_done: Callable[[Member], None] | None = None) -> TrainedEnsemble:
    """Train every grid member; failures are reported and skipped.

    Each member's seed depends only on the master seed and its grid index,
    so results do not depend on ``threads`` or completion order.

    Raises:
        EnsembleError: no member trained successfully.
    """
    grid = spec.members()
    results: dict[int, Member] = {}
    failures: dict[str, str] = {}

    def job(m: MemberSpec):
        try:
            return m, _train_one(ds, spec, m, log_dir), None
        except NBeatsError as exc:
            return m, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for m, trained, err in pool.map(job, grid):
            if err is not None:
                warnings.warn(f"member {m.key} failed: {err}", stacklevel=2)
                failures[m.key] = err
            else:
                results[m.index] = trained
                if on_done is not None:
                    on_done(trained)
    if not results:
        raise EnsembleError(f"no ensemble member trained successfully ({len(failures)} failures)")
    return TrainedEnsemble([results[i] for i in sorted(results)], failures)


# ---------------------------------------------------------------------------
# forecasting


def member_forecast(member: Member | ParallelModel, histories: Sequence, scaling: str | None = None,
                    chunk: int = 4096) -> np.ndarray:
    """Per-head forecasts ``[N, H, W]`` in original units for the given histories."""
    model = member.model if isinstance(member, Member) else member
    if scaling is None:
        scaling = member.train.scaling if isinstance(member, Member) else "per-union"
    out = []
    with no_grad():
        for lo in range(0, len(histories), chunk):
            inputs, _ = embed_windows(histories[lo: lo + chunk], model.grid)
            scaled, _, s = scale_windows(inputs, None, scaling)
            pred = model_forward(model, Tensor(scaled, dtype=model.dtype)).data.astype(np.float64)
            out.append(unscale_forecast(pred, s))
    if not out:
        return np.zeros((0, model.grid.horizon, model.grid.W))
    return np.concatenate(out)


def adapt_horizon(forecast_fn: Callable[[list[np.ndarray]], np.ndarray], histories: Sequence,
                  h_target: int) -> tuple[np.ndarray, int]:
    """Fit a native-horizon forecaster to ``h_target`` steps.

    ``forecast_fn`` maps histories to ``[N, H_src]`` or ``[N, H_src, V]``
    forecasts. When ``H_src >= h_target`` the first ``h_target`` steps are
    kept; otherwise the median forecast across votes is appended to each
    history and the forecaster is called again until enough steps exist.

    Returns:
        The ``[N, h_target(, V)]`` forecast and the number of invocations.
    """
    if h_target < 1:
        raise EnsembleError(f"target horizon must be positive, got {h_target}")
    hist = [np.asarray(h, dtype=np.float64) for h in histories]
    chunks, total, calls = [], 0, 0
    while total < h_target:
        pred = np.asarray(forecast_fn(hist))
        calls += 1
        if pred.shape[1] < 1:
            raise EnsembleError("forecaster returned an empty horizon")
        chunks.append(pred)
        total += pred.shape[1]
        if total < h_target:
            step = pred if pred.ndim == 2 else np.median(pred, axis=2)
            hist = [np.concatenate([h, p]) for h, p in zip(hist, step)]
    return np.concatenate(chunks, axis=1)[:, :h_target], calls


@dataclass
class MemberForecast:
    ids: list[str]
    values: np.ndarray  # [n, H, V]
    provenance: dict = field(default_factory=dict)


class ForecastSet:
    """Forecasts per member for the series each member covers (original units).

    Every member stores ``[n, H, V]``: ``V`` votes per series, one per head.
    """

    def __init__(self, horizon: int | None = None):
        self.horizon = horizon
        self.members: dict[str, MemberForecast] = {}
        self._ids: dict[str, None] = {}

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def add(self, key: str, ids: Sequence[str], values: np.ndarray, provenance: dict | None = None) -> None:
        if key in self.members:
            raise EnsembleError(f"member {key!r} already has forecasts")
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3 or values.shape[0] != len(ids):
            raise EnsembleError(f"member {key!r}: expected [{len(ids)}, H(, V)] forecasts, got {values.shape}")
        if self.horizon is None:
            self.horizon = values.shape[1]
        if values.shape[1] != self.horizon:
            raise EnsembleError(f"member {key!r}: horizon {values.shape[1]} != {self.horizon}")
        self.members[key] = MemberForecast(list(ids), values, dict(provenance or {}))
        for i in ids:
            self._ids.setdefault(i, None)

    def member_forecasts(self) -> dict[str, np.ndarray]:
        """Each member's heads median-pooled, aligned to :attr:`ids`; requires full coverage."""
        out = {}
        for key, mf in self.members.items():
            if mf.ids != self.ids:
                raise EnsembleError(f"member {key!r} does not cover every series in order")
            out[key] = np.median(mf.values, axis=2)
        return out


def median_combine(fs: ForecastSet, ids: Sequence[str] | None = None,
                   heads_as_votes: bool = True) -> dict[str, np.ndarray]:
    """Elementwise median over all votes for each series (even count: mean of the central pair).

    Raises:
        EnsembleError: a requested series has no member forecast.
    """
    wanted = fs.ids if ids is None else list(ids)
    votes: dict[str, list[np.ndarray]] = {i: [] for i in wanted}
    for mf in fs.members.values():
        vals = mf.values if heads_as_votes else np.median(mf.values, axis=2, keepdims=True)
        for row, sid in enumerate(mf.ids):
            if sid in votes:
                votes[sid].append(vals[row])
    out = {}
    for sid in wanted:
        if not votes[sid]:
            raise EnsembleError(f"no member forecast for series {sid!r}")
        out[sid] = np.median(np.concatenate(votes[sid], axis=1), axis=1)
    return out


def ensemble_forecast(members: Sequence[Member], ds: Dataset, threads: int = 1,
                      routing: Mapping[Frequency, Frequency] = DEFAULT_ROUTING) -> ForecastSet:
    """Native-horizon forecasts of every series by the members of its (routed) frequency."""
    return zero_shot_apply(members, ds, "R_SH", routing, threads)


def zero_shot_apply(members: Sequence[Member], target: Dataset, regime: str = "R_O",
                    routing: Mapping[Frequency, Frequency] = DEFAULT_ROUTING,
                    threads: int = 1) -> ForecastSet:
    """Forecast a target dataset with members trained elsewhere.

    Each target series uses the members of its frequency after ``routing``
    (by default "Other" series use the Quarterly members). Under ``R_O`` the
    member horizon is truncated or autoregressively extended to the target
    horizon; under ``R_SH`` and ``R_SHLT`` members must already forecast the
    target horizon.

    Raises:
        EnsembleError: a target frequency has no members, or a retargeted
            regime meets a member whose horizon differs from the target's.
    """
    if regime not in REGIMES:
        raise EnsembleError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    histories = target.train()
    groups: dict[tuple[Frequency, int], list[int]] = {}
    for i, s in enumerate(target.series):
        groups.setdefault((route_frequency(s.frequency, routing), s.horizon), []).append(i)
    by_freq: dict[Frequency, list[Member]] = {}
    for m in members:
        by_freq.setdefault(m.spec.frequency, []).append(m)
    jobs = []
    for (src, h_t), rows in groups.items():
        if src not in by_freq:
            raise EnsembleError(f"no trained members for frequency {src.value} "
                                f"(needed by {target.series[rows[0]].frequency.value} target series)")
        for m in by_freq[src]:
            if regime != "R_O" and m.model.grid.horizon != h_t:
                raise EnsembleError(f"regime {regime} needs members with horizon {h_t}, "
                                    f"member {m.key} forecasts {m.model.grid.horizon}")
            jobs.append((m, rows, h_t))

    def run(job):
        m, rows, h_t = job
        hist = [histories[i] for i in rows]
        values, calls = adapt_horizon(lambda h: member_forecast(m, h), hist, h_t)
        return values, calls

    fs_by_h: dict[int, ForecastSet] = {}
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for (m, rows, h_t), (values, calls) in zip(jobs, pool.map(run, jobs)):
            target_freqs = sorted({target.series[i].frequency.value for i in rows})
            prov = {"member": m.spec.to_dict(), "source_horizon": m.model.grid.horizon,
                    "target_horizon": h_t, "invocations": calls, "regime": regime,
                    "routed": [f for f in target_freqs if f != m.spec.frequency.value]}
            key = f"{m.key}@H{h_t}"
            fs_by_h.setdefault(h_t, ForecastSet(h_t)).add(key, [target.series[i].id for i in rows], values, prov)
    if len(fs_by_h) == 1:
        return next(iter(fs_by_h.values()))
    return _MixedForecastSet(fs_by_h) if fs_by_h else ForecastSet()


class _MixedForecastSet(ForecastSet):
    """Forecast sets for several target horizons viewed as one."""

    def __init__(self, parts: dict[int, ForecastSet]):
        super().__init__(None)
        for part in parts.values():
            for key, mf in part.members.items():
                self.members[key] = mf
                for i in mf.ids:
                    self._ids.setdefault(i, None)


# ---------------------------------------------------------------------------
# persistence


def _sha256(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def save_ensemble(members: Sequence[Member], directory, spec: EnsembleSpec | None = None) -> Path:
    """Write one model container per member and ``manifest.json`` with checksums."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for m in members:
        blob = model_to_bytes(m.model)
        name = f"member_{m.spec.index:04d}.nbp"
        (directory / name).write_bytes(blob)
        entries.append({"key": m.key, "file": name, "sha256": _sha256(blob),
                        "member": m.spec.to_dict(), "train": m.train.to_dict()})
    manifest = {"format": "nbeatsp-ensemble", "format_version": ENSEMBLE_FORMAT_VERSION,
                "spec": None if spec is None else spec.to_dict(), "members": entries}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_ensemble(directory, spec: EnsembleSpec | None = None) -> tuple[list[Member], EnsembleSpec | None]:
    """Read an ensemble directory, verifying version, checksums and (optionally) the spec.

    Raises:
        SerializationError: missing manifest or member file, checksum or version mismatch.
        EnsembleError: ``spec`` differs from the one recorded in the manifest.
    """
    directory = Path(directory)
    path = directory / "manifest.json"
    if not path.exists():
        raise SerializationError(f"{directory} has no manifest.json")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SerializationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if manifest.get("format_version") != ENSEMBLE_FORMAT_VERSION:
        raise SerializationError(f"unsupported ensemble format version {manifest.get('format_version')!r}, "
                                 f"expected {ENSEMBLE_FORMAT_VERSION}")
    stored = manifest.get("spec")
    if spec is not None and stored != json.loads(json.dumps(spec.to_dict())):
        raise EnsembleError("ensemble manifest was written for a different ensemble spec")
    members = []
    for entry in manifest["members"]:
        file = directory / entry["file"]
        if not file.exists():
            raise SerializationError(f"member {entry['key']} is missing its model file {entry['file']}")
        blob = file.read_bytes()
        if _sha256(blob) != entry["sha256"]:
            raise SerializationError(f"member {entry['key']}: checksum mismatch for {entry['file']}")
        members.append(Member(MemberSpec.from_dict(entry["member"]), TrainConfig(**entry["train"]),
                              model_from_bytes(blob)))
    loaded_spec = EnsembleSpec.from_dict(stored) if stored is not None else None
    return members, loaded_spec


def write_forecasts(forecasts: Mapping[str, np.ndarray], path) -> None:
    """``id,h1..hH`` rows; floats use ``repr`` so reading back is exact."""
    rows = list(forecasts.items())
    width = max((len(v) for _, v in rows), default=0)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *(f"h{i + 1}" for i in range(width))])
        for sid, v in rows:
            writer.writerow([sid, *(repr(float(x)) for x in v)])


def read_forecasts(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not header or header[0] != "id":
            raise DataError(f"{path}: expected header id,h1..hH")
        for lineno, row in enumerate(reader, start=2):
            cells = [c for c in row[1:] if c.strip()]
            try:
                out[row[0]] = np.array([float(c) for c in cells])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric forecast value") from None
    return out
