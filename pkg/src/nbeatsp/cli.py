"""Command-line front end: ``nbeatsp {train,forecast,evaluate,apply,params}``.

A run is described by a JSON config (validated against the bundled schema,
unknown keys rejected); a named preset supplies defaults, the file
overrides the preset and command-line flags override the file.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .data import M4_HORIZONS, Dataset, Frequency, TimeSeries, load_dataset, read_values, train_test_split
from .ensemble import (REGIMES, EnsembleSpec, load_ensemble, median_combine, read_forecasts, save_ensemble,
                       train_ensemble, write_forecasts, zero_shot_apply)
from .exceptions import ConfigError, DataError, NBeatsError
from .metrics import evaluate_forecasts
from .model import LookbackGrid, ModelConfig, count_parameters, count_parameters_for, independent_parameter_count

log = logging.getLogger("nbeatsp")

PRESETS: dict[str, dict] = {
    "m4-parallel-generic": {"model": "generic", "ensemble": {"lookback_mode": "parallel"}},
    "m4-parallel-interpretable": {"model": "interpretable", "ensemble": {"lookback_mode": "parallel"}},
    "m4-nbeats-generic": {"model": "generic", "ensemble": {"lookback_mode": "independent"}},
    "m4-nbeats-interpretable": {"model": "interpretable", "ensemble": {"lookback_mode": "independent"}},
    "zero-shot-r-o": {"model": "generic", "ensemble": {"lookback_mode": "parallel", "regime": "R_O"}},
    "zero-shot-r-sh": {"model": "generic", "ensemble": {"lookback_mode": "parallel", "regime": "R_SH"}},
    "zero-shot-r-shlt": {"model": "generic", "ensemble": {"lookback_mode": "parallel", "regime": "R_SHLT"}},
}


def _schema() -> dict:
    return json.loads(resources.files("nbeatsp").joinpath("config_schema.json").read_text())


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(cfg: dict, source: str = "config") -> dict:
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{source}: {where}: {exc.message}") from None
    if "preset" in cfg and cfg["preset"] not in PRESETS:
        raise ConfigError(f"unknown preset {cfg['preset']!r}; available presets: {', '.join(sorted(PRESETS))}")
    return cfg


def load_config(path) -> dict:
    """Parse and validate a JSON config file; parse errors report line and column."""
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return validate_config(cfg, str(path))


def _flag_overrides(args) -> dict:
    out: dict = {}

    def put(section, key, value):
        if value is not None:
            (out.setdefault(section, {}) if section else out)[key] = value

    put(None, "preset", getattr(args, "preset", None))
    put(None, "seed", args.seed)
    put(None, "threads", args.threads)
    put(None, "out", args.out)
    put(None, "tau", getattr(args, "tau", None))
    put(None, "ensemble_dir", getattr(args, "ensemble", None))
    put(None, "forecasts", getattr(args, "forecasts", None))
    put("dataset", "values", getattr(args, "values", None))
    put("dataset", "metadata", getattr(args, "metadata", None))
    put("dataset", "test_values", getattr(args, "test_values", None))
    if getattr(args, "holdout", False):
        put("dataset", "holdout", True)
    if getattr(args, "losses", None):
        put("ensemble", "losses", [s.strip().upper() for s in args.losses.split(",")])
    put("ensemble", "repeats", getattr(args, "repeats", None))
    if getattr(args, "frequencies", None):
        put("ensemble", "frequencies", [Frequency.parse(s).value for s in args.frequencies.split(",")])
    put("ensemble", "regime", getattr(args, "regime", None))
    put("train", "iterations", getattr(args, "iterations", None))
    put("train", "batch_size", getattr(args, "batch_size", None))
    return out


def resolve_config(args) -> dict:
    """Preset, then config file, then flags."""
    file_cfg = load_config(args.config) if args.config else {}
    flags = _flag_overrides(args)
    preset = flags.get("preset", file_cfg.get("preset"))
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; available presets: {', '.join(sorted(PRESETS))}")
    cfg = _merge(PRESETS.get(preset, {}), file_cfg)
    cfg = _merge(cfg, flags)
    return validate_config(cfg, "resolved configuration")


def build_model_config(cfg: dict) -> ModelConfig:
    ov = cfg.get("model_overrides", {})
    if cfg.get("model", "generic") == "interpretable":
        unused = set(ov) - {"trend_width", "seasonal_width", "blocks", "layers", "degree"}
        if unused:
            raise ConfigError(f"model_overrides {sorted(unused)} do not apply to the interpretable model")
        return ModelConfig.interpretable(ov.get("trend_width", 256), ov.get("seasonal_width", 2048),
                                         ov.get("blocks", 3), ov.get("layers", 4), ov.get("degree", 2))
    unused = set(ov) - {"stacks", "width", "layers", "dim_f", "dim_b"}
    if unused:
        raise ConfigError(f"model_overrides {sorted(unused)} do not apply to the generic model")
    return ModelConfig.generic(ov.get("stacks", 30), ov.get("width", 512), ov.get("layers", 4),
                               ov.get("dim_f", 32), ov.get("dim_b", 32))


def build_spec(cfg: dict) -> EnsembleSpec:
    ens = dict(cfg.get("ensemble", {}))
    return EnsembleSpec(model=build_model_config(cfg), train_overrides=dict(cfg.get("train", {})),
                        seed=cfg.get("seed", 0), **ens)


def load_run_dataset(cfg: dict) -> Dataset:
    d = cfg.get("dataset", {})
    if "values" not in d or "metadata" not in d:
        raise ConfigError("dataset.values and dataset.metadata are required (or --values/--metadata)")
    ds = load_dataset(d["values"], d["metadata"])
    if "limit" in d:
        ds = Dataset(ds.series[: d["limit"]])
    if "test_values" in d:
        test = read_values(d["test_values"])
        series, split = [], {}
        for s in ds.series:
            if s.id not in test:
                raise DataError(f"series {s.id!r} missing from {d['test_values']}")
            fut = test[s.id]
            if fut.size != s.horizon:
                raise DataError(f"series {s.id!r}: {fut.size} test values but horizon {s.horizon}")
            series.append(TimeSeries(s.id, np.concatenate([s.values, fut]), s.frequency, s.horizon, s.m))
            split[s.id] = s.values.size
        return Dataset(series, split)
    if d.get("holdout"):
        return train_test_split(ds)
    return ds


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out", "nbeatsp-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _file_logger(out: Path) -> logging.Handler:
    handler = logging.FileHandler(out / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def cmd_train(cfg: dict) -> int:
    spec = build_spec(cfg)
    ds = load_run_dataset(cfg)
    out = _out_dir(cfg)
    handler = _file_logger(out)
    try:
        logs = out / "logs"
        logs.mkdir(exist_ok=True)
        log.info("training %d members", len(spec.members()))
        members = train_ensemble(ds, spec, cfg.get("threads", os.cpu_count() or 1), logs,
                                 on_done=lambda m: log.info("member %s trained in %.2fs", m.key, m.seconds))
        save_ensemble(members, out / "ensemble", spec)
        report = {
            "members": [{"key": m.key, "final_loss": float(m.trace[-1]) if m.trace is not None and m.trace.size
                         else None, "parameters": count_parameters(m.model)} for m in members],
            "failures": members.failures,
        }
        (out / "train_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        for key, err in members.failures.items():
            print(f"member {key} failed: {err}", file=sys.stderr)
        print(f"trained {len(members)} members ({len(members.failures)} failed) -> {out / 'ensemble'}")
        return 1 if members.failures else 0
    finally:
        log.removeHandler(handler)
        handler.close()


def _ensemble_dir(cfg: dict) -> Path:
    if "ensemble_dir" not in cfg:
        raise ConfigError("an ensemble directory is required (--ensemble or ensemble_dir)")
    return Path(cfg["ensemble_dir"])


def cmd_forecast(cfg: dict) -> int:
    members, spec = load_ensemble(_ensemble_dir(cfg))
    ds = load_run_dataset(cfg)
    fs = zero_shot_apply(members, ds, "R_SH", threads=cfg.get("threads", 1))
    heads = spec.heads_as_votes if spec is not None else True
    combined = median_combine(fs, ds.ids, heads_as_votes=heads)
    out = _out_dir(cfg)
    write_forecasts(combined, out / "forecasts.csv")
    print(f"wrote {len(combined)} forecasts -> {out / 'forecasts.csv'}")
    return 0


def _write_report(report, out: Path) -> None:
    report.to_csv(out / "metrics.csv")
    report.to_json(out / "metrics.json")
    report.per_series_csv(out / "per_series.csv")
    for split, row in report.aggregates.items():
        print(f"{split:>10}  n={int(row['n']):<6d} SMAPE={row['SMAPE']:.4f}  MASE={row['MASE']:.4f}  "
              f"OWA={row.get('OWA', float('nan')):.4f}")


def cmd_evaluate(cfg: dict) -> int:
    if "forecasts" not in cfg:
        raise ConfigError("a forecast file is required (--forecasts)")
    forecasts = read_forecasts(cfg["forecasts"])
    ds = load_run_dataset(cfg)
    if ds.split is None:
        raise ConfigError("evaluation needs held-out values: set dataset.test_values or dataset.holdout")
    report = evaluate_forecasts(forecasts, ds, cfg.get("tau", 1.0))
    _write_report(report, _out_dir(cfg))
    return 0


def cmd_apply(cfg: dict) -> int:
    members, spec = load_ensemble(_ensemble_dir(cfg))
    ds = load_run_dataset(cfg)
    regime = cfg.get("ensemble", {}).get("regime", "R_O")
    fs = zero_shot_apply(members, ds, regime, threads=cfg.get("threads", 1))
    heads = spec.heads_as_votes if spec is not None else True
    combined = median_combine(fs, ds.ids, heads_as_votes=heads)
    out = _out_dir(cfg)
    write_forecasts(combined, out / "forecasts.csv")
    print(f"wrote {len(combined)} forecasts ({regime}) -> {out / 'forecasts.csv'}")
    if ds.split is not None:
        _write_report(evaluate_forecasts(combined, ds, cfg.get("tau", 1.0), members=fs
                                         if len(fs.members) > 1 and _full_coverage(fs) else None), out)
    return 0


def _full_coverage(fs) -> bool:
    ids = fs.ids
    return all(mf.ids == ids for mf in fs.members.values())


def cmd_params(cfg: dict) -> int:
    rows = []
    if "ensemble_dir" in cfg:
        members, _ = load_ensemble(_ensemble_dir(cfg))
        for m in members:
            rows.append((m.key, 1, count_parameters(m.model)))
    else:
        spec = build_spec(cfg)
        horizons = {f: spec.horizons.get(f, M4_HORIZONS.get(f, 8)) for f in spec.frequencies}
        for spec_m in spec.members():
            h = horizons[spec_m.frequency]
            grid = LookbackGrid(tuple(k * h for k in spec_m.multiples), h)
            rows.append((spec_m.key, 1, count_parameters_for(spec.model, grid)))
    total = sum(r[2] for r in rows)
    lines = ["member,parameters", *(f"{k},{n}" for k, _, n in rows), f"total,{total}"]
    if "ensemble_dir" not in cfg and spec.lookback_mode == "parallel":
        indep = 0
        for spec_m in spec.members():
            h = horizons[spec_m.frequency]
            indep += independent_parameter_count(spec.model, LookbackGrid(tuple(k * h for k in spec_m.multiples), h))
        lines.append(f"independent_equivalent,{indep}")
        lines.append(f"reduction,{indep / total:.4f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if "out" in cfg:
        (_out_dir(cfg) / "params.csv").write_text(text)
    return 0


COMMANDS = {"train": cmd_train, "forecast": cmd_forecast, "evaluate": cmd_evaluate,
            "apply": cmd_apply, "params": cmd_params}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbeatsp", description="Multi-head N-BEATS forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--values", help="values file (id,x1,x2,...)")
        p.add_argument("--metadata", help="metadata file (id,frequency,horizon,m)")
        p.add_argument("--test-values", dest="test_values", help="held-out values file")
        p.add_argument("--holdout", action="store_true", help="hold out the last H values of each series")
        return p

    p = common(sub.add_parser("train", help="train an ensemble"))
    p.add_argument("--preset", help=f"one of: {', '.join(sorted(PRESETS))}")
    p.add_argument("--losses", help="comma-separated subset of SMAPE,MAPE,MASE")
    p.add_argument("--repeats", type=int)
    p.add_argument("--frequencies", help="comma-separated frequencies")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)

    p = common(sub.add_parser("forecast", help="forecast with a trained ensemble"))
    p.add_argument("--ensemble", help="ensemble directory")

    p = common(sub.add_parser("evaluate", help="score a forecast file"))
    p.add_argument("--forecasts", help="forecast file (id,h1..hH)")
    p.add_argument("--tau", type=float, help="MASE threshold for coverage")

    p = common(sub.add_parser("apply", help="zero-shot forecast of another dataset"))
    p.add_argument("--ensemble", help="ensemble directory")
    p.add_argument("--regime", choices=REGIMES)
    p.add_argument("--tau", type=float)

    p = common(sub.add_parser("params", help="parameter counts of a config or ensemble"))
    p.add_argument("--preset", help=f"one of: {', '.join(sorted(PRESETS))}")
    p.add_argument("--ensemble", help="ensemble directory")
    p.add_argument("--losses")
    p.add_argument("--repeats", type=int)
    p.add_argument("--frequencies")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (NBeatsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
