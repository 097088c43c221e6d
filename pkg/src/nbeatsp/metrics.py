"""Evaluation metrics, naive baselines, OWA and report assembly.

Evaluation metrics are exact: an undefined denominator raises
:class:`~nbeatsp.exceptions.MetricError` instead of being guarded.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np

from .exceptions import MetricError

METRICS = ("SMAPE", "MASE", "MAPE", "ND", "MDA")


def _pair(forecast, actual) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(forecast, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if f.shape != a.shape or f.size == 0:
        raise MetricError(f"forecast and actual must be non-empty and equally long, got {f.size} and {a.size}")
    return f, a


def _label(series_id) -> str:
    return "" if series_id is None else f" (series {series_id})"


def metric_mape(forecast, actual, series_id=None) -> float:
    """``100/H * sum |f - a| / |a|``."""
    f, a = _pair(forecast, actual)
    if np.any(a == 0):
        raise MetricError(f"MAPE undefined: zero actual value{_label(series_id)}")
    return float(100.0 * np.mean(np.abs(f - a) / np.abs(a)))


def metric_smape(forecast, actual, series_id=None) -> float:
    """``200/H * sum |f - a| / (|a| + |f|)``."""
    f, a = _pair(forecast, actual)
    denom = np.abs(a) + np.abs(f)
    if np.any(denom == 0):
        raise MetricError(f"SMAPE undefined: forecast and actual both zero{_label(series_id)}")
    return float(200.0 * np.mean(np.abs(f - a) / denom))


def mase_denominator(insample, m: int, series_id=None) -> float:
    """In-sample mean absolute lag-``m`` difference."""
    x = np.asarray(insample, dtype=np.float64).ravel()
    if x.size <= m:
        raise MetricError(f"MASE needs more than m={m} in-sample points, got {x.size}{_label(series_id)}")
    scale = float(np.mean(np.abs(x[m:] - x[:-m])))
    if scale == 0:
        raise MetricError(f"MASE undefined: in-sample series is constant at lag {m}{_label(series_id)}")
    return scale


def metric_mase(forecast, actual, insample, m: int = 1, series_id=None) -> float:
    """Mean absolute error scaled by the in-sample seasonal naive error."""
    f, a = _pair(forecast, actual)
    return float(np.mean(np.abs(f - a)) / mase_denominator(insample, m, series_id))


def metric_nd(forecast, actual, series_id=None) -> float:
    """``sum |f - a| / sum |a|``."""
    f, a = _pair(forecast, actual)
    total = np.sum(np.abs(a))
    if total == 0:
        raise MetricError(f"ND undefined: actual values are all zero{_label(series_id)}")
    return float(np.sum(np.abs(f - a)) / total)


def metric_mda(forecast, actual, last_known: float) -> float:
    """Share of steps whose change from ``last_known`` has the right sign (0 is its own sign)."""
    f, a = _pair(forecast, actual)
    return float(np.mean(np.sign(f - last_known) == np.sign(a - last_known)))


def metric_owa(smape: float, mase: float, naive2_smape: float, naive2_mase: float) -> float:
    """``(SMAPE / SMAPE_naive2 + MASE / MASE_naive2) / 2``."""
    if naive2_smape <= 0 or naive2_mase <= 0:
        raise MetricError(f"OWA undefined: NAIVE2 metrics must be positive, got {naive2_smape}, {naive2_mase}")
    return 0.5 * (smape / naive2_smape + mase / naive2_mase)


def coverage(mase_values: Sequence[float], tau: float = 1.0) -> float:
    """Fraction of series whose MASE is below ``tau``."""
    v = np.asarray(mase_values, dtype=np.float64)
    if v.size == 0:
        raise MetricError("coverage of an empty set of series")
    return float(np.mean(v < tau))


# ---------------------------------------------------------------------------
# baselines


def naive(insample, horizon: int) -> np.ndarray:
    x = np.asarray(insample, dtype=np.float64)
    if x.size == 0:
        raise MetricError("naive forecast needs at least one observation")
    return np.full(horizon, x[-1])


def _check_seasonal_history(x: np.ndarray, m: int) -> None:
    if x.size < max(1, 2 * m):
        raise MetricError(f"seasonal baseline needs at least {max(1, 2 * m)} observations, got {x.size}")


def snaive(insample, m: int, horizon: int) -> np.ndarray:
    """Repeat the last seasonal cycle."""
    x = np.asarray(insample, dtype=np.float64)
    _check_seasonal_history(x, m)
    last = x[-m:]
    return np.array([last[i % m] for i in range(horizon)])


def acf(x, k: int) -> float:
    """Sample autocorrelation at lag ``k`` (biased, overall-mean normalized)."""
    x = np.asarray(x, dtype=np.float64)
    d = x - x.mean()
    denom = np.sum(d * d)
    if denom == 0:
        return 0.0
    return float(np.sum(d[: x.size - k] * d[k:]) / denom)


def seasonality_test(x, m: int) -> bool:
    """90% test: ``|acf(m)| > 1.645 * sqrt((1 + 2 * sum_{k<m} acf(k)^2) / T)``.

    Only run when ``m > 1`` and at least three full cycles are available;
    otherwise the series is treated as non-seasonal.
    """
    x = np.asarray(x, dtype=np.float64)
    if m <= 1 or x.size < 3 * m:
        return False
    s = sum(acf(x, k) ** 2 for k in range(1, m))
    limit = 1.645 * math.sqrt((1.0 + 2.0 * s) / x.size)
    return abs(acf(x, m)) > limit


def seasonal_indices(x, m: int) -> np.ndarray:
    """Classical multiplicative decomposition: per-position seasonal index, length ``T``.

    The trend is a centered moving average (``2 x m`` when ``m`` is even);
    each phase index is the mean ratio ``x / trend`` over that phase,
    normalized so the ``m`` indices average to 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if m % 2 == 0:
        weights = np.r_[0.5, np.ones(m - 1), 0.5] / m
    else:
        weights = np.ones(m) / m
    half = weights.size // 2
    trend = np.full(x.size, np.nan)
    trend[half: x.size - half] = np.convolve(x, weights, mode="valid")
    ratio = x / trend
    phase = np.array([np.nanmean(ratio[p::m]) for p in range(m)])
    phase /= phase.mean()
    return np.array([phase[t % m] for t in range(x.size)])


def naive2(insample, m: int, horizon: int) -> np.ndarray:
    """Seasonally adjusted random walk.

    When the seasonality test passes, the series is divided by its seasonal
    indices, the last adjusted value is carried forward and the forecast is
    multiplied back by the index of the matching phase.
    """
    x = np.asarray(insample, dtype=np.float64)
    if m <= 1:
        return naive(x, horizon)
    _check_seasonal_history(x, m)
    if not seasonality_test(x, m):
        return naive(x, horizon)
    si = seasonal_indices(x, m)
    out_si = np.array([si[-m + i % m] for i in range(horizon)])
    return naive(x / si, horizon) * out_si


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricReport:
    """Per-series and aggregate metrics.

    Attributes:
        per_series: one dict per series with ``id``, ``frequency`` and metrics.
        aggregates: split name (frequency, ``"Average"``, or window label) to
            metric means, ``OWA``, ``coverage`` and the series count ``n``.
        tau: MASE threshold used for coverage.
        correlation: mean and std of member-pairwise residual correlation.
    """

    per_series: list[dict] = field(default_factory=list)
    aggregates: dict[str, dict[str, float]] = field(default_factory=dict)
    tau: float = 1.0
    correlation: tuple[float, float] | None = None

    COLUMNS = ("n", "SMAPE", "MASE", "MAPE", "ND", "MDA", "OWA", "coverage")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["split", *self.COLUMNS])
            for split, row in self.aggregates.items():
                writer.writerow([split, *(_fmt(row.get(c)) for c in self.COLUMNS)])

    def per_series_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "frequency", *METRICS])
            for row in self.per_series:
                writer.writerow([row["id"], row.get("frequency", ""), *(_fmt(row.get(c)) for c in METRICS)])

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "aggregates": self.aggregates,
            "correlation": None if self.correlation is None
            else {"mean": self.correlation[0], "std": self.correlation[1]},
            "per_series": self.per_series,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(_jsonable(self.to_dict()), fh, indent=2, sort_keys=True)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def series_metrics(forecast, actual, insample, m: int, series_id=None) -> dict[str, float]:
    """All evaluation metrics for one series; undefined ones become NaN with a warning."""
    insample = np.asarray(insample, dtype=np.float64)
    out = {}
    fns = {
        "SMAPE": lambda: metric_smape(forecast, actual, series_id),
        "MASE": lambda: metric_mase(forecast, actual, insample, m, series_id),
        "MAPE": lambda: metric_mape(forecast, actual, series_id),
        "ND": lambda: metric_nd(forecast, actual, series_id),
        "MDA": lambda: metric_mda(forecast, actual, insample[-1]),
    }
    for name, fn in fns.items():
        try:
            out[name] = fn()
        except MetricError as exc:
            warnings.warn(str(exc), stacklevel=2)
            out[name] = float("nan")
    return out


def _aggregate(rows: list[dict], naive_rows: list[dict], tau: float) -> dict[str, float]:
    agg: dict[str, float] = {"n": len(rows)}
    for name in METRICS:
        agg[name] = float(np.nanmean([r[name] for r in rows])) if rows else float("nan")
    n2_smape = float(np.nanmean([r["SMAPE"] for r in naive_rows]))
    n2_mase = float(np.nanmean([r["MASE"] for r in naive_rows]))
    try:
        agg["OWA"] = metric_owa(agg["SMAPE"], agg["MASE"], n2_smape, n2_mase)
    except MetricError as exc:
        warnings.warn(str(exc), stacklevel=2)
        agg["OWA"] = float("nan")
    mases = [r["MASE"] for r in rows if not math.isnan(r["MASE"])]
    agg["coverage"] = coverage(mases, tau) if mases else float("nan")
    return agg


def evaluate_forecasts(forecasts: Mapping[str, np.ndarray], ds, tau: float = 1.0,
                       members=None) -> MetricReport:
    """Score forecasts on the held-out segments of a split dataset.

    OWA is formed per frequency from the mean SMAPE and MASE of the model
    and of NAIVE2 on the same series; the ``"Average"`` row pools all series,
    which weights each frequency by its series count.

    Args:
        forecasts: series id to ``H``-length forecast.
        ds: :class:`~nbeatsp.data.Dataset` with a train/test split.
        tau: MASE threshold for the coverage fraction.
        members: optional ForecastSet; adds member residual correlation.

    Raises:
        MetricError: a series of ``ds`` has no forecast, or lengths differ.
    """
    rows, naive_rows, groups = [], [], {}
    for s, hist, test in zip(ds.series, ds.train(), ds.test()):
        if s.id not in forecasts:
            raise MetricError(f"no forecast for series {s.id!r}")
        f = np.asarray(forecasts[s.id], dtype=np.float64)
        if f.shape != test.shape:
            raise MetricError(f"series {s.id!r}: forecast length {f.size} != horizon {test.size}")
        row = {"id": s.id, "frequency": s.frequency.value, **series_metrics(f, test, hist, s.m, s.id)}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            base = series_metrics(naive2(hist, s.m, test.size), test, hist, s.m, s.id)
        rows.append(row)
        naive_rows.append(base)
        groups.setdefault(s.frequency.value, []).append(len(rows) - 1)
    report = MetricReport(per_series=rows, tau=tau)
    for name, idx in groups.items():
        report.aggregates[name] = _aggregate([rows[i] for i in idx], [naive_rows[i] for i in idx], tau)
    if rows:
        report.aggregates["Average"] = _aggregate(rows, naive_rows, tau)
    if members is not None:
        report.correlation = member_residual_correlation(members, {s.id: t for s, t in zip(ds.series, ds.test())})
    return report


def member_residual_correlation(fs, actuals: Mapping[str, np.ndarray]) -> tuple[float, float]:
    """Mean and std over member pairs of the correlation of absolute percentage errors.

    Args:
        fs: a ForecastSet (``ids`` and ``member_forecasts()``), or a mapping
            member id to ``[N, H]`` forecasts aligned with ``actuals`` order.
        actuals: series id to actual values.
    """
    if hasattr(fs, "member_forecasts"):
        ids = list(fs.ids)
        members = fs.member_forecasts()
    else:
        ids = list(actuals)
        members = dict(fs)
    if len(members) < 2:
        raise MetricError(f"residual correlation needs at least two members, got {len(members)}")
    a = np.concatenate([np.asarray(actuals[i], dtype=np.float64) for i in ids])
    if np.any(a == 0):
        raise MetricError("absolute percentage errors undefined: zero actual value")
    ape = [np.abs(np.asarray(f, dtype=np.float64).reshape(-1) - a) / np.abs(a) for f in members.values()]
    corr = []
    for x, y in combinations(ape, 2):
        if np.std(x) == 0 or np.std(y) == 0:
            raise MetricError("correlation undefined for a member with constant errors")
        corr.append(float(np.corrcoef(x, y)[0, 1]))
    return float(np.mean(corr)), float(np.std(corr))


def rolling_origin_eval(forecast_fn: Callable[[list[np.ndarray]], np.ndarray], series: Sequence,
                        horizon: int, stride: int, n_windows: int, m: int = 1,
                        tau: float = 1.0) -> MetricReport:
    """Evaluate at ``n_windows`` successive origins ``stride`` apart, the last ending at the series end.

    Args:
        forecast_fn: maps a list of histories to ``[N, horizon]`` forecasts.
        series: full series (arrays).

    Returns:
        A report with one aggregate row per window (``"window1"`` oldest)
        and ``"mean"``, the average of the per-window aggregates.

    Raises:
        MetricError: a series is too short for the requested windows.
    """
    if n_windows < 1 or stride < 1:
        raise MetricError("n_windows and stride must be positive")
    series = [np.asarray(x, dtype=np.float64) for x in series]
    report = MetricReport(tau=tau)
    for k in range(n_windows):
        back = (n_windows - 1 - k) * stride
        hists, tests = [], []
        for i, x in enumerate(series):
            origin = x.size - horizon - back
            if origin <= m:
                raise MetricError(f"series {i} (length {x.size}) too short for {n_windows} windows "
                                  f"of horizon {horizon} and stride {stride}")
            hists.append(x[:origin])
            tests.append(x[origin: origin + horizon])
        preds = np.asarray(forecast_fn(hists))
        rows = [series_metrics(p, t, h, m, i) for i, (p, t, h) in enumerate(zip(preds, tests, hists))]
        agg = {"n": len(rows)}
        for name in METRICS:
            agg[name] = float(np.nanmean([r[name] for r in rows]))
        mases = [r["MASE"] for r in rows if not math.isnan(r["MASE"])]
        agg["coverage"] = coverage(mases, tau) if mases else float("nan")
        report.aggregates[f"window{k + 1}"] = agg
        report.per_series.extend({"id": str(i), "window": k + 1, **r} for i, r in enumerate(rows))
    windows = list(report.aggregates.values())
    report.aggregates["mean"] = {name: float(np.mean([w[name] for w in windows]))
                                 for name in ("n", *METRICS, "coverage")}
    return report
