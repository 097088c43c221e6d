"""Acceptance criteria, one test each, at the stated tolerances.

The terminal summary prints one PASS/FAIL line per criterion (see conftest).
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from nbeatsp.data import Dataset, Frequency, TimeSeries, load_m4, scale_windows, train_test_split, unscale_forecast
from nbeatsp.ensemble import (EnsembleSpec, ForecastSet, ensemble_forecast, load_ensemble, median_combine,
                              route_frequency, save_ensemble, train_ensemble, zero_shot_apply)
from nbeatsp.metrics import evaluate_forecasts, metric_smape, naive2
from nbeatsp.model import (LookbackGrid, ModelConfig, SeasonalBasis, build_model, count_parameters,
                           count_parameters_for, embed_windows)
from nbeatsp.tensor import backward
from nbeatsp.training import (TrainConfig, batch_loss, loss_mape, loss_mase, loss_smape, multihead_loss,
                              sample_batch, train_member)

from conftest import central_difference
from test_metrics import max_oracle_error

M4_ENV = "NBEATSP_M4_DIR"


def random_model(rng):
    H = int(rng.integers(1, 7))
    grid = LookbackGrid.from_horizon(H)
    blocks = int(rng.integers(2, 31))
    width, layers = int(rng.integers(4, 17)), int(rng.integers(1, 5))
    if rng.random() < 0.5:
        cfg = ModelConfig.generic(blocks, width, layers, int(rng.integers(1, 9)), int(rng.integers(1, 9)))
    else:
        cfg = ModelConfig.interpretable(width, width, max(1, blocks // 2), layers, int(rng.integers(0, 4)))
    return build_model(cfg, grid, int(rng.integers(2**31))), grid


def test_criterion_1_parallel_sequential_equivalence(record_property):
    rng = np.random.default_rng(2024)
    start, worst, worst_rel, peak = time.perf_counter(), 0.0, 0.0, 0.0
    for _ in range(50):
        model, grid = random_model(rng)
        hist = [rng.normal(size=int(rng.integers(grid.L, grid.L + 10))) for _ in range(int(rng.integers(1, 6)))]
        full = model.forward(embed_windows(hist, grid)[0]).data
        for w in range(grid.W):
            head = model.head_slice(w)
            alone = head.forward(embed_windows(hist, head.grid)[0]).data
            diff = float(np.max(np.abs(full[:, :, w] - alone[:, :, 0])))
            worst = max(worst, diff)
            worst_rel = max(worst_rel, diff / max(float(np.max(np.abs(full[:, :, w]))), 1e-300))
        peak = max(peak, float(np.max(np.abs(full))))
    elapsed = time.perf_counter() - start
    record_property("measured", f"max abs diff {worst:.3e} (max relative {worst_rel:.1e}, "
                                f"largest forecast magnitude {peak:.1e}), {elapsed:.1f}s")
    assert worst <= 1e-10
    assert elapsed < 60


def test_criterion_2_gradient_correctness(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    series = [TimeSeries(f"S{i}", 10 + np.cumsum(rng.uniform(0.1, 1, 30)), Frequency.YEARLY, 3, 1) for i in range(4)]
    ds = train_test_split(Dataset(series))
    grid = LookbackGrid.from_horizon(3)
    model = build_model(ModelConfig.generic(2, 8), grid, 3)
    for p in model.parameters():
        # move zero-initialised biases off the ReLU kink
        p.data[...] += rng.normal(0, 0.1, p.shape)
    batch = sample_batch(ds, grid, TrainConfig(batch_size=4), np.random.default_rng(0))
    grads = backward(batch_loss(model, batch, "SMAPE"))
    params = model.parameters()
    worst = 0.0
    for _ in range(100):
        p = params[rng.integers(len(params))]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        fd = central_difference(lambda: batch_loss(model, batch, "SMAPE").item(), p.data, idx)
        g = grads.get(p, np.zeros(p.shape))[idx]
        worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), 1e-3))
    elapsed = time.perf_counter() - start
    record_property("measured", f"max relative error {worst:.3e}, {elapsed:.1f}s")
    assert worst < 1e-4
    assert elapsed < 60


def test_criterion_3_metric_oracle_equivalence(record_property):
    worst = max_oracle_error(1000, 123)
    rng = np.random.default_rng(5)
    series = []
    for i in range(100):
        freq, H, m = [(Frequency.YEARLY, 6, 1), (Frequency.QUARTERLY, 8, 4), (Frequency.MONTHLY, 18, 12)][i % 3]
        T = int(rng.integers(3 * m + 2, 80)) + H
        t = np.arange(T)
        x = 100 + rng.uniform(-1, 2) * t + (15 * np.sin(2 * np.pi * t / m) if m > 1 else 0) + rng.normal(0, 3, T)
        series.append(TimeSeries(f"S{i}", x, freq, H, m))
    ds = train_test_split(Dataset(series))
    report = evaluate_forecasts({s.id: naive2(h, s.m, s.horizon) for s, h in zip(ds.series, ds.train())}, ds)
    owas = {k: v["OWA"] for k, v in report.aggregates.items()}
    record_property("measured", f"oracle max error {worst:.1e}, OWA(NAIVE2) {owas}")
    assert worst <= 1e-12
    assert all(v == 1.0 for v in owas.values())


def test_criterion_4_parameter_accounting(record_property):
    H = 18
    cfg = ModelConfig.generic(30, 512)
    parallel = count_parameters_for(cfg, LookbackGrid.from_horizon(H))
    independent = sum(count_parameters_for(cfg, LookbackGrid((k * H,), H)) for k in range(2, 8))
    # the analytic count agrees with a built model on a reduced width
    small = ModelConfig.generic(3, 16)
    assert count_parameters(build_model(small, LookbackGrid.from_horizon(H))) == \
        count_parameters_for(small, LookbackGrid.from_horizon(H))
    ratio = independent / parallel
    record_property("measured", f"parallel {parallel}, independent {independent}, ratio {ratio:.4f}")
    assert 4.0 <= ratio <= 6.0


def overfit_dataset():
    rng = np.random.default_rng(11)
    t = np.arange(132.0)
    series = []
    for i in range(20):
        a, b, c = rng.uniform(1, 5), rng.uniform(0.5, 3), rng.uniform(0.5, 2)
        phase = rng.uniform(0, 2 * np.pi)
        x = 10 + a * t / 132 + b * (t / 132) ** 2 + c * np.sin(2 * np.pi * t / 12 + phase)
        series.append(TimeSeries(f"M{i}", x, Frequency.MONTHLY, 12, 12))
    return train_test_split(Dataset(series))


def test_criterion_5_overfit_smoke(record_property):
    start = time.perf_counter()
    ds = overfit_dataset()
    cfg = ModelConfig.interpretable(trend_width=64, seasonal_width=128)
    model, _ = train_member(ds, cfg, TrainConfig(iterations=2000, batch_size=128, seed=0))
    inputs, _ = embed_windows(ds.train(), model.grid)
    scaled, _, s = scale_windows(inputs)
    pred = unscale_forecast(model.forward(scaled).data, s)
    smape = float(np.mean([metric_smape(np.median(p, axis=1), t) for p, t in zip(pred, ds.test())]))

    trend, seasonal = (f.data for f in model.stack_forecasts(scaled))
    tgrid = np.arange(12) / 12
    vander = np.vander(tgrid, 3, increasing=True)
    flat = trend.transpose(1, 0, 2).reshape(12, -1)
    coef, *_ = np.linalg.lstsq(vander, flat, rcond=None)
    poly_residual = float(np.max(np.abs(vander @ coef - flat)))

    S = SeasonalBasis().matrix(12).T
    flat = seasonal.transpose(1, 0, 2).reshape(12, -1)
    proj = S @ np.linalg.lstsq(S, flat, rcond=None)[0]
    energy = float(np.min(np.sum(proj ** 2, axis=0) / np.sum(flat ** 2, axis=0)))
    elapsed = time.perf_counter() - start
    record_property("measured", f"held-out SMAPE {smape:.4f}, trend residual {poly_residual:.1e}, "
                                f"seasonal energy share {energy:.6f}, {elapsed:.0f}s")
    assert smape < 2.0
    assert poly_residual <= 1e-6
    assert energy >= 0.95
    assert elapsed < 300


def desk_scale_spec() -> EnsembleSpec:
    return EnsembleSpec(losses=("SMAPE", "MAPE", "MASE"), repeats=1, frequencies=(Frequency.YEARLY,),
                        model=ModelConfig.generic(stacks=8, width=128),
                        train_overrides={"iterations": 2500, "batch_size": 128})


@pytest.mark.slow
def test_criterion_6_desk_scale_m4_yearly(record_property):
    root = os.environ.get(M4_ENV)
    train, test = (Path(root or ".") / f"Yearly-{part}.csv" for part in ("train", "test"))
    if root is None or not train.exists() or not test.exists():
        record_property("measured", f"M4 Yearly files not found (set {M4_ENV})")
        pytest.fail(f"M4 data unavailable: set {M4_ENV} to a directory with Yearly-train.csv and Yearly-test.csv")
    ds = load_m4(train, test, "Yearly", limit=1000)
    start = time.perf_counter()
    members = train_ensemble(ds, desk_scale_spec())
    report = evaluate_forecasts(median_combine(ensemble_forecast(members, ds)), ds)
    owa = report.aggregates["Average"]["OWA"]
    record_property("measured", f"OWA {owa:.4f} over {len(ds)} series, {time.perf_counter() - start:.0f}s")
    assert owa < 1.0


def test_criterion_7_ensemble_semantics(record_property, tmp_path):
    rng = np.random.default_rng(99)
    for _ in range(1000):
        k, n, H, V = (int(rng.integers(1, m)) for m in (8, 4, 5, 7))
        ids = [f"S{i}" for i in range(n)]
        vals = {f"m{i}": rng.normal(size=(n, H, V)) for i in range(k)}
        order = list(vals)
        rng.shuffle(order)
        a, b = ForecastSet(), ForecastSet()
        for key in vals:
            a.add(key, ids, vals[key])
        for key in order:
            b.add(key, ids, vals[key])
        ca, cb = median_combine(a), median_combine(b)
        assert all(np.array_equal(ca[i], cb[i]) for i in ids)
    single = ForecastSet()
    v = rng.normal(size=(3, 4))
    single.add("only", ["A", "B", "C"], v)
    out = median_combine(single)
    assert all(np.array_equal(out[sid], v[i]) for i, sid in enumerate("ABC"))

    ds = train_test_split(Dataset([TimeSeries(f"Y{i}", 10 + np.cumsum(rng.uniform(0, 1, 30)), Frequency.YEARLY, 6, 1)
                                   for i in range(5)]))
    spec = EnsembleSpec(losses=("SMAPE", "MAPE"), repeats=1, frequencies=(Frequency.YEARLY,),
                        model=ModelConfig.generic(2, 8), train_overrides={"iterations": 5, "batch_size": 8})
    members = train_ensemble(ds, spec)
    save_ensemble(members, tmp_path, spec)
    loaded, _ = load_ensemble(tmp_path, spec)
    before = median_combine(ensemble_forecast(members, ds))
    after = median_combine(ensemble_forecast(loaded, ds))
    record_property("measured", "1000 permutations, identity and round trip checked")
    assert all(np.array_equal(before[i], after[i]) for i in before)


def test_criterion_8_zero_shot_plumbing(record_property):
    rng = np.random.default_rng(8)

    def make(freq, H, n):
        return train_test_split(Dataset([TimeSeries(f"{freq.value}{i}", 10 + np.cumsum(rng.uniform(0, 1, 60)),
                                                    freq, H, 1) for i in range(n)]))

    spec = EnsembleSpec(losses=("SMAPE",), repeats=1, frequencies=(Frequency.QUARTERLY,),
                        model=ModelConfig.generic(2, 8), train_overrides={"iterations": 3, "batch_size": 8})
    members = train_ensemble(make(Frequency.QUARTERLY, 6, 4), spec)
    seen = {}
    for h_t in (4, 13):
        fs = zero_shot_apply(members, make(Frequency.QUARTERLY, h_t, 3), "R_O")
        out = median_combine(fs)
        calls = {mf.provenance["invocations"] for mf in fs.members.values()}
        seen[h_t] = calls
        assert all(v.shape == (h_t,) for v in out.values())
    fs = zero_shot_apply(members, make(Frequency.OTHER, 6, 3), "R_O")
    routed = [mf.provenance["routed"] for mf in fs.members.values()]
    record_property("measured", f"invocations {seen}, Other routed via {routed}")
    assert seen == {4: {1}, 13: {3}}
    assert route_frequency(Frequency.OTHER) is Frequency.QUARTERLY and routed == [["Other"]]


def test_criterion_9_multihead_loss_mean(record_property):
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(200):
        W, n, H = int(rng.integers(1, 7)), int(rng.integers(1, 6)), int(rng.integers(1, 7))
        y = rng.uniform(0.5, 5, (n, H))
        f = rng.uniform(0.5, 5, (n, H, W))
        x = rng.uniform(0.5, 5, (n, 10, W))
        for name, fn in (("SMAPE", lambda w: loss_smape(f[:, :, w], y)), ("MAPE", lambda w: loss_mape(f[:, :, w], y)),
                         ("MASE", lambda w: loss_mase(f[:, :, w], y, x[:, :, w], 1))):
            got = multihead_loss(f, y, name, insample=x, m=1).item()
            want = np.mean([fn(w).item() for w in range(W)])
            worst = max(worst, abs(got - want))
    record_property("measured", f"max abs difference {worst:.1e}")
    assert worst <= 1e-12
