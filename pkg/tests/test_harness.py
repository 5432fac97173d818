import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adalrs.config import OracleConfig, RunConfig
from adalrs.controller import AdaLRSConfig, EventKind
from adalrs.harness import (
    RunReport,
    Trace,
    compare_runs,
    convexity_sweep,
    is_unimodal,
    read_trace_csv,
    run_experiment,
    sign_changes,
    trailing_means,
    write_sweep,
    write_trace_csv,
)
from adalrs.oracle import NoOptimumError, QuadraticOracle
from adalrs.sched import ScheduleConfig

SMALL_ORACLE = OracleConfig(curvature=100, dim=32, noise_std=0.1, condition_number=1e3, init_scale=10)
SMALL_ADA = AdaLRSConfig(window_k=50)


def small(adalrs=SMALL_ADA, base_lr=1e-4, steps=6000, seed=0, **kw):
    return RunConfig(
        scheduler=ScheduleConfig("constant", base_lr=base_lr, total_steps=steps),
        adalrs=adalrs,
        oracle=OracleConfig(**{**vars(SMALL_ORACLE), "seed": seed}),
        **kw,
    )


def test_baseline_keeps_unit_scale():
    rep = run_experiment(small(adalrs=None, steps=500))
    assert set(rep.trace.scale) == {1.0}
    assert rep.events == [] and rep.verdict is None
    assert len(rep.trace) == 500


def test_effective_lr_is_base_times_scale():
    rep = run_experiment(small())
    assert rep.events
    for b, s, lr in zip(rep.trace.base_lr, rep.trace.scale, rep.trace.effective_lr):
        assert lr == b * s


def test_same_seed_same_bytes(tmp_path):
    run_experiment(small(output_dir=tmp_path / "a"))
    run_experiment(small(output_dir=tmp_path / "b"))
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    assert (tmp_path / "a" / "events.json").read_bytes() == (tmp_path / "b" / "events.json").read_bytes()


def test_seed_changes_the_run():
    a = run_experiment(small(seed=0, steps=300))
    b = run_experiment(small(seed=1, steps=300))
    assert a.trace.loss != b.trace.loss


def test_report_round_trip(tmp_path):
    rep = run_experiment(small(output_dir=tmp_path))
    back = RunReport.load(tmp_path)
    assert back.trace == rep.trace
    assert back.events == rep.events
    assert back.verdict == rep.verdict
    assert back.final_loss == rep.final_loss


@given(st.lists(st.tuples(st.floats(allow_nan=False), st.floats(), st.floats()), max_size=30))
def test_trace_csv_round_trip(rows):
    import tempfile

    t = Trace()
    for i, (a, b, c) in enumerate(rows):
        t.append(i, a, b, a * b if math.isfinite(a * b) else c, c)
    with tempfile.TemporaryDirectory() as d:
        write_trace_csv(t, f"{d}/t.csv")
        back = read_trace_csv(f"{d}/t.csv")
    assert back == t
    assert [repr(x) for x in back.loss] == [repr(x) for x in t.loss]


def test_divergence_is_flagged_not_raised():
    rep = run_experiment(small(adalrs=None, base_lr=0.05, steps=2000))
    assert rep.diverged
    assert len(rep.trace) < 2000


def test_trial_divergence_is_rolled_back():
    # x3 from 0.015 is far past 2/C; the trial must revert and downscale
    cfg = small(adalrs=AdaLRSConfig(window_k=50, search_start_ratio=0.0), base_lr=0.015, steps=3000)
    rep = run_experiment(cfg)
    assert not rep.diverged
    assert len(rep.trace) == 3000
    assert any(e.kind is EventKind.UPSCALE_REVERTED_THEN_DOWNSCALE for e in rep.events)


def test_end_to_end_reaches_the_optimum_neighbourhood():
    cfg = RunConfig(
        scheduler=ScheduleConfig("constant", base_lr=1e-4, total_steps=40_000),
        adalrs=AdaLRSConfig(),
        oracle=OracleConfig(curvature=100, dim=256, noise_std=0.1, condition_number=1e4, init_scale=10),
    )
    rep = run_experiment(cfg)
    assert any(e.kind is EventKind.UPSCALE_KEPT for e in rep.events)
    lr = rep.verdict.final_scale_lr
    assert 0.01 / 6 < lr < 0.01 * 6


# -- compare ----------------------------------------------------------------


def fake_report(losses, oracle=None, total=None, window=10):
    t = Trace()
    for i, x in enumerate(losses):
        t.append(i, 1e-3, 1.0, 1e-3, float(x))
    total = total or len(losses)
    return RunReport(
        trace=t,
        events=[],
        final_loss=float(np.mean(losses[-window:])),
        final_window=window,
        diverged=False,
        config={"oracle": oracle or {"seed": 0}, "scheduler": {"total_steps": total}},
    )


def test_compare_identical():
    r = fake_report(np.linspace(10, 1, 200))
    c = compare_runs(r, r)
    assert c.final_loss_delta == 0.0
    assert c.crossing_step == 199
    assert c.crossing_fraction == pytest.approx(199 / 200)


def test_compare_better_from_s():
    s, k = 80, 10
    b = np.linspace(10, 1, 200)
    a = b.copy()
    a[s:] = 0.5
    c = compare_runs(fake_report(a, window=k), fake_report(b, window=k))
    assert c.crossing_step <= s + k
    assert c.final_loss_delta < 0


def test_compare_never_reached():
    c = compare_runs(fake_report(np.full(100, 5.0)), fake_report(np.linspace(4, 1, 100)))
    assert c.crossing_step is None and c.crossing_fraction is None


def test_compare_rejects_other_oracles():
    with pytest.raises(ValueError):
        compare_runs(fake_report([1.0] * 20), fake_report([1.0] * 20, oracle={"seed": 1}))


def test_trailing_means():
    out = trailing_means([1, 2, 3, 4], 2)
    assert math.isnan(out[0])
    assert list(out[1:]) == [1.5, 2.5, 3.5]


# -- sweeps -----------------------------------------------------------------


def quad():
    return QuadraticOracle(100.0, dim=256, noise_std=0.1, condition_number=1e4, init_scale=10.0)


def test_sweep_snapshot_zero_is_initial_loss():
    lrs = [1e-4 * 2**i for i in range(6)]
    res = convexity_sweep(quad, lrs, 300, snapshots=[0])
    assert res.snapshot_losses[0] == [quad().initial_loss] * 6


def test_sweep_argmin_near_one_over_c():
    lrs = [1e-4 * 2**i for i in range(11)]
    res = convexity_sweep(quad, lrs, 2000, snapshots=[2000])
    row = res.snapshot_losses[2000]
    assert is_unimodal(row)
    best = int(np.nanargmin([math.inf if x is None else x for x in row]))
    assert abs(np.log2(lrs[best] / 0.01)) <= 1
    assert row[-1] is None  # 0.1024 > 2 / C


def test_sweep_all_diverged(tmp_path):
    res = convexity_sweep(quad, [0.05 * 2**i for i in range(5)], 500, snapshots=[0, 100])
    assert res.final_losses == [None] * 5
    assert res.snapshot_losses[100] == [None] * 5
    with pytest.raises(NoOptimumError):
        res.final_argmin()
    write_sweep(res, tmp_path)
    assert "NaN" in (tmp_path / "loss_vs_lr.dat").read_text()


def test_sweep_needs_five_points():
    with pytest.raises(ValueError):
        convexity_sweep(quad, [1e-3, 2e-3], 100)


def test_write_sweep_columns(tmp_path):
    res = convexity_sweep(quad, [1e-4 * 2**i for i in range(5)], 400, snapshots=[0, 200])
    write_sweep(res, tmp_path)
    rows = [l.split() for l in (tmp_path / "loss_vs_lr.dat").read_text().splitlines()[1:]]
    assert len(rows) == 5 and all(len(r) == 4 for r in rows)
    vrows = (tmp_path / "velocity_vs_lr.dat").read_text().splitlines()
    assert len(vrows) == 6


@pytest.mark.parametrize(
    "values,changes,uni",
    [
        ([5, 4, 3, 2, 1], 0, True),
        ([5, 3, 1, 2, 4], 1, True),
        ([1, 3, 5, 4, 2], 1, False),
        ([5, 3, 4, 2, 6], 3, False),
        ([5, None, 3, 1, None], 0, True),
        ([4, 4, 3, 3, 5], 1, True),
    ],
)
def test_unimodality(values, changes, uni):
    assert sign_changes(values) == changes
    assert is_unimodal(values) is uni
