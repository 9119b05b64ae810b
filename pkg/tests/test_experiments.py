import numpy as np
import pytest

from dynblockade import experiments as ex
from dynblockade.errors import InvalidArgumentError, NotSettledError
from dynblockade.observables import find_window_min


def test_presets_carry_captioned_parameters():
    assert (ex.FIG1.E, ex.FIG1.alpha, ex.FIG1.P0, ex.FIG1.P1, ex.FIG1.T) == (2.0, 0.05, 0.2, 1.0, 18.5)
    assert (ex.FIG2.P0, ex.FIG2.P1) == (0.5, 0.5)
    assert (ex.FIG3.E, ex.FIG3.alpha, ex.FIG3.P1, ex.FIG3.T) == (0.25, 1.0, 0.2, 12.3)


def test_scenario_validation():
    with pytest.raises(InvalidArgumentError):
        ex.FIG1.with_(kind="movie")
    with pytest.raises(InvalidArgumentError):
        ex.FIG1.with_(horizon=20.0)  # shorter than warm-up plus one period
    with pytest.raises(InvalidArgumentError):
        ex.FIG1.with_(dim=2)


def test_schedule_and_window():
    sched = ex.FIG1.schedule()
    assert [p.time for p in sched.pulses] == pytest.approx([18.5, 37.0])
    assert ex.FIG1.window() == pytest.approx((37.0, 55.5))
    assert ex.FIG1.with_(horizon=60.0).schedule().pulse_count == 3


def test_fig1_mechanism(fig1_combined, fig1_continuous, fig1_pulses_only, fig1_g0):
    _, g2_min, _ = find_window_min(fig1_combined, ex.FIG1.window())
    assert g2_min < fig1_g0
    last = fig1_continuous.t >= ex.FIG1.window()[0]
    assert np.std(fig1_continuous.g2[last]) < 1e-6
    lit = fig1_pulses_only.n > 1e-4
    assert np.max(np.abs(fig1_pulses_only.g2[lit] - 1.0)) < 0.05


def test_cycle_integral_on_settled_period(fig1_combined):
    rep = ex.check_cycle_integral(fig1_combined, 2)
    assert rep.passed()
    assert rep.cumulative_changes_sign
    # the delta pulse itself moves g2 by a finite amount
    assert rep.pulse_jump != 0


def test_cycle_integral_trivial_without_pulses(fig1_continuous):
    rep = ex.check_cycle_integral(fig1_continuous, 2)
    assert rep.normalized_residual < 1e-3
    assert rep.end_error < 1e-4


def test_cycle_integral_rejects_unsettled_start(fig1_combined):
    with pytest.raises(NotSettledError):
        ex.check_cycle_integral(fig1_combined, 0)


def test_periodic_regime_after_warmup():
    traj = ex.run_scenario(ex.FIG1.with_(periods=2, sample_dt=0.01))
    assert ex.periodicity_deviation(traj, 2, 3) < 1e-5


def test_small_occupation_sweep():
    res = ex.run_fig2([0.2, 0.5])
    assert res.shape == (2,)
    assert res.converged.all()
    rows = res.rows()
    assert len(rows) == 2 and rows[1]["P0"] == 0.5
    assert np.all(np.abs(res.g0 - 1.0) < 0.05)


def test_sweep_point_matches_time_trace():
    cfg = ex.FIG3.with_(P0=0.3)
    res = ex.run_fig3([cfg.alpha], [cfg.P0], base=cfg)
    traj = ex.run_scenario(cfg.with_(kind="colormap"))
    t_s, g2_min, n_min = find_window_min(traj, cfg.window())
    assert (res.t_s[0, 0], res.g2_ts[0, 0], res.n_ts[0, 0]) == (t_s, g2_min, n_min)


SMALL_MAP = ex.FIG3_MAP.with_(dim=15)


def test_colormap_preset_uses_weak_regime_truncation():
    assert ex.FIG3_MAP.dim == 25 and ex.FIG3_MAP.kind == "colormap"


def test_sweeps_are_deterministic_across_workers():
    a = ex.run_fig3([0.5, 1.0], [0.3, 0.6], base=SMALL_MAP, jobs=1)
    b = ex.run_fig3([0.5, 1.0], [0.3, 0.6], base=SMALL_MAP, jobs=2)
    assert np.array_equal(a.g2_ts, b.g2_ts)
    assert np.array_equal(a.n_ts, b.n_ts)
    assert a.shape == (2, 2)


def test_linear_row_is_flat():
    res = ex.run_fig3([0.0], [0.3, 0.6], base=SMALL_MAP)
    assert np.max(np.abs(res.g2_ts - 1.0)) < 1e-6
    assert np.max(np.abs(res.g0 - 1.0)) < 1e-6


def test_regrid_interpolates_inside_and_masks_outside():
    res = ex.run_fig3([1.0], [0.3, 0.5, 0.8], base=SMALL_MAP, n_axis=np.array([1e-6, 0.3, 50.0]))
    reg = res.regridded
    assert np.isnan(reg["combined"][0, 0]) and np.isnan(reg["combined"][0, 2])
    n = res.n_ts[0]
    if n.min() <= 0.3 <= n.max():
        assert np.isfinite(reg["combined"][0, 1])


def test_empty_grids_rejected():
    with pytest.raises(InvalidArgumentError):
        ex.run_fig2([])
    with pytest.raises(InvalidArgumentError):
        ex.run_fig3([], [0.1])


def test_gaussian_window_leads_the_pulse():
    cfg = ex.FIG1.with_(shape="gaussian", sigma=0.2)
    t_a, t_b = ex.gaussian_window(cfg)
    assert t_a == pytest.approx(37.0 - 1.2)
    assert t_b - t_a == pytest.approx(18.5)
    assert ex.gaussian_window(ex.FIG1) == ex.FIG1.window()


def test_fig3_single_point_enhancement():
    pt = ex.sweep_point(ex.FIG3)
    assert pt["g2_ts"] < pt["g0"]
    assert pt["n_ts"] > pt["n0"]
