"""Scenario presets and the figure-level numerical experiments.

Every scenario starts from the vacuum, applies pulses at t = m*T
(m = 1, 2, ...) on top of the continuous drive, and analyses the period
that follows the last warm-up pulse, [warmup*T, (warmup+1)*T].
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from . import dynamics as dyn
from .correlations import TwoTimeResult, g2_stationary, g2_two_time
from .errors import InvalidArgumentError, NotSettledError, TruncationWarning
from .fock_core import FockSpace, top_population, vacuum
from .observables import find_window_min, g2_equal, moments

KINDS = ("time-trace", "occupation-sweep", "colormap", "two-time", "checks")


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical parameters (units of gamma and hbar/gamma) plus run settings."""

    name: str = "custom"
    kind: str = "time-trace"
    E: float = 2.0
    alpha: float = 0.05
    P0: complex = 0.2
    P1: complex = 1.0
    T: float = 18.5
    shape: str = "delta"
    sigma: float | None = None
    dim: int = 25
    warmup_periods: int = 2
    periods: int = 1
    sample_dt: float = 0.01
    horizon: float | None = None
    method: str = "rk"
    two_time_half_width: float = 3.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown scenario kind {self.kind!r}")
        if not self.T > 0 or not self.sample_dt > 0:
            raise InvalidArgumentError("T and sample_dt must be positive")
        if self.dim < 3:
            raise InvalidArgumentError("production scenarios need dim >= 3 (g2 vanishes identically at dim 2)")
        if self.warmup_periods < 0 or self.periods < 1:
            raise InvalidArgumentError("need warmup_periods >= 0 and periods >= 1")
        if self.horizon is not None and self.horizon < (self.warmup_periods + 1) * self.T - 1e-9:
            raise InvalidArgumentError("horizon must cover the warm-up plus one period")
        self.params  # validates E and alpha

    @property
    def params(self) -> dyn.ModeParams:
        return dyn.ModeParams(self.E, self.alpha)

    @property
    def t_end(self) -> float:
        if self.horizon is not None:
            return self.horizon
        return (self.warmup_periods + self.periods) * self.T

    def schedule(self, t_end: float | None = None) -> dyn.DriveSchedule:
        t_end = self.t_end if t_end is None else t_end
        # pulses at m*T strictly before the end of the run
        count = max(0, math.ceil(t_end / self.T - 1e-9) - 1)
        return dyn.DriveSchedule.periodic(self.P0, self.P1, self.T, count, shape=self.shape, sigma=self.sigma)

    def window(self, k: int = 0) -> tuple[float, float]:
        m = self.warmup_periods + k
        return (m * self.T, (m + 1) * self.T)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        d = asdict(self)
        for k in ("P0", "P1"):
            z = complex(d[k])
            d[k] = z.real if z.imag == 0 else z
        return d


FIG1 = ScenarioConfig(name="fig1", E=2.0, alpha=0.05, P0=0.2, P1=1.0, T=18.5, dim=25, sample_dt=0.005)
FIG2 = ScenarioConfig(name="fig2", E=2.0, alpha=0.05, P0=0.5, P1=0.5, T=18.5, dim=25, sample_dt=0.01)
FIG3 = ScenarioConfig(
    name="fig3", E=0.25, alpha=1.0, P0=0.5, P1=0.2, T=12.3, dim=20, sample_dt=0.01, method="propagator"
)

# the colormap reaches alpha = 0.02, i.e. the weak-nonlinearity regime with n of a few photons,
# so it uses the larger truncation of the weak scenarios
FIG3_MAP = FIG3.with_(kind="colormap", dim=25)

P0_GRID = np.geomspace(0.05, 1.0, 20)
ALPHA_GRID = np.geomspace(0.02, 2.0, 20)


def run_scenario(config: ScenarioConfig, *, store_states=False, t_end: float | None = None) -> dyn.Trajectory:
    """Full run from the vacuum over [0, t_end]."""
    t_end = config.t_end if t_end is None else t_end
    space = FockSpace(config.dim)
    return dyn.evolve(
        vacuum(space),
        config.params,
        config.schedule(t_end),
        t_end,
        config.sample_dt,
        method=config.method,
        store_states=store_states,
    )


@dataclass
class Conventional:
    g0: float
    n0: float
    state: np.ndarray
    top_population: float


def conventional(config: ScenarioConfig) -> Conventional:
    """Steady state of the continuous drive alone."""
    rho = dyn.steady_state_direct(FockSpace(config.dim), config.params, config.P0)
    return Conventional(g2_equal(rho), float(moments(rho)[0]), rho, top_population(rho))


# --- Fig. 1 -------------------------------------------------------------------


def fig1_config(variant: Literal["combined", "continuous", "pulses_only"] = "combined", base=FIG1) -> ScenarioConfig:
    if variant == "combined":
        return base.with_(name=f"{base.name}-combined")
    if variant == "continuous":
        return base.with_(name=f"{base.name}-continuous", P1=0.0)
    if variant == "pulses_only":
        return base.with_(name=f"{base.name}-pulses_only", P0=0.0)
    raise InvalidArgumentError(f"unknown Fig. 1 variant {variant!r}")


def run_fig1(variant: Literal["combined", "continuous", "pulses_only"] = "combined", base=FIG1) -> dyn.Trajectory:
    return run_scenario(fig1_config(variant, base))


# --- sweeps -------------------------------------------------------------------


@dataclass
class SweepResult:
    """Per-point scalars on a rectangular grid; arrays are indexed like ``axes``."""

    axes: dict[str, np.ndarray]
    t_s: np.ndarray
    g2_ts: np.ndarray
    n_ts: np.ndarray
    g0: np.ndarray
    n0: np.ndarray
    top_population: np.ndarray
    converged: np.ndarray
    config: ScenarioConfig
    regridded: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.g2_ts.shape

    def rows(self) -> list[dict]:
        """Long format, one dict per grid point in C order."""
        out = []
        names = list(self.axes)
        for idx in np.ndindex(self.shape):
            row = {name: float(self.axes[name][i]) for name, i in zip(names, idx)}
            row.update(
                t_s=float(self.t_s[idx]),
                n_ts=float(self.n_ts[idx]),
                g2_ts=float(self.g2_ts[idx]),
                g0_conventional=float(self.g0[idx]),
                n_conventional=float(self.n0[idx]),
                converged=bool(self.converged[idx]),
            )
            out.append(row)
        return out


def sweep_point(config: ScenarioConfig) -> dict:
    """Combined-drive minimum over the analysis window plus the conventional pair."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        traj = run_scenario(config)  # same run as a time trace, so both routes agree bitwise
        conv = conventional(config)
    t_s, g2_min, n_min = find_window_min(traj, config.window())
    top = max(traj.max_top_population, conv.top_population)
    return {
        "t_s": t_s,
        "g2_ts": g2_min,
        "n_ts": n_min,
        "g0": conv.g0,
        "n0": conv.n0,
        "top_population": top,
        "converged": top < dyn.HEADROOM,
    }


def _map(fn, items: Sequence, jobs: int | None):
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map preserves input order, so assembly is independent of completion order
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _collect(axes: dict[str, np.ndarray], points: list[dict], config: ScenarioConfig) -> SweepResult:
    shape = tuple(len(v) for v in axes.values())

    def arr(key, dtype=float):
        return np.array([p[key] for p in points], dtype=dtype).reshape(shape)

    return SweepResult(
        axes=axes,
        t_s=arr("t_s"),
        g2_ts=arr("g2_ts"),
        n_ts=arr("n_ts"),
        g0=arr("g0"),
        n0=arr("n0"),
        top_population=arr("top_population"),
        converged=arr("converged", bool),
        config=config,
    )


def run_fig2(P0_grid: Iterable[float] | None = None, base=FIG2, jobs: int | None = 1) -> SweepResult:
    """Occupation sweep of the weak-nonlinearity scenario by varying P0."""
    grid = np.asarray(P0_GRID if P0_grid is None else list(P0_grid), dtype=float)
    if grid.size == 0:
        raise InvalidArgumentError("P0 grid is empty")
    base = base.with_(kind="occupation-sweep")
    configs = [base.with_(P0=float(p)) for p in grid]
    return _collect({"P0": grid}, _map(sweep_point, configs, jobs), base)


def run_fig3(
    alpha_grid: Iterable[float] | None = None,
    P0_grid: Iterable[float] | None = None,
    base=FIG3_MAP,
    jobs: int | None = 1,
    n_axis: np.ndarray | None = None,
) -> SweepResult:
    """(alpha, P0) surfaces for the combined and the continuous drive."""
    alphas = np.asarray(ALPHA_GRID if alpha_grid is None else list(alpha_grid), dtype=float)
    P0s = np.asarray(P0_GRID if P0_grid is None else list(P0_grid), dtype=float)
    if alphas.size == 0 or P0s.size == 0:
        raise InvalidArgumentError("sweep grids must be nonempty")
    base = base.with_(kind="colormap")
    configs = [base.with_(alpha=float(a), P0=float(p)) for a in alphas for p in P0s]
    res = _collect({"alpha": alphas, "P0": P0s}, _map(sweep_point, configs, jobs), base)
    res.regridded = regrid_by_occupation(res, n_axis)
    return res


def regrid_by_occupation(res: SweepResult, n_axis: np.ndarray | None = None) -> dict:
    """Resample each alpha row of both surfaces onto a common occupation axis.

    Outside the occupation range reached by a row the value is NaN.
    """
    if n_axis is None:
        lo = max(min(np.nanmin(res.n_ts), np.nanmin(res.n0)), 1e-6)
        hi = max(np.nanmax(res.n_ts), np.nanmax(res.n0))
        n_axis = np.geomspace(lo, hi, 40)
    n_axis = np.asarray(n_axis, dtype=float)

    def resample(n_vals, g_vals):
        out = np.full((n_vals.shape[0], n_axis.size), np.nan)
        for i in range(n_vals.shape[0]):
            order = np.argsort(n_vals[i])
            x, y = n_vals[i][order], g_vals[i][order]
            ok = np.isfinite(x) & np.isfinite(y)
            x, y = x[ok], y[ok]
            if x.size < 2:
                continue
            inside = (n_axis >= x[0]) & (n_axis <= x[-1])
            out[i, inside] = np.interp(n_axis[inside], x, y)
        return out

    return {
        "n": n_axis,
        "combined": resample(res.n_ts, res.g2_ts),
        "continuous": resample(res.n0, res.g0),
    }


# --- Fig. 4 -------------------------------------------------------------------


def fig4_config(regime: Literal["weak", "strong"]) -> ScenarioConfig:
    if regime == "weak":
        return FIG2.with_(name="fig4-weak", kind="two-time")
    if regime == "strong":
        return FIG3.with_(name="fig4-strong", kind="two-time")
    raise InvalidArgumentError(f"unknown regime {regime!r}")


def run_two_time(config: ScenarioConfig) -> TwoTimeResult:
    """g2(t, t_s) for |t - t_s| <= half width, t_s the window minimum, plus the constant-drive baseline."""
    hw = config.two_time_half_width
    t_a, t_b = config.window()
    steps = int(round(hw / config.sample_dt))
    t_end = t_b + steps * config.sample_dt
    traj = run_scenario(config, store_states=(t_a - hw - 1e-9, t_end), t_end=t_end)
    t_s, _, _ = find_window_min(traj, (t_a, t_b))
    i_s = traj.index(t_s)
    t_grid = traj.t[max(0, i_s - steps) : i_s + steps + 1]
    res = g2_two_time(
        traj.state_at(t_s), config.params, traj.schedule, t_s, t_grid, history=traj, scenario=config.name
    )
    conv = conventional(config)
    res.baseline = g2_stationary(conv.state, config.params, config.P0, t_grid - t_s)
    res.baseline_g0 = conv.g0
    res.meta = {"dim": config.dim, "n_ts": float(traj.n[i_s]), "n0": conv.n0}
    return res


def run_fig4(regime: Literal["weak", "strong"] = "strong") -> TwoTimeResult:
    return run_two_time(fig4_config(regime))


def max_window_ratio(res: TwoTimeResult, width: float = 0.2, half_range: float = 1.0) -> float:
    """Largest max/min ratio of g2(t, t_s) over sliding windows inside |t - t_s| <= half_range."""
    tau = res.delay
    sel = np.abs(tau) <= half_range + 1e-9
    tau, g = tau[sel], res.g2[sel]
    dt = tau[1] - tau[0]
    w = max(1, int(round(width / dt)))
    worst = 1.0
    for i in range(len(g) - w):
        seg = g[i : i + w + 1]
        worst = max(worst, float(np.max(seg) / np.min(seg)))
    return worst


# --- analytic checks ------------------------------------------------------------


@dataclass
class CycleReport:
    """Integral of f over one settled period and the post-pulse reconstruction of g2."""

    period_index: int
    g0: float
    g2_pre_pulse: float
    g2_post_pulse: float
    integral: float
    normalized_residual: float
    end_error: float
    reconstruction_error: float
    literal_reconstruction_error: float
    cumulative_changes_sign: bool
    times: np.ndarray
    cumulative: np.ndarray

    @property
    def pulse_jump(self) -> float:
        return self.g2_post_pulse - self.g2_pre_pulse

    def passed(self, integral_tol=1e-3, end_tol=1e-4, reconstruction_tol=1e-3) -> bool:
        return (
            self.normalized_residual < integral_tol
            and self.end_error < end_tol
            and self.reconstruction_error < reconstruction_tol
        )


def check_cycle_integral(traj: dyn.Trajectory, period_index: int, g0: float | None = None) -> CycleReport:
    """Integrate f over the period [mT, (m+1)T] of a settled trajectory.

    The stored sample at a pulse is post-pulse, so the period uses the
    post-pulse value at its start and the pre-pulse value at its end; both
    are one-sided limits of the smooth inter-pulse solution.

    ``reconstruction_error`` compares g2(t) with g2(mT+) + 4 P0 int_mT^t f,
    i.e. it includes the jump of g2 across the delta pulse itself.
    ``literal_reconstruction_error`` uses g0 in place of g2(mT+) and is
    reported only.
    """
    T = traj.schedule.period
    if not math.isfinite(T):
        raise InvalidArgumentError("trajectory has no pulse period")
    P0 = complex(traj.schedule.P0)
    if P0.imag != 0:
        raise InvalidArgumentError("cycle check needs a real continuous drive")
    P0 = P0.real
    t_a, t_b = period_index * T, (period_index + 1) * T
    i_a, i_b = traj.index(t_a), traj.index(t_b)
    if g0 is None:
        g0 = g2_equal(dyn.steady_state_direct(FockSpace(traj.dim), traj.params, P0))

    pre_a = traj.pre_pulse(t_a)
    g2_pre = pre_a.g2 if pre_a is not None else traj.g2[i_a]
    if not abs(g2_pre - g0) <= 1e-3:  # NaN (empty mode) also counts as unsettled
        raise NotSettledError(f"g2 before the pulse at t = {t_a} is {g2_pre:.6g}, steady value {g0:.6g}")

    t = traj.t[i_a : i_b + 1].copy()
    g2 = traj.g2[i_a : i_b + 1].copy()
    f = traj.f[i_a : i_b + 1].copy()
    pre_b = traj.pre_pulse(t_b)
    if pre_b is not None:
        g2[-1], f[-1] = pre_b.g2, pre_b.f

    cum = cumulative_simpson(f, x=t, initial=0.0)
    integral = float(cum[-1])
    fmax = float(np.max(np.abs(f)))
    norm_resid = abs(integral) / (fmax * T) if fmax > 0 else abs(integral)
    recon = g2[0] + 4 * P0 * cum
    literal = g0 + 4 * P0 * cum
    tiny = 1e-12 * max(1.0, fmax)
    return CycleReport(
        period_index=period_index,
        g0=float(g0),
        g2_pre_pulse=float(g2_pre),
        g2_post_pulse=float(g2[0]),
        integral=integral,
        normalized_residual=float(norm_resid),
        end_error=float(abs(g2[-1] - g0)),
        reconstruction_error=float(np.max(np.abs(g2 - recon))),
        literal_reconstruction_error=float(np.max(np.abs(g2 - literal))),
        cumulative_changes_sign=bool(np.any(cum > tiny) and np.any(cum < -tiny)),
        times=t,
        cumulative=cum,
    )


def linear_mode_check(config: ScenarioConfig, rtol=dyn.RTOL, atol=dyn.ATOL) -> tuple[float, float]:
    """Rerun a scenario with alpha = 0: (max |g2 - 1| over defined samples, min purity).

    States are streamed, not stored, so the purity of every sample is cheap.
    """
    sc = config.with_(alpha=0.0)
    space = FockSpace(sc.dim)
    times = dyn.sample_grid(sc.t_end, sc.sample_dt)
    dev, purity = 0.0, 1.0
    steps = dyn.propagate(vacuum(space), space, sc.params, sc.schedule(), 0.0, times[1:], rtol=rtol, atol=atol)
    for _, rho, _ in steps:
        g2 = g2_equal(rho)
        if np.isfinite(g2):
            dev = max(dev, abs(g2 - 1.0))
        purity = min(purity, float(np.vdot(rho, rho).real))
    return dev, purity


def periodicity_deviation(traj: dyn.Trajectory, first: int, second: int) -> float:
    """Max |g2(t) - g2(t + (second-first) T)| over period ``first``."""
    T = traj.schedule.period
    i_a, i_b = traj.index(first * T), traj.index((first + 1) * T)
    shift = traj.index(second * T) - i_a
    # skip the closing sample: it is post-pulse in one period and pre-pulse in the other
    a = traj.g2[i_a:i_b]
    b = traj.g2[i_a + shift : i_b + shift]
    return float(np.nanmax(np.abs(a - b)))


@dataclass
class RobustnessReport:
    sigmas: np.ndarray
    min_g2: np.ndarray
    t_s: np.ndarray
    delta_min_g2: float
    g0: float

    def relative_to_delta(self) -> np.ndarray:
        return np.abs(self.min_g2 - self.delta_min_g2) / self.delta_min_g2

    def passed(self, sigma_max: float = 0.3) -> bool:
        return bool(np.all(self.min_g2[self.sigmas <= sigma_max] < self.g0))


def gaussian_window(config: ScenarioConfig) -> tuple[float, float]:
    """Analysis window shifted back to the leading edge of a finite pulse."""
    t_a, t_b = config.window()
    if config.shape != "gaussian":
        return t_a, t_b
    lead = min(dyn.GAUSSIAN_CUTOFF * config.sigma, config.T / 2)
    return t_a - lead, t_b - lead


def gaussian_robustness(sigma_grid: Iterable[float], base=FIG1, jobs: int | None = 1) -> RobustnessReport:
    """Replace the delta pulses of a scenario by area-matched gaussians of width sigma."""
    sigmas = np.asarray(list(sigma_grid), dtype=float)
    if sigmas.size == 0 or np.any(sigmas <= 0):
        raise InvalidArgumentError("sigma grid must be nonempty and positive")
    base = base.with_(method="rk")
    configs = [base.with_(shape="gaussian", sigma=float(s), name=f"{base.name}-gauss{s:g}") for s in sigmas]
    points = _map(_gaussian_point, configs, jobs)
    delta = run_scenario(base)
    _, delta_min, _ = find_window_min(delta, base.window())
    return RobustnessReport(
        sigmas=sigmas,
        min_g2=np.array([p[1] for p in points]),
        t_s=np.array([p[0] for p in points]),
        delta_min_g2=delta_min,
        g0=conventional(base).g0,
    )


def _gaussian_point(config: ScenarioConfig) -> tuple[float, float]:
    traj = run_scenario(config)
    t_s, g2_min, _ = find_window_min(traj, gaussian_window(config))
    return t_s, g2_min


# --- truncation control -------------------------------------------------------


class ScenarioProbe:
    """Callable dim -> key scalars of a scenario, for :func:`dynamics.convergence_check`.

    Picklable, so ladders can run in a process pool.
    """

    def __init__(self, config: ScenarioConfig, two_time_delays: Sequence[float] = ()):
        self.config = config
        self.delays = tuple(two_time_delays)

    def __call__(self, dim: int) -> dict:
        cfg = self.config.with_(dim=dim)
        if self.delays:
            res = run_two_time(cfg)
            out = {f"g2_tau{tau:+g}": res.at_delay(tau) for tau in self.delays}
            out["g2_ts"] = res.g2_equal_ts
            out["truncation_warning"] = False
            return out
        traj = run_scenario(cfg)
        _, g2_min, n_min = find_window_min(traj, cfg.window())
        return {"g2_min": g2_min, "n_at_min": n_min, "truncation_warning": traj.truncation_warning}


def default_ladder(dim: int) -> list[int]:
    return [dim - 10, dim - 5, dim]


def convergence_ladder(config: ScenarioConfig, dims: Sequence[int] | None = None, two_time_delays=()):
    return dyn.convergence_check(ScenarioProbe(config, two_time_delays), dims or default_ladder(config.dim))
