"""Two-time second-order correlations through the quantum regression theorem.

For t >= t_s the numerator of g2(t, t_s) is Tr[a†a Lambda(t, t_s)(a rho(t_s) a†)],
obtained by propagating the unnormalised operator a rho a† with the physical
propagator. For t < t_s we use g2(t, t_s) = g2(t_s, t) and evaluate the
correlator anchored at the earlier time by carrying a†a backwards from t_s
with the Heisenberg (adjoint) generator, which needs rho(t) along the way and
therefore a trajectory with stored states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .errors import HorizonError
from .fock_core import FockSpace
from .observables import N_FLOOR, g2_equal, moments


@dataclass
class TwoTimeResult:
    t_s: float
    t: np.ndarray
    g2: np.ndarray
    g2_equal_ts: float
    scenario: str = ""
    baseline: np.ndarray | None = None
    baseline_g0: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def delay(self) -> np.ndarray:
        return self.t - self.t_s

    def at_delay(self, tau: float, which: str = "g2") -> float:
        arr = self.g2 if which == "g2" else self.baseline
        i = int(np.argmin(np.abs(self.delay - tau)))
        return float(arr[i])


def _forward(rho_ts, space, params, schedule, t_s, times, rtol, atol):
    """g2(t, t_s) for t >= t_s by regression on the stack [rho, a rho a†]."""
    n_ts = float(moments(rho_ts)[0])
    stack = np.stack([rho_ts, space.a @ rho_ts @ space.adag])
    out = {}
    for t, y, _ in dyn.propagate(stack, space, params, schedule, t_s, times, rtol=rtol, atol=atol):
        n_t = float(moments(y[0])[0])
        num = float(moments(y[1])[0])  # Tr[a†a X]
        out[t] = num / (n_t * n_ts) if n_t * n_ts > N_FLOOR**2 else np.nan
    return out


def _backward(history, space, params, schedule, t_s, times, rtol, atol):
    """g2(t, t_s) for t < t_s through the adjoint propagation of a†a."""
    n_ts = float(moments(history.state_at(t_s))[0])
    out = {}
    for t, O in dyn.propagate_adjoint(space.number, space, params, schedule, t_s, times, rtol=rtol, atol=atol):
        rho_t = history.state_at(t)
        n_t = float(moments(rho_t)[0])
        # Tr[O(t) a rho(t) a†]
        num = np.real(np.einsum("ij,ji->", O, space.a @ rho_t @ space.adag))
        out[t] = num / (n_t * n_ts) if n_t * n_ts > N_FLOOR**2 else np.nan
    return out


def g2_two_time(
    rho_ts: np.ndarray,
    params: dyn.ModeParams,
    schedule: dyn.DriveSchedule,
    t_s: float,
    t_grid,
    *,
    history: dyn.Trajectory | None = None,
    horizon: float | None = None,
    scenario: str = "",
    rtol: float = dyn.RTOL,
    atol: float = dyn.ATOL,
) -> TwoTimeResult:
    """g2(t, t_s) on ``t_grid`` with reference time ``t_s``.

    Grid points before ``t_s`` require ``history``, a trajectory that
    stored its states at those times. ``horizon`` optionally bounds how far
    beyond ``t_s`` the grid may reach.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    rho_ts = np.asarray(rho_ts, dtype=complex)
    space = FockSpace(rho_ts.shape[0])
    eps = 1e-9 * max(1.0, abs(t_s))
    later = sorted({float(t) for t in t_grid if t >= t_s - eps} | {float(t_s)})
    later = [t_s if abs(t - t_s) <= eps else t for t in later]
    earlier = sorted(float(t) for t in t_grid if t < t_s - eps)
    if horizon is not None and later[-1] > t_s + horizon + eps:
        raise HorizonError(f"grid reaches t = {later[-1]}, beyond t_s + horizon = {t_s + horizon}")
    if earlier:
        if history is None or history.states is None:
            raise HorizonError("points before t_s need a history trajectory with stored states")
        lo = history.state_times[0]
        if earlier[0] < lo - eps:
            raise HorizonError(f"grid starts at {earlier[0]}, stored states begin at {lo}")

    values = _forward(rho_ts, space, params, schedule, t_s, later, rtol, atol)
    if earlier:
        values.update(_backward(history, space, params, schedule, t_s, earlier, rtol, atol))

    # the propagators merge requested times closer than ~1e-9, so match by proximity
    keys = np.array(sorted(values))
    vals = np.array([values[k] for k in keys])

    def lookup(t):
        i = int(np.argmin(np.abs(keys - t)))
        if abs(keys[i] - t) > eps:
            raise KeyError(t)
        return vals[i]

    g2 = np.array([lookup(t) for t in t_grid])
    return TwoTimeResult(
        t_s=float(t_s),
        t=t_grid,
        g2=g2,
        g2_equal_ts=g2_equal(rho_ts),
        scenario=scenario,
    )


def g2_stationary(
    rho_ss: np.ndarray,
    params: dyn.ModeParams,
    P0: complex,
    delays,
    *,
    rtol: float = dyn.RTOL,
    atol: float = dyn.ATOL,
) -> np.ndarray:
    """g2(tau) of a stationary state under constant drive, symmetric in tau."""
    delays = np.asarray(delays, dtype=float)
    taus = sorted({abs(float(x)) for x in delays} | {0.0})
    schedule = dyn.DriveSchedule(P0)
    res = g2_two_time(rho_ss, params, schedule, 0.0, taus, rtol=rtol, atol=atol)
    return np.interp(np.abs(delays), res.t, res.g2)
