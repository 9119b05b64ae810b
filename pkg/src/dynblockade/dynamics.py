"""Lindblad evolution of the driven Kerr mode.

The state is evolved in the Schrödinger picture,

    d rho/dt = -i[H, rho] + a rho a† - (a†a rho + rho a†a)/2,
    H = E a†a + alpha a†a†aa + P(t) a† + P*(t) a,

with hbar = gamma = 1. Delta pulses of area P1 act instantaneously as the
displacement D(-i P1); Gaussian pulses enter P(t) directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Literal, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse

from . import observables as obs
from .errors import (
    ConvergenceFailure,
    DegenerateSteadyStateError,
    IntegratorFailure,
    InvalidArgumentError,
    TruncationWarning,
)
from .fock_core import FockSpace, displacement, top_population, vacuum
from .integrator import DormandPrince, StepSizeUnderflow

RTOL = 1e-9
ATOL = 1e-11
HEADROOM = 1e-8  # allowed population in the top two Fock levels
GAUSSIAN_CUTOFF = 6.0  # in units of sigma

TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10
# explicit RK steps are capped at this multiple of 1/||L||: beyond the stability
# region, modes below the error tolerance (e.g. the anti-Hermitian part) grow unchecked
STABILITY_RADIUS = 2.5
POSITIVITY_TOL = 1e-7


def _finite(x) -> bool:
    x = complex(x)
    return math.isfinite(x.real) and math.isfinite(x.imag)


@dataclass(frozen=True)
class ModeParams:
    """Mode energy E (detuning from the laser) and Kerr strength alpha, in units of gamma."""

    E: float
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.E) and math.isfinite(self.alpha)):
            raise InvalidArgumentError("mode parameters must be finite")
        if self.alpha < 0:
            raise InvalidArgumentError(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class PulseEvent:
    """One pulse. ``amplitude`` is the pulse area, i.e. the time integral of P(t)."""

    time: float
    amplitude: complex
    shape: Literal["delta", "gaussian"] = "delta"
    sigma: float | None = None

    def __post_init__(self):
        if not _finite(self.amplitude) or not math.isfinite(self.time):
            raise InvalidArgumentError("pulse time and amplitude must be finite")
        if self.shape == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise InvalidArgumentError("gaussian pulses need sigma > 0")
        elif self.shape != "delta":
            raise InvalidArgumentError(f"unknown pulse shape {self.shape!r}")

    @property
    def support(self) -> tuple[float, float]:
        if self.shape == "delta":
            return (self.time, self.time)
        w = GAUSSIAN_CUTOFF * self.sigma
        return (self.time - w, self.time + w)

    def envelope(self, t: float) -> complex:
        """Instantaneous drive contributed by a gaussian pulse (zero for delta pulses)."""
        if self.shape == "delta":
            return 0.0
        x = (t - self.time) / self.sigma
        if abs(x) > GAUSSIAN_CUTOFF:
            return 0.0
        return self.amplitude * math.exp(-0.5 * x * x) / (self.sigma * math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class DriveSchedule:
    """Continuous amplitude P0 plus a time-ordered train of pulses."""

    P0: complex
    pulses: tuple[PulseEvent, ...] = ()
    period: float = math.inf

    def __post_init__(self):
        if not _finite(self.P0):
            raise InvalidArgumentError("P0 must be finite")
        if not self.period > 0:
            raise InvalidArgumentError("period must be > 0")
        times = [p.time for p in self.pulses]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidArgumentError("pulse times must be strictly increasing")
        object.__setattr__(self, "pulses", tuple(self.pulses))

    @classmethod
    def periodic(
        cls,
        P0: complex,
        P1: complex,
        period: float,
        count: int,
        *,
        first: int = 1,
        shape: str = "delta",
        sigma: float | None = None,
    ) -> "DriveSchedule":
        """Pulses of area P1 at t = m*period for m = first, ..., first+count-1.

        A zero P1 gives a purely continuous schedule.
        """
        if count < 0:
            raise InvalidArgumentError("pulse count must be >= 0")
        pulses = ()
        if P1 != 0:
            pulses = tuple(PulseEvent(m * period, P1, shape, sigma) for m in range(first, first + count))
        return cls(P0, pulses, period)

    @property
    def pulse_count(self) -> int:
        return len(self.pulses)

    @property
    def is_real(self) -> bool:
        return complex(self.P0).imag == 0 and all(complex(p.amplitude).imag == 0 for p in self.pulses)

    @property
    def delta_pulses(self) -> tuple[PulseEvent, ...]:
        return tuple(p for p in self.pulses if p.shape == "delta")

    @property
    def gaussian_pulses(self) -> tuple[PulseEvent, ...]:
        return tuple(p for p in self.pulses if p.shape == "gaussian")

    def drive(self, t: float) -> complex:
        """P(t) excluding the singular delta terms."""
        return complex(self.P0) + sum(p.envelope(t) for p in self.gaussian_pulses)

    def without_pulses(self) -> "DriveSchedule":
        return replace(self, pulses=())


# --- generators ---------------------------------------------------------------


def hamiltonian(space: FockSpace, params: ModeParams, P: complex) -> np.ndarray:
    if not _finite(P):
        raise InvalidArgumentError("drive amplitude must be finite")
    return (
        params.E * space.number
        + params.alpha * space.kerr
        + P * space.adag
        + np.conj(P) * space.a
    )


def _heff(space: FockSpace, H: np.ndarray) -> np.ndarray:
    """Non-Hermitian part -iH - a†a/2 of the generator."""
    return -1j * H - 0.5 * space.number


def lindblad_rhs(rho: np.ndarray, H: np.ndarray, space: FockSpace | None = None) -> np.ndarray:
    """Apply the Lindblad generator to rho (or to a stack of matrices)."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != H.shape or H.shape[0] != H.shape[1]:
        raise InvalidArgumentError(f"shape mismatch: state {rho.shape} vs Hamiltonian {H.shape}")
    space = space or FockSpace(H.shape[0])
    K = _heff(space, H)
    return K @ rho + rho @ K.conj().T + space.a @ rho @ space.adag


def adjoint_rhs(op: np.ndarray, H: np.ndarray, space: FockSpace | None = None) -> np.ndarray:
    """Heisenberg-picture generator i[H, O] + a†O a - (a†a O + O a†a)/2."""
    space = space or FockSpace(H.shape[0])
    K = _heff(space, H)
    return K.conj().T @ op + op @ K + space.adag @ op @ space.a


def _superop(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Matrix of X -> left @ X @ right on row-major vec(X)."""
    return np.kron(left, right.T)


def liouvillian(space: FockSpace, params: ModeParams, P: complex, adjoint: bool = False) -> np.ndarray:
    """Dense d²×d² generator acting on row-major vec(rho).

    With ``adjoint=True`` this is the Heisenberg-picture generator acting
    on vec(O), so that Tr[O L(rho)] = Tr[L†(O) rho].
    """
    K = _heff(space, hamiltonian(space, params, P))
    eye = space.identity
    if adjoint:
        return _superop(K.conj().T, eye) + _superop(eye, K) + _superop(space.adag, space.a)
    return _superop(K, eye) + _superop(eye, K.conj().T) + _superop(space.a, space.adag)


# --- states -------------------------------------------------------------------


def density_matrix_violation(rho: np.ndarray, check_positivity: bool = True) -> str | None:
    """Describe the first broken density-matrix invariant, or return None."""
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    if not herm < HERMITIAN_TOL:
        return f"Hermiticity lost: max|rho - rho†| = {herm:.3g}"
    tr = abs(np.trace(rho) - 1)
    if not tr < TRACE_TOL:
        return f"trace drifted by {tr:.3g}"
    if check_positivity:
        lam = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        if lam < -POSITIVITY_TOL:
            return f"negative eigenvalue {lam:.3g}"
    return None


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = rho - sigma
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def apply_delta_pulse(rho: np.ndarray, P1: complex, space: FockSpace | None = None) -> np.ndarray:
    """rho -> D rho D† with D = D(-i P1), the exact effect of a delta kick of area P1.

    Warns with TruncationWarning when the kicked state crowds the top of
    the truncated space. A zero amplitude returns ``rho`` itself.
    """
    if P1 == 0:
        return rho
    space = space or FockSpace(rho.shape[-1])
    D = displacement(space, -1j * complex(P1))
    out = D @ rho @ D.conj().T
    if out.ndim == 2:
        top = top_population(out)
        if top >= HEADROOM:
            warnings.warn(
                f"top-level population {top:.2e} after pulse exceeds {HEADROOM:.0e}; increase dim",
                TruncationWarning,
                stacklevel=2,
            )
    return out


# --- time stepping ------------------------------------------------------------


def _merge_times(*groups: Iterable[float], tol: float = 1e-9) -> list[float]:
    """Sorted union with near-duplicates (|dt| < tol) collapsed onto the first."""
    allt = sorted(float(t) for g in groups for t in g)
    out: list[float] = []
    for t in allt:
        if out and abs(t - out[-1]) < tol * max(1.0, abs(t)):
            continue
        out.append(t)
    return out


def _snap(t: float, grid: Sequence[float], tol: float = 1e-9) -> float:
    """Return the grid point equal to t within tolerance, else t."""
    if len(grid) == 0:
        return t
    i = int(np.searchsorted(grid, t))
    for j in (i - 1, i):
        if 0 <= j < len(grid) and abs(grid[j] - t) < tol * max(1.0, abs(t)):
            return float(grid[j])
    return t


def _to_vec(x: np.ndarray) -> np.ndarray:
    """(d, d) or (m, d, d) matrices -> (d², m) column stack."""
    d = x.shape[-1]
    return np.ascontiguousarray(x.reshape(-1, d * d).T)


def _from_vec(y: np.ndarray, single: bool) -> np.ndarray:
    d = int(round(math.sqrt(y.shape[0])))
    out = y.T.reshape(-1, d, d)
    return out[0] if single else out


class _Generator:
    """Sparse (adjoint) Liouvillian with the gaussian part of the drive split off.

    ``time_sign = -1`` means the integration variable is s = -t, used for
    backward Heisenberg runs.
    """

    def __init__(self, space, params, schedule, adjoint=False):
        self.space, self.params, self.schedule = space, params, schedule
        self.adjoint = adjoint
        self.time_sign = -1.0 if adjoint else 1.0
        self.P0 = complex(schedule.P0)
        self.dense0 = liouvillian(space, params, self.P0, adjoint=adjoint)
        self.L0 = scipy.sparse.csr_matrix(self.dense0)
        self.time_dependent = bool(schedule.gaussian_pulses)
        if self.time_dependent:
            # generator is affine in P: L(P) = L(P0) + (P - P0) Lp + conj(P - P0) Lm
            zero = ModeParams(0.0, 0.0)
            base = liouvillian(space, zero, 0.0, adjoint=adjoint)
            Lp = liouvillian(space, zero, 1.0, adjoint=adjoint) - base
            Li = liouvillian(space, zero, 1j, adjoint=adjoint) - base
            # Lp = A + B, Li = i A - i B  ->  A (coefficient of P), B (of conj P)
            A = 0.5 * (Lp - 1j * Li)
            B = 0.5 * (Lp + 1j * Li)
            self.LA = scipy.sparse.csr_matrix(A)
            self.LB = scipy.sparse.csr_matrix(B)
        self.stable_step = STABILITY_RADIUS / self._norm_bound()
        self._expm_cache: dict[float, np.ndarray] = {}

    def _norm_bound(self) -> float:
        """Row-sum (infinity norm) bound on the spectral radius of the generator."""

        def rowsum(M):
            return float(np.max(np.abs(M).sum(axis=1)))

        bound = rowsum(self.L0)
        if self.time_dependent:
            peak = max(abs(p.amplitude) / (p.sigma * math.sqrt(2 * math.pi)) for p in self.schedule.gaussian_pulses)
            bound += peak * (rowsum(self.LA) + rowsum(self.LB))
        return max(bound, 1e-12)

    def rhs(self, s, y):
        out = self.L0 @ y
        if self.time_dependent:
            dP = self.schedule.drive(self.time_sign * s) - self.P0
            if dP != 0:
                out = out + dP * (self.LA @ y) + np.conj(dP) * (self.LB @ y)
        return out

    def propagator(self, dt: float) -> np.ndarray:
        key = round(dt, 12)
        U = self._expm_cache.get(key)
        if U is None:
            U = scipy.linalg.expm(self.dense0 * dt)
            self._expm_cache[key] = U
        return U

    def max_step(self, s0: float, s1: float) -> float:
        t0, t1 = sorted((self.time_sign * s0, self.time_sign * s1))
        for p in self.schedule.gaussian_pulses:
            lo, hi = p.support
            if t0 < hi and t1 > lo:
                return min(p.sigma / 2, self.stable_step)
        return self.stable_step

    def breakpoints(self) -> list[float]:
        out = []
        for p in self.schedule.gaussian_pulses:
            lo, hi = p.support
            out.extend(self.time_sign * t for t in (lo, p.time, hi))
        return out


def _march(
    y: np.ndarray,
    gen: _Generator,
    s0: float,
    samples: Sequence[float],
    events: Mapping[float, Callable[[np.ndarray], np.ndarray]],
    *,
    sample_before_event: bool,
    method: str,
    rtol: float,
    atol: float,
    h0: float = 1e-3,
):
    """Step across samples, gaussian breakpoints and jump events (all in s).

    At a time that is both a sample and an event the sample receives the
    pre-event state when ``sample_before_event`` is set, else the
    post-event one; the other is passed along as the third tuple item.
    """
    if method == "propagator" and gen.time_dependent:
        raise InvalidArgumentError("the exact propagator needs a piecewise-constant drive; use method='rk'")
    if method not in ("rk", "propagator"):
        raise InvalidArgumentError(f"unknown method {method!r}")
    stepper = DormandPrince(gen.rhs, rtol=rtol, atol=atol, h0=h0) if method == "rk" else None

    sample_set = set(samples)
    s_last = max(samples) if len(samples) else s0
    key = _merge_times([s0], samples, events)
    # breakpoints only shape the stepping and must not shadow a key time
    bps = [b for b in gen.breakpoints() if s0 < b < s_last and _snap(b, key) == b]
    s = s0
    for p in sorted(set(key).union(bps)):
        if p > s:
            if stepper is None:
                y = gen.propagator(p - s) @ y
            else:
                try:
                    y = stepper.advance(y, s, p, max_step=gen.max_step(s, p))
                except StepSizeUnderflow as exc:
                    raise IntegratorFailure(str(exc), gen.time_sign * s) from exc
            s = p
        pre = None
        if p in events:
            pre = y
            y = events[p](y)
            if stepper is not None:
                stepper.reset_fsal()
        if p in sample_set:
            if pre is not None and sample_before_event:
                yield p, pre, y
            else:
                yield p, y, pre


def _sandwich(left: np.ndarray, right: np.ndarray):
    def apply(y):
        d = left.shape[0]
        x = y.T.reshape(-1, d, d)
        return _to_vec(left @ x @ right)

    return apply


def propagate(
    y0: np.ndarray,
    space: FockSpace,
    params: ModeParams,
    schedule: DriveSchedule,
    t0: float,
    times: Sequence[float],
    *,
    pulse_at_start: bool = False,
    sample_before_event: bool = False,
    method: str = "rk",
    rtol: float = RTOL,
    atol: float = ATOL,
):
    """Forward propagation of a state or a stack of (unnormalised) matrices.

    Yields ``(t, y, other)`` at each requested time. If a delta pulse fires
    at exactly ``t``, ``y`` is the post-pulse value and ``other`` the
    pre-pulse one (swapped with ``sample_before_event``); otherwise
    ``other`` is None. Pulses act as ``D y D†`` on every matrix of the
    stack, so regression operators see the same map as the physical state.
    """
    single = np.ndim(y0) == 2
    times = sorted(float(t) for t in times)
    t_end = times[-1] if times else t0
    events = {}
    for p in schedule.delta_pulses:
        tp = _snap(p.time, times)
        if t0 < tp <= t_end or (pulse_at_start and tp == t0):
            D = displacement(space, -1j * complex(p.amplitude))
            events[tp] = _sandwich(D, D.conj().T)
    gen = _Generator(space, params, schedule)
    for t, y, other in _march(
        _to_vec(np.asarray(y0, dtype=complex)), gen, t0, times, events,
        sample_before_event=sample_before_event, method=method, rtol=rtol, atol=atol,
    ):
        yield t, _from_vec(y, single), (None if other is None else _from_vec(other, single))


def propagate_adjoint(
    op_final: np.ndarray,
    space: FockSpace,
    params: ModeParams,
    schedule: DriveSchedule,
    t_final: float,
    times: Sequence[float],
    *,
    method: str = "rk",
    rtol: float = RTOL,
    atol: float = ATOL,
):
    """Backward Heisenberg propagation of an observable from ``t_final``.

    Yields ``(t, O(t))`` for each requested ``t <= t_final`` in decreasing
    order, with ``Tr[O(t) X] = Tr[O_final Lambda(t_final, t) X]`` where
    Lambda is the physical propagator. States at pulse times are stored
    post-pulse, so a pulse at ``t_final`` belongs to Lambda and a pulse at
    the requested ``t`` does not.
    """
    single = np.ndim(op_final) == 2
    s_grid = sorted(-float(t) for t in times)
    s0 = -float(t_final)
    s_end = s_grid[-1] if s_grid else s0
    events = {}
    for p in schedule.delta_pulses:
        sp = _snap(-p.time, s_grid)
        if s0 <= sp < s_end:
            D = displacement(space, -1j * complex(p.amplitude))
            events[sp] = _sandwich(D.conj().T, D)
    gen = _Generator(space, params, schedule, adjoint=True)
    for s, y, _ in _march(
        _to_vec(np.asarray(op_final, dtype=complex)), gen, s0, s_grid, events,
        sample_before_event=True, method=method, rtol=rtol, atol=atol,
    ):
        yield -s, _from_vec(y, single)


def advance_state(
    rho: np.ndarray,
    params: ModeParams,
    schedule: DriveSchedule,
    t0: float,
    t1: float,
    *,
    pulse_at_start: bool = True,
    method: str = "rk",
    rtol: float = RTOL,
    atol: float = ATOL,
) -> np.ndarray:
    """State just before t1 (a pulse exactly at t1 is not applied)."""
    space = FockSpace(np.shape(rho)[-1])
    for _, y, _ in propagate(
        rho, space, params, schedule, t0, [t1], pulse_at_start=pulse_at_start,
        sample_before_event=True, method=method, rtol=rtol, atol=atol,
    ):
        return y
    return rho


@dataclass
class Trajectory:
    """Observables sampled on a uniform grid.

    At a delta pulse the stored sample is the post-pulse state; pre-pulse
    observables are kept in ``pulse_records`` as (pre, post) pairs.
    """

    t: np.ndarray
    n: np.ndarray
    psi: np.ndarray
    C: np.ndarray
    g2: np.ndarray
    f: np.ndarray
    drive: np.ndarray
    pulse_flag: np.ndarray
    pulse_records: list[tuple[obs.ObservableRecord, obs.ObservableRecord]]
    params: ModeParams
    schedule: DriveSchedule
    dim: int
    final_state: np.ndarray
    max_top_population: float
    states: np.ndarray | None = None
    state_times: np.ndarray | None = None
    tolerances: dict = field(default_factory=dict)

    @property
    def truncation_warning(self) -> bool:
        return self.max_top_population >= HEADROOM

    @property
    def sample_dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def __len__(self):
        return len(self.t)

    @property
    def records(self) -> list[obs.ObservableRecord]:
        return [
            obs.ObservableRecord(float(t), float(n), complex(p), complex(c), float(g), float(f))
            for t, n, p, c, g, f in zip(self.t, self.n, self.psi, self.C, self.g2, self.f)
        ]

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"t = {t} is not a sample time")
        return i

    def pre_pulse(self, t: float) -> obs.ObservableRecord | None:
        for pre, _ in self.pulse_records:
            if abs(pre.t - t) < 1e-9 * max(1.0, abs(t)):
                return pre
        return None

    def state_at(self, t: float) -> np.ndarray:
        if self.states is None:
            raise KeyError("trajectory was run without stored states")
        i = int(np.argmin(np.abs(self.state_times - t)))
        if abs(self.state_times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no stored state at t = {t}")
        return self.states[i]


def sample_grid(t_end: float, sample_dt: float, t0: float = 0.0) -> np.ndarray:
    n = int(round((t_end - t0) / sample_dt))
    if abs(n * sample_dt - (t_end - t0)) > 1e-9 * max(1.0, abs(t_end)):
        raise InvalidArgumentError("t_end - t0 must be an integer multiple of sample_dt")
    return t0 + sample_dt * np.arange(n + 1)


def evolve(
    rho0: np.ndarray,
    params: ModeParams,
    schedule: DriveSchedule,
    t_end: float,
    sample_dt: float,
    *,
    t0: float = 0.0,
    method: str = "rk",
    rtol: float = RTOL,
    atol: float = ATOL,
    store_states: bool | tuple[float, float] = False,
    positivity_every: int = 50,
) -> Trajectory:
    """Integrate the master equation and record observables on a uniform grid.

    A delta pulse scheduled at ``t0`` acts on ``rho0`` before the first
    sample. ``method="propagator"`` replaces the adaptive stepper by exact
    exponentials of the generator (delta pulses only). ``store_states``
    keeps every sampled density matrix, or those inside a ``(t_a, t_b)``
    window.
    """
    if not sample_dt > 0 or not t_end > t0:
        raise InvalidArgumentError("need sample_dt > 0 and t_end > t0")
    rho0 = np.asarray(rho0, dtype=complex)
    space = FockSpace(rho0.shape[0])
    if (msg := density_matrix_violation(rho0)) is not None:
        raise InvalidArgumentError(f"initial state invalid: {msg}")
    grid = sample_grid(t_end, sample_dt, t0)
    n_s = len(grid)
    W = obs.moment_functionals(space.dim)
    raw = np.empty((n_s, W.shape[0]), dtype=complex)
    pulse_flag = np.zeros(n_s, dtype=bool)
    pulse_records = []
    kept, kept_t = [], []
    top = 0.0
    diag_idx = np.arange(space.dim) * (space.dim + 1)

    def keep(t):
        if store_states is True:
            return True
        if store_states:
            return store_states[0] - 1e-9 <= t <= store_states[1] + 1e-9
        return False

    rho = rho0
    steps = propagate(
        rho0, space, params, schedule, t0, grid, pulse_at_start=True, method=method, rtol=rtol, atol=atol
    )
    for i, (t, rho, pre) in enumerate(steps):
        if pre is not None:
            pulse_records.append((obs.record(pre, t), obs.record(rho, t)))
            pulse_flag[i] = True
        v = rho.reshape(-1)
        raw[i] = W @ v
        top = max(top, float(v[diag_idx[-2:]].real.sum()))
        msg = density_matrix_violation(rho, check_positivity=(i % positivity_every == 0 or i == n_s - 1))
        if msg is not None:
            raise IntegratorFailure(msg, t)
        if keep(t):
            kept.append(rho)
            kept_t.append(t)

    if top >= HEADROOM:
        warnings.warn(
            f"top-level population reached {top:.2e} (dim={space.dim}); results may be truncation-limited",
            TruncationWarning,
            stacklevel=2,
        )
    cols = obs.columns_from_moments(raw)
    return Trajectory(
        t=grid,
        n=cols["n"],
        psi=cols["psi"],
        C=cols["C"],
        g2=cols["g2"],
        f=cols["f"],
        drive=np.array([schedule.drive(t) for t in grid]),
        pulse_flag=pulse_flag,
        pulse_records=pulse_records,
        params=params,
        schedule=schedule,
        dim=space.dim,
        final_state=rho,
        max_top_population=top,
        states=np.array(kept) if kept else None,
        state_times=np.array(kept_t) if kept else None,
        tolerances={"rtol": rtol, "atol": atol, "method": method},
    )


# --- steady states ------------------------------------------------------------


def steady_state_direct(space: FockSpace, params: ModeParams, P0: complex) -> np.ndarray:
    """Null vector of the Liouvillian with the trace condition replacing one row."""
    return null_space_state(liouvillian(space, params, P0), space.dim)


def null_space_state(L: np.ndarray, d: int) -> np.ndarray:
    """Unit-trace density matrix spanning the null space of a vectorised generator.

    Raises DegenerateSteadyStateError when the bordered system is singular,
    i.e. the null space is not one-dimensional.
    """
    L = np.array(L, dtype=complex)
    L[0, :] = 0.0
    L[0, np.arange(d) * (d + 1)] = 1.0
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            x = scipy.linalg.solve(L, b)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise DegenerateSteadyStateError(f"steady-state system is singular: {exc}") from exc
    rho = x.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    if (msg := density_matrix_violation(rho)) is not None:
        raise DegenerateSteadyStateError(f"steady-state solution is not a density matrix: {msg}")
    return rho


def steady_state_by_evolution(
    space: FockSpace,
    params: ModeParams,
    P0: complex,
    tol: float = 1e-9,
    *,
    sample_interval: float = 1.0,
    t_max: float = 2000.0,
    method: Literal["propagator", "rk"] = "propagator",
) -> np.ndarray:
    """Evolve from vacuum under constant drive until successive samples agree to ``tol``.

    ``method="propagator"`` steps with the exact one-interval semigroup
    ``expm(L * sample_interval)``; ``"rk"`` uses the adaptive integrator.
    """
    if not tol > 0:
        raise InvalidArgumentError("tol must be > 0")
    rho = vacuum(space)
    d = space.dim
    if method == "propagator":
        U = scipy.linalg.expm(liouvillian(space, params, P0) * sample_interval)

        def step(r):
            return (U @ r.reshape(-1)).reshape(d, d)
    elif method == "rk":
        H = hamiltonian(space, params, P0)
        stepper = DormandPrince(lambda t, y: lindblad_rhs(y, H, space), rtol=min(RTOL, tol * 1e-2), atol=ATOL * 1e-2)
        clock = [0.0]

        def step(r):
            out = stepper.advance(r, clock[0], clock[0] + sample_interval)
            clock[0] += sample_interval
            return out
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")

    t = 0.0
    while t < t_max:
        new = step(rho)
        t += sample_interval
        if trace_distance(new, rho) < tol:
            new = 0.5 * (new + new.conj().T)
            return new / np.trace(new).real
        rho = new
    raise ConvergenceFailure(f"no steady state within t = {t_max} at tol = {tol}")


# --- truncation control -------------------------------------------------------


@dataclass
class ConvergenceReport:
    dims: list[int]
    values: list[dict[str, float]]
    differences: list[dict[str, float]]
    tol: float
    truncation_warning: bool

    @property
    def passed(self) -> bool:
        if not self.differences:
            return False
        return all(v < self.tol for v in self.differences[-1].values())

    @property
    def monotone(self) -> bool:
        """Whether the largest difference shrinks along the ladder."""
        worst = [max(d.values()) for d in self.differences]
        return all(b <= a for a, b in zip(worst, worst[1:]))


def convergence_check(
    scenario: Callable[[int], Mapping[str, float]],
    dims: Sequence[int],
    tol: float = 1e-6,
) -> ConvergenceReport:
    """Rerun ``scenario(dim)`` along a ladder of dims and compare its scalars.

    ``scenario`` returns a mapping of key scalar outputs; a boolean entry
    ``truncation_warning`` is collected separately instead of differenced.
    """
    dims = list(dims)
    if len(dims) < 2:
        raise InvalidArgumentError("convergence ladder needs at least two dims")
    values, warn = [], False
    for d in dims:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            out = dict(scenario(d))
        warn |= bool(out.pop("truncation_warning", False))
        values.append({k: float(v) for k, v in out.items()})
    diffs = [{k: abs(b[k] - a[k]) for k in a} for a, b in zip(values, values[1:])]
    return ConvergenceReport(dims, values, diffs, tol, warn)
