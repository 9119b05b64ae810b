"""Moments of the mode state and trajectory-level analysis of g2.

Everything here works on plain density matrices (complex ``(d, d)`` arrays)
or on the column arrays of a :class:`~dynblockade.dynamics.Trajectory`.
Undefined values (g2 and f when the occupation is below ``N_FLOOR``) are
reported as NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyWindowError, InvalidArgumentError, UnsupportedConfigurationError

N_FLOOR = 1e-12


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    n: float
    psi: complex
    C: complex
    g2: float
    f: float

    @property
    def defined(self) -> bool:
        return not np.isnan(self.g2)


def _ladder_diagonals(rho: np.ndarray):
    """Return (k, diag, first sub-diagonal) views used by all moment formulas."""
    d = rho.shape[-1]
    k = np.arange(d, dtype=float)
    diag = np.real(np.diagonal(rho, axis1=-2, axis2=-1))
    sub = np.diagonal(rho, offset=-1, axis1=-2, axis2=-1)  # rho[k+1, k]
    return k, diag, sub


def moments(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """n = <a†a>, psi = <a>, C = <a†aa> and G = <a†a†aa> of one or many states.

    Uses the ladder structure directly instead of full traces: in the
    number basis a is a single superdiagonal, so each moment is a weighted
    sum over the diagonal or first subdiagonal of rho.
    """
    rho = np.asarray(rho)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise InvalidArgumentError(f"not a square state array: shape {rho.shape}")
    k, diag, sub = _ladder_diagonals(rho)
    sq = np.sqrt(k[1:])
    n = diag @ k
    G = diag @ (k * (k - 1))
    psi = sub @ sq  # Tr(a rho) = sum_k sqrt(k) rho[k, k-1]
    C = sub @ (sq * k[:-1])  # a†a a |k> = sqrt(k)(k-1)|k-1>
    return n, psi, C, G


def moment_functionals(d: int) -> np.ndarray:
    """Rows w with w @ vec(rho) = n, psi, C, G, Tr rho for row-major vec(rho)."""
    W = np.zeros((5, d * d), dtype=complex)
    k = np.arange(d)
    diag = k * (d + 1)
    W[0, diag] = k
    W[3, diag] = k * (k - 1)
    W[4, diag] = 1.0
    sub = k[1:] * d + k[:-1]  # rho[k, k-1]
    W[1, sub] = np.sqrt(k[1:])
    W[2, sub] = np.sqrt(k[1:]) * k[:-1]
    return W


def columns_from_moments(raw: np.ndarray) -> dict[str, np.ndarray]:
    """Turn stacked ``moment_functionals`` outputs into observable columns."""
    n, psi, C, G = raw[:, 0].real, raw[:, 1], raw[:, 2], raw[:, 3].real
    g2, f = _g2_f(n, psi, C, G)
    return {"n": n, "psi": psi, "C": C, "G": G, "g2": g2, "f": f}


def _g2_f(n, psi, C, G):
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        defined = n >= N_FLOOR
        safe_n = np.where(defined, n, 1.0)
        g2 = np.where(defined, G / safe_n**2, np.nan)
        f = np.where(defined, (g2 * safe_n * np.imag(psi) - np.imag(C)) / safe_n**2, np.nan)
    return g2, f


def g2_equal(rho: np.ndarray) -> float:
    """Equal-time second-order coherence <a†a†aa>/<a†a>^2 (NaN below N_FLOOR)."""
    n, psi, C, G = moments(rho)
    return float(_g2_f(n, psi, C, G)[0])


def f_of_state(rho: np.ndarray) -> float:
    """Rate function f = (g2 n Im psi - Im C) / n^2 with dg2/dt = 4 P f for real P."""
    n, psi, C, G = moments(rho)
    return float(_g2_f(n, psi, C, G)[1])


def record(rho: np.ndarray, t: float) -> ObservableRecord:
    n, psi, C, G = moments(rho)
    g2, f = _g2_f(n, psi, C, G)
    return ObservableRecord(float(t), float(n), complex(psi), complex(C), float(g2), float(f))


def observable_columns(states: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorised version of :func:`record` for a stack of states."""
    n, psi, C, G = moments(states)
    g2, f = _g2_f(n, psi, C, G)
    return {"n": n, "psi": psi, "C": C, "G": G, "g2": g2, "f": f}


# --- trajectory analysis -----------------------------------------------------


@dataclass
class RateLawReport:
    max_relative_error: float
    max_abs_lhs: float
    max_abs_rhs: float
    n_points: int
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    def passed(self, tol: float = 1e-3) -> bool:
        return bool(self.max_relative_error < tol)


def _centered_slope(y: np.ndarray, dt: float, order: int) -> np.ndarray:
    slope = np.full_like(y, np.nan)
    if order == 2:
        slope[1:-1] = (y[2:] - y[:-2]) / (2 * dt)
    elif order == 4:
        slope[2:-2] = (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * dt)
    else:
        raise InvalidArgumentError("stencil order must be 2 or 4")
    return slope


def validate_rate_law(
    traj, window: tuple[float, float] | None = None, order: int = 4
) -> RateLawReport:
    """Compare the finite-difference slope of g2(t,t) with 4 P(t) f(t).

    Centered differences on the uniform sample grid. Samples whose stencil
    reaches across a delta pulse are dropped, as are samples with
    n < 10 * N_FLOOR. The residual is normalised by max |4 P f| over the
    kept samples (absolute residual if that maximum is zero).
    """
    if not traj.schedule.is_real:
        raise UnsupportedConfigurationError("rate-law validation needs real drive amplitudes")
    t, g2 = traj.t, traj.g2
    half = order // 2
    if len(t) < 2 * half + 1:
        raise EmptyWindowError("too few samples for the stencil")
    slope = _centered_slope(g2, t[1] - t[0], order)
    rhs = 4.0 * np.real(traj.drive) * traj.f

    keep = np.isfinite(slope) & np.isfinite(rhs)
    for k in np.flatnonzero(traj.pulse_flag):
        # stored value at k is post-pulse; stencils centred on k-half .. k+half-1 straddle the jump
        keep[max(k - half, 0) : k + half] = False
    keep &= traj.n > 10 * N_FLOOR
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    if not keep.any():
        raise EmptyWindowError("no usable samples for rate-law validation")

    lhs, rhs_k = slope[keep], rhs[keep]
    scale = np.max(np.abs(rhs_k))
    resid = np.max(np.abs(lhs - rhs_k))
    rel = resid / scale if scale > 0 else resid
    return RateLawReport(
        max_relative_error=float(rel),
        max_abs_lhs=float(np.max(np.abs(lhs))),
        max_abs_rhs=float(scale),
        n_points=int(keep.sum()),
        times=t[keep],
        lhs=lhs,
        rhs=rhs_k,
    )


def find_window_min(traj, window: tuple[float, float]) -> tuple[float, float, float]:
    """(t_s, g2 min, n at t_s) over the samples inside ``[t_a, t_b]``.

    NaN (undefined) samples are skipped; ties go to the earliest time.
    """
    t_a, t_b = window
    eps = 1e-9 * max(1.0, abs(t_b))
    mask = (traj.t >= t_a - eps) & (traj.t <= t_b + eps)
    g2 = np.where(mask, traj.g2, np.nan)
    if np.all(np.isnan(g2)):
        raise EmptyWindowError(f"no defined g2 sample in [{t_a}, {t_b}]")
    i = int(np.nanargmin(g2))
    return float(traj.t[i]), float(traj.g2[i]), float(traj.n[i])
