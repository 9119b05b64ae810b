"""Adaptive Dormand-Prince 5(4) stepper for array-valued ODEs."""

from __future__ import annotations

from typing import Callable

import numpy as np

# Dormand & Prince (1980) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# 5th minus embedded 4th order weights
E1 = B1 - 5179 / 57600
E3 = B3 - 7571 / 16695
E4 = B4 - 393 / 640
E5 = B5 + 92097 / 339200
E6 = B6 - 187 / 2100
E7 = -1 / 40

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


class StepSizeUnderflow(RuntimeError):
    pass


class DormandPrince:
    """Embedded RK45 integrator that lands exactly on requested times.

    The step-size estimate survives between calls to :meth:`advance`, so
    splitting a run at sample or event times only costs the clamped last
    step of each interval.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y) -> dy/dt`` for complex arrays of a fixed shape.
    rtol, atol : float
        Elementwise mixed tolerance, combined with an RMS norm.
    h0 : float
        First trial step.
    max_step : float
        Global upper bound on the step.
    """

    def __init__(
        self,
        rhs: Callable[[float, np.ndarray], np.ndarray],
        rtol: float = 1e-9,
        atol: float = 1e-11,
        h0: float = 1e-3,
        max_step: float = np.inf,
    ):
        self.rhs = rhs
        self.rtol = rtol
        self.atol = atol
        self.h = h0
        self.max_step = max_step
        self.n_steps = 0
        self.n_rejected = 0
        self.n_evals = 0
        self._fsal = None  # (t, y, dy/dt) after the last accepted step

    def reset_fsal(self):
        """Drop the cached derivative, e.g. after an instantaneous jump of y."""
        self._fsal = None

    def _f(self, t, y):
        self.n_evals += 1
        return self.rhs(t, y)

    def advance(self, y: np.ndarray, t: float, t_target: float, max_step: float | None = None) -> np.ndarray:
        """Integrate from ``t`` to exactly ``t_target`` and return the new state."""
        if t_target < t:
            raise ValueError("DormandPrince only integrates forward")
        cap = self.max_step if max_step is None else min(max_step, self.max_step)
        f = self._f
        while t < t_target:
            remaining = t_target - t
            h = min(self.h, cap)
            # absorb a sliver instead of leaving a tiny final step
            last = h >= remaining or remaining - h < 1e-10 * max(1.0, abs(t_target))
            if last:
                h = remaining
            if h <= 1e-14 * max(1.0, abs(t)):
                raise StepSizeUnderflow(f"step size underflow at t = {t!r}")

            fs = self._fsal
            k1 = fs[2] if fs is not None and fs[0] == t and fs[1] is y else f(t, y)
            k2 = f(t + C2 * h, y + h * (A21 * k1))
            k3 = f(t + C3 * h, y + h * (A31 * k1 + A32 * k2))
            k4 = f(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3))
            k5 = f(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
            k6 = f(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
            y_new = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
            k7 = f(t + h, y_new)
            err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            ratio = np.abs(err) / scale
            err_norm = float(np.sqrt(np.vdot(ratio, ratio).real / ratio.size))

            if err_norm <= 1.0:
                factor = MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, SAFETY * err_norm**-0.2)
                if not last:
                    self.h = h * factor
                elif factor < 1.0:
                    self.h = min(self.h, h * factor)
                t = t_target if last else t + h
                y = y_new
                self._fsal = (t, y, k7)
                self.n_steps += 1
            else:
                self.n_rejected += 1
                if np.isfinite(err_norm):
                    self.h = h * max(MIN_FACTOR, SAFETY * err_norm**-0.2)
                else:
                    self.h = h * MIN_FACTOR
        return y
