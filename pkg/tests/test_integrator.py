import numpy as np
import pytest

from dynblockade.integrator import DormandPrince, StepSizeUnderflow


def test_exponential_decay_hits_target_exactly():
    stepper = DormandPrince(lambda t, y: -y, rtol=1e-10, atol=1e-12)
    y = stepper.advance(np.array([1.0 + 0j]), 0.0, 3.0)
    assert abs(y[0] - np.exp(-3.0)) < 1e-9


def test_oscillator_over_many_calls():
    stepper = DormandPrince(lambda t, y: 1j * y)
    y = np.array([1.0 + 0j])
    t = 0.0
    for t_next in np.linspace(0.1, 10.0, 100):
        y = stepper.advance(y, t, t_next)
        t = t_next
    assert abs(y[0] - np.exp(10j)) < 1e-7


def test_time_dependent_rhs():
    stepper = DormandPrince(lambda t, y: np.cos(t) * np.ones_like(y))
    y = stepper.advance(np.zeros(2, dtype=complex), 0.0, 2.0)
    assert np.allclose(y, np.sin(2.0), atol=1e-9)


def test_max_step_is_respected():
    calls = []

    def rhs(t, y):
        calls.append(t)
        return np.zeros_like(y)

    stepper = DormandPrince(rhs)
    stepper.advance(np.zeros(1, dtype=complex), 0.0, 1.0, max_step=0.1)
    assert stepper.n_steps >= 10


def test_backwards_integration_rejected():
    with pytest.raises(ValueError):
        DormandPrince(lambda t, y: y).advance(np.ones(1), 1.0, 0.0)


def test_blow_up_reports_underflow():
    stepper = DormandPrince(lambda t, y: y**2, rtol=1e-9, atol=1e-12)
    with pytest.raises(StepSizeUnderflow):
        stepper.advance(np.array([1.0 + 0j]), 0.0, 2.0)  # y = 1/(1-t) diverges at t=1
