"""Truncated single-mode Fock space.

Energies are in units of the decay rate gamma and times in units of
hbar/gamma, so hbar = gamma = 1 everywhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgumentError, InvalidSpaceError

__all__ = [
    "FockSpace",
    "annihilation",
    "creation",
    "displacement",
    "expectation",
    "fock_state",
    "coherent_state",
    "vacuum",
    "top_population",
]


def _readonly(m: np.ndarray) -> np.ndarray:
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class FockSpace:
    """Number states |0>, ..., |dim-1> of one bosonic mode.

    Operator matrices are built lazily, cached, and returned read-only.
    The dataclass is frozen, so a space can be shared freely between threads.
    """

    dim: int

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 2:
            raise InvalidSpaceError(f"Fock space needs dim >= 2, got {self.dim!r}")

    @cached_property
    def a(self) -> np.ndarray:
        return _readonly(np.diag(np.sqrt(np.arange(1, self.dim, dtype=float)), 1).astype(complex))

    @cached_property
    def adag(self) -> np.ndarray:
        return _readonly(self.a.conj().T.copy())

    @cached_property
    def number(self) -> np.ndarray:
        return _readonly(self.adag @ self.a)

    @cached_property
    def kerr(self) -> np.ndarray:
        """The pair operator a†a†aa."""
        return _readonly(self.adag @ self.adag @ self.a @ self.a)

    @cached_property
    def identity(self) -> np.ndarray:
        return _readonly(np.eye(self.dim, dtype=complex))


def annihilation(space: FockSpace) -> np.ndarray:
    return space.a


def creation(space: FockSpace) -> np.ndarray:
    return space.adag


def _check_beta(beta) -> complex:
    beta = complex(beta)
    if not (np.isfinite(beta.real) and np.isfinite(beta.imag)):
        raise InvalidArgumentError(f"displacement amplitude must be finite, got {beta!r}")
    return beta


def displacement(space: FockSpace, beta: complex) -> np.ndarray:
    """D(beta) = exp(beta a† - beta* a) on the truncated space.

    The generator is anti-Hermitian, so it is diagonalised through the
    Hermitian matrix i*G and exponentiated on its real spectrum.
    """
    beta = _check_beta(beta)
    if beta == 0:
        return space.identity.copy()
    gen = beta * space.adag - np.conj(beta) * space.a
    w, v = np.linalg.eigh(1j * gen)
    return (v * np.exp(-1j * w)) @ v.conj().T


def expectation(op: np.ndarray, rho: np.ndarray) -> complex:
    """Tr(op rho)."""
    op = np.asarray(op)
    rho = np.asarray(rho)
    if op.shape != rho.shape or op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise InvalidArgumentError(f"shape mismatch: operator {op.shape} vs state {rho.shape}")
    # Tr(AB) = sum_ij A_ij B_ji
    return complex(np.einsum("ij,ji->", op, rho))


def fock_state(space: FockSpace, n: int) -> np.ndarray:
    if not 0 <= n < space.dim:
        raise InvalidArgumentError(f"level {n} outside space of dim {space.dim}")
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    rho[n, n] = 1.0
    return rho


def vacuum(space: FockSpace) -> np.ndarray:
    return fock_state(space, 0)


def coherent_state(space: FockSpace, beta: complex) -> np.ndarray:
    """Projector on the truncated, renormalised coherent state |beta>."""
    beta = _check_beta(beta)
    # beta^k / sqrt(k!) built as a running product to stay in floating point
    factors = np.ones(space.dim, dtype=complex)
    factors[1:] = beta / np.sqrt(np.arange(1, space.dim))
    amps = np.cumprod(factors)
    amps /= np.linalg.norm(amps)
    return np.outer(amps, amps.conj())


def top_population(rho: np.ndarray, levels: int = 2) -> float:
    """Combined population of the highest `levels` Fock states."""
    diag = np.real(np.diagonal(rho, axis1=-2, axis2=-1))
    return float(np.sum(diag[..., -levels:]))
