"""Numerical substrate: activations, initializers, Adadelta and gradient checking.

Matrices and vectors are plain ``numpy.float64`` arrays (2-D and 1-D).

Random streams come from :class:`Rng`, which wraps NumPy's PCG64 bit
generator seeded through ``SeedSequence(seed)``.  Only the raw 64-bit outputs
are consumed; uniforms, Gaussians and permutations are derived here so the
stream is fully specified by this module:

* uniform double: ``(raw >> 11) * 2**-53`` in ``[0, 1)``
* Gaussian: Box-Muller on consecutive uniform pairs ``(u1, u2)``, emitting
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` then the matching ``sin`` term
* permutation: Fisher-Yates from the last index down, ``j = floor(u * (i + 1))``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MASK64 = (1 << 64) - 1
PROB_FLOOR = 1e-300
FD_STEP = 1e-5


class NumericalError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class Rng:
    """Deterministic random stream, identical on every platform for a seed."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._bits = np.random.PCG64(self.seed)

    def uniform(self, n: int) -> np.ndarray:
        raw = self._bits.random_raw(n)
        return (raw >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        angle = 2.0 * np.pi * u[:, 1]
        out = np.empty((pairs, 2))
        out[:, 0] = radius * np.cos(angle)
        out[:, 1] = radius * np.sin(angle)
        return out.ravel()[:n]

    def permutation(self, n: int) -> list[int]:
        order = list(range(n))
        if n < 2:
            return order
        u = self.uniform(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[k] * (i + 1))
            order[i], order[j] = order[j], order[i]
        return order


def sigm(x: np.ndarray) -> np.ndarray:
    """Logistic sigmoid, evaluated without overflow for large ``|x|``."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh_v(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(dist: np.ndarray, gold_index: int) -> float:
    """Negative log-probability of the gold class.

    Probabilities are clamped at ``1e-300`` so an underflowed softmax entry
    yields a large finite loss (about 690.8) rather than ``inf``.
    """
    if not 0 <= gold_index < len(dist):
        raise IndexError(f"gold index {gold_index} outside distribution of size {len(dist)}")
    return float(-np.log(max(float(dist[gold_index]), PROB_FLOOR)))


def init_orthogonal(n: int, rng: Rng) -> np.ndarray:
    """Random orthogonal ``n x n`` matrix.

    A standard Gaussian matrix is orthonormalized column by column with
    classical Gram-Schmidt applied twice (re-orthogonalization).  Dividing by
    the positive residual norm makes ``diag(R) > 0``, so the result is the
    unique Q factor of that Gaussian draw.
    """
    if n < 1:
        raise ValueError("orthogonal matrix needs n >= 1")
    a = rng.normal(n * n).reshape(n, n)
    q = np.zeros((n, n))
    for k in range(n):
        v = a[:, k].copy()
        for _ in range(2):
            v -= q[:, :k] @ (q[:, :k].T @ v)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise NumericalError("rank-deficient Gaussian draw in orthogonal init")
        q[:, k] = v / norm
    return q


def init_gaussian(rows: int, cols: int, rng: Rng, std: float = 0.01) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError("Gaussian matrix needs rows, cols >= 1")
    return std * rng.normal(rows * cols).reshape(rows, cols)


@dataclass
class AdadeltaState:
    """Running averages E[g^2] and E[dx^2] for one parameter array."""

    accum_grad_sq: np.ndarray
    accum_update_sq: np.ndarray
    rho: float = 0.95
    epsilon: float = 1e-6

    @classmethod
    def for_param(cls, param: np.ndarray, rho: float = 0.95, epsilon: float = 1e-6) -> "AdadeltaState":
        if not 0.0 < rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        return cls(np.zeros_like(param, dtype=np.float64), np.zeros_like(param, dtype=np.float64), rho, epsilon)


def adadelta_update(param: np.ndarray, grad: np.ndarray, state: AdadeltaState) -> np.ndarray:
    """Apply one Adadelta step to ``param`` in place and return it.

    E[g^2] <- rho E[g^2] + (1 - rho) g^2
    dx     <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
    """
    if param.shape != grad.shape or param.shape != state.accum_grad_sq.shape \
            or param.shape != state.accum_update_sq.shape:
        raise ValueError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"state {state.accum_grad_sq.shape}/{state.accum_update_sq.shape}"
        )
    rho, eps = state.rho, state.epsilon
    g2 = state.accum_grad_sq
    g2 *= rho
    g2 += (1.0 - rho) * grad * grad
    delta = -(np.sqrt(state.accum_update_sq + eps) / np.sqrt(g2 + eps)) * grad
    dx2 = state.accum_update_sq
    dx2 *= rho
    dx2 += (1.0 - rho) * delta * delta
    param += delta
    return param


def grad_check(
    loss_fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    analytic_grad: np.ndarray,
    step: float = FD_STEP,
) -> float:
    """Max relative error between ``analytic_grad`` and central differences.

    Per coordinate: ``|g_fd - g_an| / max(|g_fd| + |g_an|, 1e-8)``.
    """
    params = np.array(params, dtype=np.float64).ravel()
    analytic_grad = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if params.shape != analytic_grad.shape:
        raise ValueError("params and analytic gradient differ in size")
    worst = 0.0
    probe = params.copy()
    for k in range(params.size):
        probe[k] = params[k] + step
        up = loss_fn(probe)
        probe[k] = params[k] - step
        down = loss_fn(probe)
        probe[k] = params[k]
        fd = (up - down) / (2.0 * step)
        err = abs(fd - analytic_grad[k]) / max(abs(fd) + abs(analytic_grad[k]), 1e-8)
        worst = max(worst, err)
    return worst
