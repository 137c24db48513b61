"""Fixed linear/proximal operators for the classical solver.

The feature map is the forward-difference image gradient, the feature prior is
the L1 norm (so its proximal map is soft-thresholding), and both matrix priors
are squared Frobenius norms.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidSpecError, NumericalError
from .tensor import as_tensor, channel_matmul, channel_transpose


@dataclass(frozen=True)
class RegularizerConfig:
    alpha: float = 0.1
    beta: float = 0.01
    gamma: float = 0.01
    sigma: float = 1.0
    epsilon: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.sigma > 0):
            raise InvalidSpecError("alpha and sigma must be strictly positive")
        # zero is allowed for the remaining weights so sub-problems can be isolated
        if min(self.beta, self.gamma, self.epsilon) < 0:
            raise InvalidSpecError("beta, gamma and epsilon must be non-negative")

    @property
    def threshold(self):
        return self.alpha / self.sigma


def v_grad(x):
    """Forward differences, horizontal channels first; zero on the last row/column."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"expected [C,H,W], got {x.shape}", axis="rank")
    c = x.shape[0]
    out = np.zeros((2 * c,) + x.shape[1:])
    out[:c, :, :-1] = x[:, :, 1:] - x[:, :, :-1]
    out[c:, :-1, :] = x[:, 1:, :] - x[:, :-1, :]
    return out


def v_adjoint(y):
    """Exact adjoint of :func:`v_grad` (negative divergence)."""
    y = as_tensor(y)
    if y.ndim != 3:
        raise DimensionError(f"expected [2C,H,W], got {y.shape}", axis="rank")
    if y.shape[0] % 2:
        raise DimensionError(f"channel count {y.shape[0]} is odd", axis="channel")
    c = y.shape[0] // 2
    px, py = y[:c], y[c:]
    out = np.zeros((c,) + y.shape[1:])
    out[:, :, 1:] += px[:, :, :-1]
    out[:, :, :-1] -= px[:, :, :-1]
    out[:, 1:, :] += py[:, :-1, :]
    out[:, :-1, :] -= py[:, :-1, :]
    return out


def _check_threshold(t):
    if not t > 0:
        raise InvalidSpecError(f"threshold must be positive, got {t}")


def soft_threshold(x, t):
    _check_threshold(t)
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def soft_threshold_sub(x, t):
    """Element of the subdifferential of :func:`soft_threshold`; 0 on the boundary."""
    _check_threshold(t)
    return (np.abs(np.asarray(x, dtype=np.float64)) > t).astype(np.float64)


def data_residual(image, a, b, degraded):
    return channel_matmul(channel_matmul(a, image), b) - degraded


def objective(image, a, b, degraded, config):
    """0.5||AIB - D||^2 + alpha||V(I)||_1 + beta/2 ||A||^2 + gamma/2 ||B||^2."""
    r = data_residual(image, a, b, degraded)
    return (0.5 * np.sum(r * r) + config.alpha * np.abs(v_grad(image)).sum()
            + 0.5 * config.beta * np.sum(a * a) + 0.5 * config.gamma * np.sum(b * b))


def _backtracked(current, grad, lipschitz, evaluate, f0, max_halvings=40):
    eta = 1.0 / lipschitz
    for _ in range(max_halvings):
        trial = current - eta[:, None, None] * grad
        if evaluate(trial) <= f0:
            return trial
        eta = eta / 2
    return current


def update_A_classical(image, a, b, degraded, config, iteration=None):
    """One backtracked gradient step on A with I and B fixed."""
    ib = channel_matmul(image, b)
    r = channel_matmul(a, ib) - degraded
    grad = channel_matmul(r, channel_transpose(ib)) + config.beta * a
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient in A update", iteration)
    if not np.any(grad):
        return a.copy()
    lip = np.linalg.norm(ib, ord=2, axis=(1, 2)) ** 2 + config.beta
    lip = np.where(lip > 0, lip, 1.0)
    f0 = objective(image, a, b, degraded, config)
    return _backtracked(a, grad, lip, lambda t: objective(image, t, b, degraded, config), f0)


def update_B_classical(image, a, b, degraded, config, iteration=None):
    """One backtracked gradient step on B with I and A fixed."""
    ai = channel_matmul(a, image)
    r = channel_matmul(ai, b) - degraded
    grad = channel_matmul(channel_transpose(ai), r) + config.gamma * b
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient in B update", iteration)
    if not np.any(grad):
        return b.copy()
    lip = np.linalg.norm(ai, ord=2, axis=(1, 2)) ** 2 + config.gamma
    lip = np.where(lip > 0, lip, 1.0)
    f0 = objective(image, a, b, degraded, config)
    return _backtracked(b, grad, lip, lambda t: objective(image, a, t, degraded, config), f0)
