"""Classical semi-smooth Newton alternation over (I, C), (A, B) and the multiplier."""

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError
from .operators import (RegularizerConfig, data_residual, soft_threshold, soft_threshold_sub,
                        update_A_classical, update_B_classical, v_adjoint, v_grad)
from .tensor import as_tensor, channel_matmul, channel_transpose

log = logging.getLogger(__name__)

ETA_FLOOR = 1e-8
TRACE_COLUMNS = ("iter", "lagrangian", "f_norm", "primal_residual", "eta")


@dataclass(frozen=True)
class StepRecord:
    outer: int
    inner: int
    f_sq_before: float
    f_sq_after: float
    eta: float
    stalled: bool = False


@dataclass(frozen=True)
class SolverState:
    I: np.ndarray
    A: np.ndarray
    B: np.ndarray
    Lambda: np.ndarray
    C_aux: np.ndarray
    D: np.ndarray
    eta: float = 0.01
    config: RegularizerConfig = field(default_factory=RegularizerConfig)
    iter: int = 0
    stalled: bool = False
    guard_used: bool = False
    last_step: StepRecord = None


@dataclass
class SolverTrace:
    records: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def stall_count(self):
        return sum(s.stalled for s in self.steps)

    def descent_violations(self):
        return [s for s in self.steps if not s.stalled and s.f_sq_after > s.f_sq_before]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for rec in self.records:
            writer.writerow([rec["iter"]] + [repr(float(rec[k])) for k in TRACE_COLUMNS[1:]])
        return buf.getvalue()


def normalized_gram(x, transpose=False):
    """Per-channel ``X X^T`` (or ``X^T X``) scaled to unit Frobenius norm.

    Channels whose Gram matrix vanishes get the identity; the second return
    value reports whether that guard fired.
    """
    xt = channel_transpose(x)
    gram = channel_matmul(xt, x) if transpose else channel_matmul(x, xt)
    norms = np.sqrt(np.sum(gram * gram, axis=(1, 2)))
    zero = norms == 0
    out = gram / np.where(zero, 1.0, norms)[:, None, None]
    if zero.any():
        out[zero] = np.eye(gram.shape[1])
    return out, bool(zero.any())


def _identity_stack(c, n):
    return np.broadcast_to(np.eye(n), (c, n, n)).copy()


def init_classical(degraded, config=None, eta=0.01, freeze_ab=False):
    config = config or RegularizerConfig()
    d = as_tensor(degraded)
    if not np.all(np.isfinite(d)):
        raise NumericalError("degraded input contains non-finite values", 0)
    c, h, w = d.shape
    guard = False
    if freeze_ab:
        a, b = _identity_stack(c, h), _identity_stack(c, w)
    else:
        a, guard_a = normalized_gram(d)
        b, guard_b = normalized_gram(d, transpose=True)
        guard = guard_a or guard_b
        if guard:
            log.warning("zero Gram matrix in initialization, identity used for A/B")
    lam = v_grad(d)
    c_aux = soft_threshold(lam / config.sigma + v_grad(d), config.threshold)
    return SolverState(I=d.copy(), A=a, B=b, Lambda=lam, C_aux=c_aux, D=d, eta=eta,
                       config=config, guard_used=guard)


def _shrink_argument(state, image=None):
    image = state.I if image is None else image
    return state.Lambda / state.config.sigma + v_grad(image)


def compute_F(state, image=None):
    """Optimality residual A^T(AIB - D)B^T + V^T[Lambda + eps(V(I) - S(Lambda/sigma + V(I)))]."""
    image = state.I if image is None else image
    cfg = state.config
    data = channel_matmul(channel_matmul(channel_transpose(state.A), data_residual(image, state.A, state.B, state.D)),
                          channel_transpose(state.B))
    feat = v_grad(image)
    shrunk = soft_threshold(state.Lambda / cfg.sigma + feat, cfg.threshold)
    return data + v_adjoint(state.Lambda + cfg.epsilon * (feat - shrunk))


def compute_H(state, f_val):
    """Subderivative direction A^T A F B B^T + sigma V^T[V(F) * (1 - S_d(...))]."""
    cfg = state.config
    ata = channel_matmul(channel_transpose(state.A), state.A)
    bbt = channel_matmul(state.B, channel_transpose(state.B))
    keep = 1.0 - soft_threshold_sub(_shrink_argument(state), cfg.threshold)
    return channel_matmul(channel_matmul(ata, f_val), bbt) + cfg.sigma * v_adjoint(v_grad(f_val) * keep)


def step_I(state, outer=0, inner=0):
    """Gradient step on I with step halving until ||F||^2 does not increase."""
    f0 = compute_F(state)
    f0_sq = float(np.sum(f0 * f0))
    if f0_sq == 0.0:
        rec = StepRecord(outer, inner, 0.0, 0.0, 0.0)
        return replace(state, last_step=rec, stalled=False)
    h = compute_H(state, f0)
    eta = state.eta
    while eta >= ETA_FLOOR:
        trial = state.I - eta * h
        f1 = compute_F(state, trial)
        f1_sq = float(np.sum(f1 * f1))
        if f1_sq <= f0_sq:
            rec = StepRecord(outer, inner, f0_sq, f1_sq, eta)
            return replace(state, I=trial, last_step=rec, stalled=False)
        eta /= 2
    rec = StepRecord(outer, inner, f0_sq, f0_sq, 0.0, stalled=True)
    return replace(state, last_step=rec, stalled=True)


def step_multiplier(state):
    """Lambda += eps (V(I) - S(Lambda/sigma + V(I))); C_aux takes the shrunk features."""
    cfg = state.config
    feat = v_grad(state.I)
    c_new = soft_threshold(state.Lambda / cfg.sigma + feat, cfg.threshold)
    return replace(state, Lambda=state.Lambda + cfg.epsilon * (feat - c_new), C_aux=c_new)


def lagrangian(state):
    cfg = state.config
    r = data_residual(state.I, state.A, state.B, state.D)
    gap = v_grad(state.I) - state.C_aux
    return float(0.5 * np.sum(r * r) + cfg.alpha * np.abs(state.C_aux).sum()
                 + 0.5 * cfg.beta * np.sum(state.A ** 2) + 0.5 * cfg.gamma * np.sum(state.B ** 2)
                 + np.sum(state.Lambda * gap) + 0.5 * cfg.epsilon * np.sum(gap * gap))


def _finite(state):
    return all(np.all(np.isfinite(t)) for t in (state.I, state.A, state.B, state.Lambda, state.C_aux))


def solve(degraded, config=None, outer_iters=16, inner_iters=4, eta=0.01, freeze_ab=False):
    """Run the full alternation; returns the final estimate and its trace."""
    if outer_iters < 1 or inner_iters < 1:
        raise ValueError("outer_iters and inner_iters must be >= 1")
    state = init_classical(degraded, config, eta=eta, freeze_ab=freeze_ab)
    trace = SolverTrace()
    for k in range(1, outer_iters + 1):
        accepted = 0.0
        for j in range(inner_iters):
            state = step_I(state, k, j)
            trace.steps.append(state.last_step)
            if not state.stalled:
                accepted = state.last_step.eta
        if not freeze_ab:
            try:
                a = update_A_classical(state.I, state.A, state.B, state.D, state.config, k)
                b = update_B_classical(state.I, a, state.B, state.D, state.config, k)
            except NumericalError as err:
                err.trace = trace
                raise
            state = replace(state, A=a, B=b)
        state = step_multiplier(state)
        state = replace(state, iter=k)
        if not _finite(state):
            raise NumericalError("solver state became non-finite", k, trace)
        f = compute_F(state)
        trace.records.append({
            "iter": k,
            "lagrangian": lagrangian(state),
            "f_norm": float(np.sqrt(np.sum(f * f))),
            "primal_residual": float(np.linalg.norm(v_grad(state.I) - state.C_aux)),
            "eta": accepted,
        })
    return state.I, trace
