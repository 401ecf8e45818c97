"""Binary64 reference of min-sum BP, DMem-BP and Relay-BP-S.

Messages follow a flooding schedule: every iteration updates all biases,
then all check-to-error messages, then all error-to-check messages and
marginals.  All sums run left to right in adjacency order, starting from the
bias, so any implementation that keeps that order reproduces the trace
bit for bit.

The op-level functions (:func:`check_to_error_messages` and friends) drive
the same compiled kernels as the fused leg loop used by :func:`relay_decode`;
``dmem_bp_leg(..., trace=[])`` steps through them one at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .model import DecodingModel
from .prng import leg_gammas

__all__ = [
    "EMPTY_MIN",
    "RelayConfig",
    "MessageState",
    "DecodeOutcome",
    "LegResult",
    "alpha_factor",
    "init_state",
    "check_to_error_messages",
    "error_to_check_messages",
    "update_marginals_and_decision",
    "update_bias",
    "dmem_bp_leg",
    "relay_decode",
]

# Exclusive minimum over an empty neighbourhood (degree-1 checks).  Finite so
# that sums of a few of them stay finite and 0 * EMPTY_MIN == 0.
EMPTY_MIN = 2.0 ** 1000


@dataclass(frozen=True)
class RelayConfig:
    """Relay-BP-S parameters; defaults are the reference Relay-S set."""

    solutions_sought: int = 5
    max_legs: int = 600
    iters_leg0: int = 80
    iters_leg: int = 60
    gamma0: float = 0.125
    gamma_min: float = -0.24
    gamma_max: float = 0.66
    alpha_enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.solutions_sought < 1 or self.max_legs < 1:
            raise ValueError("solutions_sought and max_legs must be >= 1")
        if self.solutions_sought > self.max_legs:
            raise ValueError("solutions_sought cannot exceed max_legs")
        if self.iters_leg0 < 1 or self.iters_leg < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.gamma_min > self.gamma_max:
            raise ValueError("gamma_min must not exceed gamma_max")

    def with_seed(self, seed: int) -> "RelayConfig":
        return replace(self, seed=seed)

    def variant(self, name: str) -> "RelayConfig":
        """``bp``: one leg with gamma = 0; ``dmem``: one leg with gamma0; ``relay``: unchanged."""
        if name == "bp":
            return replace(self, gamma0=0.0, max_legs=1, solutions_sought=1)
        if name == "dmem":
            return replace(self, max_legs=1, solutions_sought=1)
        if name == "relay":
            return self
        raise ValueError(f"unknown decoder variant {name!r}")


@dataclass
class MessageState:
    mu: np.ndarray
    nu: np.ndarray
    bias: np.ndarray
    bias0: np.ndarray
    marginal: np.ndarray
    ehat: np.ndarray
    iteration: int = 0


@dataclass
class LegResult:
    converged: bool
    error_estimate: np.ndarray
    marginals: np.ndarray
    iterations: int


@dataclass
class DecodeOutcome:
    converged: bool
    error_estimate: np.ndarray
    weight: float
    iterations_total: int
    legs_used: int
    solutions_found: int
    per_leg_iterations: tuple[int, ...] = ()
    marginals: np.ndarray | None = field(default=None, repr=False)


def alpha_factor(t: int, enabled: bool = True) -> float:
    """Min-sum scaling ``1 - 2**-t`` for the 1-based iteration index ``t``."""
    return 1.0 - 2.0 ** (-t) if enabled else 1.0


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True, nogil=True)
def _bias_kernel(prior, gamma, marg, bias):
    for j in range(prior.size):
        bias[j] = (1.0 - gamma[j]) * prior[j] + gamma[j] * marg[j]


@njit(cache=True, nogil=True)
def _c2e_kernel(check_ptr, nu, syndrome, alpha, mu):
    for i in range(check_ptr.size - 1):
        lo = check_ptr[i]
        hi = check_ptr[i + 1]
        for e in range(lo, hi):
            neg = syndrome[i] != 0
            mag = np.inf
            for f in range(lo, hi):
                if f != e:
                    v = nu[f]
                    if v < 0.0:
                        neg = not neg
                    a = abs(v)
                    if a < mag:
                        mag = a
            if hi - lo == 1:
                mag = EMPTY_MIN
            if alpha != 1.0:
                mag = alpha * mag
            mu[e] = -mag if neg else mag


@njit(cache=True, nogil=True)
def _e2c_kernel(error_ptr, error_edges, bias, mu, nu):
    for j in range(error_ptr.size - 1):
        lo = error_ptr[j]
        hi = error_ptr[j + 1]
        for a in range(lo, hi):
            acc = bias[j]
            for b in range(lo, hi):
                if b != a:
                    acc += mu[error_edges[b]]
            nu[error_edges[a]] = acc


@njit(cache=True, nogil=True)
def _marginal_kernel(error_ptr, error_edges, bias, mu, marg, ehat):
    for j in range(error_ptr.size - 1):
        acc = bias[j]
        for b in range(error_ptr[j], error_ptr[j + 1]):
            acc += mu[error_edges[b]]
        marg[j] = acc
        ehat[j] = 1 if acc < 0.0 else 0


@njit(cache=True, nogil=True)
def syndrome_matches(check_ptr, edge_error, ehat, syndrome, mask):
    """True iff ``H ehat`` agrees with ``syndrome`` on every masked row."""
    for i in range(check_ptr.size - 1):
        if mask[i]:
            par = 0
            for e in range(check_ptr[i], check_ptr[i + 1]):
                par ^= ehat[edge_error[e]]
            if par != syndrome[i]:
                return False
    return True


@njit(cache=True, nogil=True)
def weight_kernel(weights, ehat):
    w = 0.0
    for j in range(ehat.size):
        if ehat[j]:
            w += weights[j]
    return w


@njit(cache=True, nogil=True)
def _leg_kernel(check_ptr, edge_error, error_ptr, error_edges, prior, syndrome, mask,
                gamma, max_iter, alpha_on, marg, mu, nu, bias, ehat):
    for e in range(edge_error.size):
        nu[e] = prior[edge_error[e]]
    for t in range(1, max_iter + 1):
        _bias_kernel(prior, gamma, marg, bias)
        alpha = 1.0 - 2.0 ** (-t) if alpha_on else 1.0
        _c2e_kernel(check_ptr, nu, syndrome, alpha, mu)
        _e2c_kernel(error_ptr, error_edges, bias, mu, nu)
        _marginal_kernel(error_ptr, error_edges, bias, mu, marg, ehat)
        if syndrome_matches(check_ptr, edge_error, ehat, syndrome, mask):
            return t, True
    return max_iter, False


# ---------------------------------------------------------------------------
# op-level API

def _syndrome_array(model: DecodingModel, syndrome) -> np.ndarray:
    s = np.ascontiguousarray(syndrome, dtype=np.uint8)
    if s.shape != (model.num_checks,):
        raise ValueError(f"syndrome has length {s.shape}, expected {model.num_checks}")
    return s


def _mask_array(model: DecodingModel, mask) -> np.ndarray:
    if mask is None:
        return np.ones(model.num_checks, dtype=np.uint8)
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    if m.shape != (model.num_checks,):
        raise ValueError("check mask length differs from M")
    return m


def init_state(model: DecodingModel, initial_marginals=None) -> MessageState:
    """Leg-start state: every error-to-check message equals the node's prior."""
    ic = model.interconnect
    prior = np.array(model.weights, dtype=np.float64)
    marg = prior.copy() if initial_marginals is None else np.array(initial_marginals, dtype=np.float64)
    return MessageState(
        mu=np.zeros(ic.num_edges),
        nu=prior[ic.edge_error].copy(),
        bias=prior.copy(),
        bias0=prior,
        marginal=marg,
        ehat=np.zeros(model.num_errors, dtype=np.uint8),
    )


def update_bias(state: MessageState, gamma) -> np.ndarray:
    """Memory update ``bias = (1 - gamma) * bias0 + gamma * marginal``."""
    g = np.ascontiguousarray(np.broadcast_to(np.asarray(gamma, dtype=np.float64), state.bias0.shape))
    _bias_kernel(state.bias0, g, state.marginal, state.bias)
    return state.bias


def check_to_error_messages(state: MessageState, model: DecodingModel, syndrome, t: int,
                            alpha_enabled: bool = True) -> np.ndarray:
    s = _syndrome_array(model, syndrome)
    _c2e_kernel(model.interconnect.check_ptr, state.nu, s, alpha_factor(t, alpha_enabled), state.mu)
    return state.mu


def error_to_check_messages(state: MessageState, model: DecodingModel) -> np.ndarray:
    ic = model.interconnect
    _e2c_kernel(ic.error_ptr, ic.error_edges, state.bias, state.mu, state.nu)
    return state.nu


def update_marginals_and_decision(state: MessageState, model: DecodingModel):
    ic = model.interconnect
    _marginal_kernel(ic.error_ptr, ic.error_edges, state.bias, state.mu, state.marginal, state.ehat)
    return state.marginal, state.ehat


def dmem_bp_leg(model: DecodingModel, syndrome, gamma, max_iter: int, initial_marginals=None, *,
                alpha_enabled: bool = True, check_mask=None, trace: list | None = None) -> LegResult:
    """One DMem-BP leg: stop at the first iteration whose hard decision satisfies the syndrome.

    With ``trace`` given, a snapshot of every message array is appended after
    each iteration.
    """
    s = _syndrome_array(model, syndrome)
    mask = _mask_array(model, check_mask)
    g = np.ascontiguousarray(np.broadcast_to(np.asarray(gamma, dtype=np.float64), (model.num_errors,)))
    state = init_state(model, initial_marginals)
    ic = model.interconnect
    if trace is None:
        iters, conv = _leg_kernel(ic.check_ptr, ic.edge_error, ic.error_ptr, ic.error_edges,
                                  state.bias0, s, mask, g, max_iter, alpha_enabled,
                                  state.marginal, state.mu, state.nu, state.bias, state.ehat)
        return LegResult(bool(conv), state.ehat, state.marginal, int(iters))
    for t in range(1, max_iter + 1):
        state.iteration = t
        update_bias(state, g)
        check_to_error_messages(state, model, s, t, alpha_enabled)
        error_to_check_messages(state, model)
        update_marginals_and_decision(state, model)
        trace.append({
            "t": t,
            "bias": state.bias.copy(),
            "mu": state.mu.copy(),
            "nu": state.nu.copy(),
            "marginal": state.marginal.copy(),
            "ehat": state.ehat.copy(),
        })
        if syndrome_matches(ic.check_ptr, ic.edge_error, state.ehat, s, mask):
            return LegResult(True, state.ehat, state.marginal, t)
    return LegResult(False, state.ehat, state.marginal, max_iter)


def relay_decode(model: DecodingModel, syndrome, config: RelayConfig, *, check_mask=None,
                 trace: list | None = None) -> DecodeOutcome:
    """Relay-BP-S: chain DMem-BP legs, carrying marginals forward.

    Leg 0 uses the uniform ``gamma0``; leg ``r >= 1`` draws one memory
    strength per error node from ``[gamma_min, gamma_max]``.  Stops after
    ``solutions_sought`` converged legs or ``max_legs`` legs and returns the
    strictly lowest-weight solution (the earliest one on ties).  If no leg
    converges the last leg's hard decision is returned with
    ``converged=False``.
    """
    n = model.num_errors
    marg = np.array(model.weights, dtype=np.float64)
    best = None
    best_w = np.inf
    found = 0
    per_leg: list[int] = []
    last = np.zeros(n, dtype=np.uint8)
    for r in range(config.max_legs):
        if r == 0:
            gamma = np.full(n, config.gamma0)
            limit = config.iters_leg0
        else:
            gamma = leg_gammas(config.seed, n, r, config.gamma_min, config.gamma_max)
            limit = config.iters_leg
        leg_trace = None if trace is None else []
        res = dmem_bp_leg(model, syndrome, gamma, limit, marg, alpha_enabled=config.alpha_enabled,
                          check_mask=check_mask, trace=leg_trace)
        if trace is not None:
            trace.append(leg_trace)
        per_leg.append(res.iterations)
        marg = res.marginals
        last = res.error_estimate
        if res.converged:
            found += 1
            w = weight_kernel(model.weights, res.error_estimate)
            if w < best_w:
                best, best_w = res.error_estimate.copy(), w
            if found == config.solutions_sought:
                break
    if best is None:
        return DecodeOutcome(False, last.copy(), float(weight_kernel(model.weights, last)),
                             sum(per_leg), len(per_leg), 0, tuple(per_leg), marg)
    return DecodeOutcome(True, best, float(best_w), sum(per_leg), len(per_leg), found,
                         tuple(per_leg), marg)
