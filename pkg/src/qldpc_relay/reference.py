"""Plain-Python oracles for the compiled decoders.

Written directly from the message-passing equations with per-edge
dictionaries: every exclusive minimum, exclusive sign and exclusive sum is
evaluated on its own.  Nothing here touches the routing tables or kernels of
:mod:`bp_ref` and :mod:`gateware`; only the scalar :mod:`qarith` primitives
and the PRNG contract are shared.
"""

from __future__ import annotations

import numpy as np

from .bp_ref import EMPTY_MIN, DecodeOutcome, RelayConfig
from .model import DecodingModel, solution_weight
from .prng import NodeRng, draw_beta
from .qarith import (PrecisionSpec, alpha_scale_int, approx_mul_shift, beta_to_int,
                     quantize_prior, saturate, signed_approx_mul)

__all__ = [
    "plain_min_sum_f64",
    "plain_min_sum_fixed",
    "fixed_point_relay_decode",
]


def _satisfied(model, ehat, syndrome, mask) -> bool:
    for i, row in enumerate(model.check_adjacency):
        if mask is not None and not mask[i]:
            continue
        if sum(ehat[j] for j in row) % 2 != syndrome[i]:
            return False
    return True


def plain_min_sum_f64(model: DecodingModel, syndrome, max_iter: int, alpha_enabled: bool = True):
    """Textbook min-sum BP with fixed priors; returns the per-iteration trace.

    Each entry holds ``mu``/``nu`` as dicts keyed by ``(check, error)`` plus
    the marginals and hard decision.  Stops when the syndrome is satisfied.
    """
    syndrome = [int(s) for s in syndrome]
    lam = [float(w) for w in model.weights]
    nu = {(i, j): lam[j] for i, row in enumerate(model.check_adjacency) for j in row}
    trace = []
    for t in range(1, max_iter + 1):
        alpha = 1.0 - 2.0 ** (-t) if alpha_enabled else 1.0
        mu = {}
        for i, row in enumerate(model.check_adjacency):
            for j in row:
                others = [nu[(i, k)] for k in row if k != j]
                negative = syndrome[i] == 1
                for v in others:
                    if v < 0.0:
                        negative = not negative
                mag = min((abs(v) for v in others), default=EMPTY_MIN)
                if alpha_enabled:
                    mag = alpha * mag
                mu[(i, j)] = -mag if negative else mag
        new_nu = {}
        marg = []
        for j, col in enumerate(model.error_adjacency):
            for i in col:
                acc = lam[j]
                for k in col:
                    if k != i:
                        acc += mu[(k, j)]
                new_nu[(i, j)] = acc
            acc = lam[j]
            for k in col:
                acc += mu[(k, j)]
            marg.append(acc)
        nu = new_nu
        ehat = [1 if m < 0.0 else 0 for m in marg]
        trace.append({"t": t, "mu": mu, "nu": dict(nu), "marginal": marg, "ehat": ehat})
        if _satisfied(model, ehat, syndrome, None):
            break
    return trace


def _fixed_c2e(model, nu, syndrome, t, spec, alpha_enabled):
    mu = {}
    for i, row in enumerate(model.check_adjacency):
        for j in row:
            others = [nu[(i, k)] for k in row if k != j]
            negative = syndrome[i] == 1
            for v in others:
                if v < 0:
                    negative = not negative
            mag = min((abs(v) for v in others), default=spec.max_magnitude)
            if alpha_enabled:
                mag = alpha_scale_int(mag, t, spec.magnitude_bits)
            mu[(i, j)] = -mag if negative else mag
    return mu


def _fixed_e2c(model, mu, bias, spec, reverse=False):
    w = spec.marginal_bits
    mm = spec.max_magnitude
    nu = {}
    marg = []
    for j, col in enumerate(model.error_adjacency):
        order = list(reversed(col)) if reverse else list(col)
        acc = bias[j]
        for k in order:
            acc = saturate(acc + mu[(k, j)], w)
        marg.append(acc)
        for i in col:
            acc = bias[j]
            for k in order:
                if k != i:
                    acc = saturate(acc + mu[(k, j)], w)
            nu[(i, j)] = max(-mm, min(mm, acc))
    return nu, marg


def plain_min_sum_fixed(model: DecodingModel, syndrome, spec: PrecisionSpec, max_iter: int,
                        alpha_enabled: bool = True):
    """Textbook fixed-point min-sum with fixed integer priors; per-iteration trace."""
    syndrome = [int(s) for s in syndrome]
    prior = [quantize_prior(float(wt), spec) for wt in model.weights]
    nu = {(i, j): prior[j] for i, row in enumerate(model.check_adjacency) for j in row}
    trace = []
    for t in range(1, max_iter + 1):
        mu = _fixed_c2e(model, nu, syndrome, t, spec, alpha_enabled)
        nu, marg = _fixed_e2c(model, mu, prior, spec)
        ehat = [1 if m < 0 else 0 for m in marg]
        trace.append({"t": t, "mu": mu, "nu": dict(nu), "marginal": marg, "ehat": ehat})
        if _satisfied(model, ehat, syndrome, None):
            break
    return trace


def fixed_point_relay_decode(model: DecodingModel, syndrome, config: RelayConfig, spec: PrecisionSpec, *,
                             check_mask=None, reverse_sum: bool = False) -> DecodeOutcome:
    """Relay-BP-S in fixed point, evaluating every exclusive minimum independently."""
    syndrome = [int(s) for s in syndrome]
    mask = None if check_mask is None else [int(b) for b in check_mask]
    n = model.num_errors
    w = spec.marginal_bits
    prior = [quantize_prior(float(wt), spec) for wt in model.weights]
    marg = list(prior)
    beta_lo = beta_to_int(config.gamma_max, spec)
    beta_hi = beta_to_int(config.gamma_min, spec)
    best, best_w = None, None
    found = 0
    per_leg = []
    ehat = [0] * n
    for r in range(config.max_legs):
        if r == 0:
            beta = [beta_to_int(config.gamma0, spec)] * n
            limit = config.iters_leg0
        else:
            beta = [draw_beta(NodeRng(config.seed, j, r), beta_lo, beta_hi) for j in range(n)]
            limit = config.iters_leg
        nu = {(i, j): prior[j] for i, row in enumerate(model.check_adjacency) for j in row}
        conv = False
        iters = limit
        for t in range(1, limit + 1):
            bias = []
            for j in range(n):
                keep = saturate(approx_mul_shift(prior[j], beta[j], spec.mem_scale_log2), w)
                mem = saturate(signed_approx_mul(marg[j], spec.mem_scale - beta[j], spec.mem_scale_log2), w)
                bias.append(saturate(keep + mem, w))
            mu = _fixed_c2e(model, nu, syndrome, t, spec, config.alpha_enabled)
            nu, marg = _fixed_e2c(model, mu, bias, spec, reverse=reverse_sum)
            ehat = [1 if m < 0 else 0 for m in marg]
            if _satisfied(model, ehat, syndrome, mask):
                conv, iters = True, t
                break
        per_leg.append(iters)
        if conv:
            found += 1
            wt = sum(prior[j] for j in range(n) if ehat[j])
            if best_w is None or wt < best_w:
                best, best_w = list(ehat), wt
            if found == config.solutions_sought:
                break
    est = np.array(ehat if best is None else best, dtype=np.uint8)
    return DecodeOutcome(best is not None, est, solution_weight(model, est), sum(per_leg), len(per_leg),
                         found, tuple(per_leg), np.array(marg, dtype=np.int64))
