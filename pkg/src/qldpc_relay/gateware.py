"""Fixed-point emulation of the FPGA Relay-BP core.

Check node units emit, per edge, the exclusive sign and a selector bit plus
the check's two smallest incoming magnitudes (min1/min2, already scaled by
the min-sum factor).  Variable node units resolve each exclusive minimum as
``min2 if selector else min1``, update the memory bias in reduced-logic
arithmetic, and accumulate messages and marginals through saturating adders
in adjacency order.

Messages are sign-magnitude (``*_neg`` flag plus unsigned magnitude of
``N`` bits); marginals and biases are symmetric two's-complement values of
``spec.marginal_bits`` bits; priors are unsigned ``N``-bit integers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO

import numpy as np
from numba import njit

from .bp_ref import DecodeOutcome, RelayConfig, syndrome_matches, weight_kernel
from .model import DecodingModel, Interconnect, build_interconnect
from .prng import NodeRng, draw_beta, leg_betas, node_seed
from .qarith import (PrecisionSpec, alpha_scale_int, approx_mul_shift, beta_to_int,
                     quantize_priors, saturate, signed_approx_mul)

__all__ = [
    "DEGREE_CAP",
    "GatewareState",
    "CnuOutput",
    "NodeRng",
    "node_seed",
    "draw_beta",
    "build_interconnect",
    "init_gateware_state",
    "start_leg",
    "cnu_step",
    "vnu_step",
    "gateware_decode",
    "write_trace_csv",
]

DEGREE_CAP = 32


@dataclass
class CnuOutput:
    """Per-edge sign and selector, per-check scaled min1/min2."""

    neg: np.ndarray
    sel: np.ndarray
    min1: np.ndarray
    min2: np.ndarray

    def resolved(self, ic: Interconnect) -> np.ndarray:
        """Signed exclusive-minimum message on every edge."""
        mag = np.where(self.sel.astype(bool), self.min2[ic.edge_check], self.min1[ic.edge_check])
        return np.where(self.neg.astype(bool), -mag, mag)


@dataclass
class GatewareState:
    nu_neg: np.ndarray
    nu_mag: np.ndarray
    cnu: CnuOutput
    marginal: np.ndarray
    prior: np.ndarray
    bias: np.ndarray
    ehat: np.ndarray
    iteration: int = 0
    leg: int = 0
    init: bool = True
    scratch: np.ndarray = field(default=None, repr=False)

    def nu_values(self) -> np.ndarray:
        return np.where(self.nu_neg.astype(bool), -self.nu_mag, self.nu_mag)

    def validate(self, spec: PrecisionSpec) -> None:
        """Raise if any register holds a value its width cannot represent."""
        mm, mw = spec.max_magnitude, spec.max_marginal
        checks = {
            "nu_mag": (self.nu_mag, 0, mm),
            "min1": (self.cnu.min1, 0, mm),
            "min2": (self.cnu.min2, 0, mm),
            "prior": (self.prior, 0, mm),
            "marginal": (self.marginal, -mw, mw),
            "bias": (self.bias, -mw, mw),
        }
        for name, (arr, lo, hi) in checks.items():
            if arr.size and (arr.min() < lo or arr.max() > hi):
                raise AssertionError(f"{name} outside [{lo}, {hi}]")
        if np.any(self.cnu.min1 > self.cnu.min2):
            raise AssertionError("min1 > min2")
        if np.any(self.nu_neg.astype(bool) & (self.nu_mag == 0)):
            raise AssertionError("negative zero message")


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True, nogil=True)
def _cnu_kernel(check_ptr, nu_neg, nu_mag, syndrome, t, alpha_on, nbits, maxmag,
                mu_neg, mu_sel, min1_out, min2_out):
    for i in range(check_ptr.size - 1):
        lo = check_ptr[i]
        hi = check_ptr[i + 1]
        if lo == hi:
            min1_out[i] = maxmag
            min2_out[i] = maxmag
            continue
        par = syndrome[i]
        m1 = nu_mag[lo]
        m2 = maxmag
        idx = lo
        par ^= nu_neg[lo]
        for e in range(lo + 1, hi):
            par ^= nu_neg[e]
            v = nu_mag[e]
            if v < m1:
                m2 = m1
                m1 = v
                idx = e
            elif v < m2:
                m2 = v
        if alpha_on:
            m1 = alpha_scale_int(m1, t, nbits)
            m2 = alpha_scale_int(m2, t, nbits)
        min1_out[i] = m1
        min2_out[i] = m2
        for e in range(lo, hi):
            mu_neg[e] = par ^ nu_neg[e]
            mu_sel[e] = 1 if e == idx else 0


@njit(cache=True, nogil=True)
def _vnu_kernel(error_ptr, error_edges, edge_check, prior, beta, mem_scale, m, width, maxmag,
                mu_neg, mu_sel, min1, min2, marg, bias, nu_neg, nu_mag, ehat, scratch, reverse):
    for j in range(error_ptr.size - 1):
        b0 = saturate(approx_mul_shift(prior[j], beta[j], m), width)
        b1 = saturate(signed_approx_mul(marg[j], mem_scale - beta[j], m), width)
        bj = saturate(b0 + b1, width)
        bias[j] = bj
        lo = error_ptr[j]
        hi = error_ptr[j + 1]
        for a in range(lo, hi):
            e = error_edges[a]
            c = edge_check[e]
            v = min2[c] if mu_sel[e] else min1[c]
            scratch[a] = -v if mu_neg[e] else v
        acc = bj
        for k in range(hi - lo):
            a = hi - 1 - k if reverse else lo + k
            acc = saturate(acc + scratch[a], width)
        marg[j] = acc
        ehat[j] = 1 if acc < 0 else 0
        for a in range(lo, hi):
            acc = bj
            for k in range(hi - lo):
                b = hi - 1 - k if reverse else lo + k
                if b != a:
                    acc = saturate(acc + scratch[b], width)
            if acc > maxmag:
                acc = maxmag
            elif acc < -maxmag:
                acc = -maxmag
            e = error_edges[a]
            nu_neg[e] = 1 if acc < 0 else 0
            nu_mag[e] = -acc if acc < 0 else acc


@njit(cache=True, nogil=True)
def _leg_kernel(check_ptr, edge_error, error_ptr, error_edges, edge_check, prior, syndrome, mask,
                beta, max_iter, alpha_on, nbits, maxmag, mem_scale, m, width, reverse,
                nu_neg, nu_mag, mu_neg, mu_sel, min1, min2, marg, bias, ehat, scratch):
    for e in range(edge_error.size):
        nu_neg[e] = 0
        nu_mag[e] = prior[edge_error[e]]
    for t in range(1, max_iter + 1):
        _cnu_kernel(check_ptr, nu_neg, nu_mag, syndrome, t, alpha_on, nbits, maxmag,
                    mu_neg, mu_sel, min1, min2)
        _vnu_kernel(error_ptr, error_edges, edge_check, prior, beta, mem_scale, m, width, maxmag,
                    mu_neg, mu_sel, min1, min2, marg, bias, nu_neg, nu_mag, ehat, scratch, reverse)
        if syndrome_matches(check_ptr, edge_error, ehat, syndrome, mask):
            return t, True
    return max_iter, False


# ---------------------------------------------------------------------------
# state and step API

def _check_degrees(model: DecodingModel) -> None:
    dc = max((len(c) for c in model.check_adjacency), default=0)
    dv = max((len(c) for c in model.error_adjacency), default=0)
    if max(dc, dv) > DEGREE_CAP:
        raise ValueError(f"node degree {max(dc, dv)} exceeds the gateware cap of {DEGREE_CAP}")


def init_gateware_state(model: DecodingModel, spec: PrecisionSpec) -> GatewareState:
    ic = model.interconnect
    e, mchk, n = ic.num_edges, model.num_checks, model.num_errors
    prior = quantize_priors(model.weights, spec)
    state = GatewareState(
        nu_neg=np.zeros(e, dtype=np.uint8),
        nu_mag=np.zeros(e, dtype=np.int64),
        cnu=CnuOutput(np.zeros(e, dtype=np.uint8), np.zeros(e, dtype=np.uint8),
                      np.zeros(mchk, dtype=np.int64), np.zeros(mchk, dtype=np.int64)),
        marginal=np.zeros(n, dtype=np.int64),
        prior=prior,
        bias=np.zeros(n, dtype=np.int64),
        ehat=np.zeros(n, dtype=np.uint8),
        scratch=np.zeros(e, dtype=np.int64),
    )
    vnu_step(state, model, spec, np.full(n, spec.mem_scale, dtype=np.int64), init=True)
    return state


def start_leg(state: GatewareState, model: DecodingModel, leg: int) -> None:
    """Controller action at a leg boundary: reload priors into the messages, keep marginals."""
    ic = model.interconnect
    state.nu_neg[:] = 0
    state.nu_mag[:] = state.prior[ic.edge_error]
    state.iteration = 0
    state.leg = leg
    state.init = False


def cnu_step(state: GatewareState, model: DecodingModel, syndrome, spec: PrecisionSpec, t: int,
             alpha_enabled: bool = True) -> CnuOutput:
    ic = model.interconnect
    s = np.ascontiguousarray(syndrome, dtype=np.uint8)
    c = state.cnu
    _cnu_kernel(ic.check_ptr, state.nu_neg, state.nu_mag, s, t, alpha_enabled,
                spec.magnitude_bits, spec.max_magnitude, c.neg, c.sel, c.min1, c.min2)
    state.iteration = t
    return c


def vnu_step(state: GatewareState, model: DecodingModel, spec: PrecisionSpec, betas, init: bool = False,
             reverse_sum: bool = False):
    """Variable node update; with ``init`` load priors into messages, bias and marginals."""
    ic = model.interconnect
    if init:
        state.nu_neg[:] = 0
        state.nu_mag[:] = state.prior[ic.edge_error]
        state.bias[:] = state.prior
        state.marginal[:] = state.prior
        state.ehat[:] = 0
        state.init = True
        return state.nu_values(), state.marginal, state.ehat
    beta = np.ascontiguousarray(betas, dtype=np.int64)
    c = state.cnu
    _vnu_kernel(ic.error_ptr, ic.error_edges, ic.edge_check, state.prior, beta, spec.mem_scale,
                spec.mem_scale_log2, spec.marginal_bits, spec.max_magnitude, c.neg, c.sel,
                c.min1, c.min2, state.marginal, state.bias, state.nu_neg, state.nu_mag,
                state.ehat, state.scratch, reverse_sum)
    state.init = False
    return state.nu_values(), state.marginal, state.ehat


def _leg_betas(config: RelayConfig, spec: PrecisionSpec, n: int, leg: int) -> np.ndarray:
    if leg == 0:
        return np.full(n, beta_to_int(config.gamma0, spec), dtype=np.int64)
    lo = beta_to_int(config.gamma_max, spec)
    hi = beta_to_int(config.gamma_min, spec)
    return leg_betas(config.seed, n, leg, lo, hi)


def gateware_decode(model: DecodingModel, syndrome, config: RelayConfig, spec: PrecisionSpec, *,
                    check_mask=None, trace: list | None = None, reverse_sum: bool = False,
                    validate: bool = False) -> DecodeOutcome:
    """Relay-BP-S entirely in fixed point.

    Solutions are ranked by their integer weight (sum of quantized priors);
    the reported ``weight`` is the real LLR weight of the returned estimate.
    ``trace`` receives ``(iteration, marginals, ehat, converged)`` per
    iteration; ``validate`` range-checks every register after every step.
    """
    _check_degrees(model)
    ic = model.interconnect
    n = model.num_errors
    s = np.ascontiguousarray(syndrome, dtype=np.uint8)
    if s.shape != (model.num_checks,):
        raise ValueError(f"syndrome has length {s.shape}, expected {model.num_checks}")
    mask = (np.ones(model.num_checks, dtype=np.uint8) if check_mask is None
            else np.ascontiguousarray(check_mask, dtype=np.uint8))
    state = init_gateware_state(model, spec)
    c = state.cnu
    step_mode = trace is not None or validate
    best = None
    best_w = None
    found = 0
    per_leg: list[int] = []
    total = 0
    for r in range(config.max_legs):
        betas = _leg_betas(config, spec, n, r)
        limit = config.iters_leg0 if r == 0 else config.iters_leg
        start_leg(state, model, r)
        if not step_mode:
            iters, conv = _leg_kernel(
                ic.check_ptr, ic.edge_error, ic.error_ptr, ic.error_edges, ic.edge_check,
                state.prior, s, mask, betas, limit, config.alpha_enabled, spec.magnitude_bits,
                spec.max_magnitude, spec.mem_scale, spec.mem_scale_log2, spec.marginal_bits,
                reverse_sum, state.nu_neg, state.nu_mag, c.neg, c.sel, c.min1, c.min2,
                state.marginal, state.bias, state.ehat, state.scratch)
            iters, conv = int(iters), bool(conv)
        else:
            iters, conv = limit, False
            for t in range(1, limit + 1):
                cnu_step(state, model, s, spec, t, config.alpha_enabled)
                vnu_step(state, model, spec, betas, reverse_sum=reverse_sum)
                if validate:
                    state.validate(spec)
                conv = bool(syndrome_matches(ic.check_ptr, ic.edge_error, state.ehat, s, mask))
                if trace is not None:
                    trace.append((total + t, state.marginal.copy(), state.ehat.copy(), conv))
                if conv:
                    iters = t
                    break
        per_leg.append(iters)
        total += iters
        if conv:
            found += 1
            w = int(state.prior[state.ehat.astype(bool)].sum())
            if best_w is None or w < best_w:
                best, best_w = state.ehat.copy(), w
            if found == config.solutions_sought:
                break
    est = state.ehat.copy() if best is None else best
    return DecodeOutcome(best is not None, est, float(weight_kernel(model.weights, est)), total,
                         len(per_leg), found, tuple(per_leg), state.marginal.copy())


def write_trace_csv(trace: list, out: IO[str]) -> None:
    """Per-iteration dump in ``iter,node,marginal,ehat`` rows."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["iter", "node", "marginal", "ehat"])
    for it, marg, ehat, _ in trace:
        for j in range(marg.size):
            w.writerow([it, j, f"{marg[j]:.17g}" if marg.dtype.kind == "f" else int(marg[j]), int(ehat[j])])
