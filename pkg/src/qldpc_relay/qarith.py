"""intN.S.M reduced-precision arithmetic.

``N`` magnitude bits for sign-magnitude messages and unsigned priors, a real
prior scale ``S`` mapping LLRs to integers, and a power-of-two memory scale
``M = 2**m`` for memory-strength products.  Marginals and biases live in a
symmetric two's-complement register of ``marginal_bits`` bits (the
most-negative code is never produced).

Widths passed to the saturating helpers always include the sign bit, so an
``N``-bit sign-magnitude value saturates like a width ``N + 1`` integer.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "PrecisionSpec",
    "SignMag",
    "parse_precision",
    "quantize_prior",
    "quantize_priors",
    "beta_to_int",
    "approx_mul_shift",
    "signed_approx_mul",
    "scaled_gamma_mul",
    "saturate",
    "saturate_marginal",
    "saturating_add",
    "alpha_scale_int",
]

_PRECISION_RE = re.compile(r"^int(\d+)\.(\d+(?:\.\d+)?)\.(\d+)(?:/w(\d+))?$")


@dataclass(frozen=True)
class PrecisionSpec:
    magnitude_bits: int = 4
    prior_scale: float = 2.0
    mem_scale_log2: int = 3
    marginal_bits: int | None = None

    def __post_init__(self):
        if self.magnitude_bits < 2:
            raise ValueError("magnitude_bits must be >= 2")
        if not self.prior_scale > 0:
            raise ValueError("prior_scale must be positive")
        if self.mem_scale_log2 < 0:
            raise ValueError("mem_scale_log2 must be >= 0")
        if self.marginal_bits is None:
            object.__setattr__(self, "marginal_bits", self.magnitude_bits + 4)
        if self.marginal_bits < self.magnitude_bits + 1:
            raise ValueError("marginal register must hold a full message")

    @property
    def mem_scale(self) -> int:
        return 1 << self.mem_scale_log2

    @property
    def max_magnitude(self) -> int:
        return (1 << self.magnitude_bits) - 1

    @property
    def max_marginal(self) -> int:
        return (1 << (self.marginal_bits - 1)) - 1

    @property
    def message_width(self) -> int:
        return self.magnitude_bits + 1

    def render(self) -> str:
        s = self.prior_scale
        s_txt = str(int(s)) if float(s).is_integer() else repr(float(s))
        text = f"int{self.magnitude_bits}.{s_txt}.{self.mem_scale}"
        if self.marginal_bits != self.magnitude_bits + 4:
            text += f"/w{self.marginal_bits}"
        return text

    __str__ = render


def parse_precision(text: str) -> PrecisionSpec:
    """Parse ``intN.S.M`` (optionally ``intN.S.M/wB`` for a B-bit marginal register)."""
    m = _PRECISION_RE.match(text.strip())
    if m is None:
        raise ValueError(f"bad precision descriptor {text!r}; expected intN.S.M")
    n, s, mem = int(m.group(1)), float(m.group(2)), int(m.group(3))
    if mem < 1 or mem & (mem - 1):
        raise ValueError(f"memory scale M must be a power of two, got {mem}")
    width = None if m.group(4) is None else int(m.group(4))
    return PrecisionSpec(n, s, mem.bit_length() - 1, width)


@dataclass(frozen=True)
class SignMag:
    sign: int
    magnitude: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.magnitude < 0:
            raise ValueError("magnitude must be non-negative")
        if self.magnitude == 0 and self.sign < 0:
            object.__setattr__(self, "sign", 1)

    @classmethod
    def from_int(cls, v: int) -> "SignMag":
        return cls(-1 if v < 0 else 1, abs(v))

    def to_int(self) -> int:
        return self.sign * self.magnitude


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def quantize_prior(weight: float, spec: PrecisionSpec) -> int:
    """Unsigned integer prior ``round(S * weight)`` clipped to the message range."""
    if weight < 0:
        raise ValueError("prior LLR must be non-negative")
    return min(_round_half_up(spec.prior_scale * weight), spec.max_magnitude)


def quantize_priors(weights: np.ndarray, spec: PrecisionSpec) -> np.ndarray:
    return np.array([quantize_prior(float(w), spec) for w in weights], dtype=np.int64)


def beta_to_int(gamma: float, spec: PrecisionSpec) -> int:
    """``round((1 - gamma) * M)`` for a memory strength ``gamma`` in [-1, 1]."""
    if not -1.0 <= gamma <= 1.0:
        raise ValueError(f"memory strength must lie in [-1, 1], got {gamma}")
    return _round_half_up((1.0 - gamma) * spec.mem_scale)


@njit(cache=True, nogil=True)
def approx_mul_shift(a, b, m):
    """Shift-and-add product with every partial product truncated before summing.

    Each set bit ``k`` of ``a`` contributes ``(b << k) >> m``; the fractional
    bits of each partial product are dropped, so the result never exceeds
    ``(a * b) >> m`` and falls short of it by less than ``popcount(a)``.
    """
    total = 0
    k = 0
    while a >> k:
        if (a >> k) & 1:
            total += (b << k) >> m
        k += 1
    return total


@njit(cache=True, nogil=True)
def saturate(v, width):
    lim = (1 << (width - 1)) - 1
    if v > lim:
        return lim
    if v < -lim:
        return -lim
    return v


@njit(cache=True, nogil=True)
def saturating_add(a, b, width):
    return saturate(a + b, width)


@njit(cache=True, nogil=True)
def signed_approx_mul(x, k, m):
    """``sign(x) * sign(k) * approx_mul_shift(|x|, |k|, m)``."""
    mag = approx_mul_shift(abs(x), abs(k), m)
    if (x < 0) != (k < 0):
        return -mag
    return mag


@njit(cache=True, nogil=True)
def alpha_scale_int(v, t, magnitude_bits):
    """Integer min-sum scaling ``v * (1 - 2**-t)`` as ``v - (v >> min(t, N))``."""
    s = min(t, magnitude_bits)
    return v - (v >> s)


def scaled_gamma_mul(x: int | SignMag, beta_int: int, spec: PrecisionSpec, width: int | None = None):
    """Product ``x * gamma`` with ``gamma = (M - beta_int) / M`` in reduced logic.

    Works on two's-complement ints or :class:`SignMag`; the result has the
    same kind as ``x`` and is saturated to ``width`` (default: message width
    for SignMag, marginal register for ints).
    """
    as_signmag = isinstance(x, SignMag)
    v = x.to_int() if as_signmag else int(x)
    if width is None:
        width = spec.message_width if as_signmag else spec.marginal_bits
    r = saturate(signed_approx_mul(v, spec.mem_scale - beta_int, spec.mem_scale_log2), width)
    return SignMag.from_int(r) if as_signmag else r


def saturate_marginal(v: int, spec: PrecisionSpec) -> int:
    return saturate(int(v), spec.marginal_bits)
