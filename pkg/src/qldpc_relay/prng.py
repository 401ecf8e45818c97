"""Per-node pseudo-random memory strengths.

Every error node owns a xorshift64* generator whose state is derived from
``(master_seed, node_index, leg_index)`` only, so draws are independent of
evaluation order and of how nodes are partitioned across workers.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
XORSHIFT_STAR_MULT = 2685821657736338717

__all__ = [
    "splitmix64",
    "node_seed",
    "NodeRng",
    "draw_beta",
    "leg_betas",
    "leg_gammas",
    "shot_seed",
]


def splitmix64(x: int) -> int:
    """One step of SplitMix64: add the golden gamma, then apply the finalizer."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def node_seed(master_seed: int, node: int, leg: int) -> int:
    s = splitmix64(
        (master_seed & MASK64)
        ^ splitmix64(node & MASK64)
        ^ splitmix64((leg * GOLDEN_GAMMA) & MASK64)
    )
    return s if s else 1


def shot_seed(master_seed: int, shot_index: int) -> int:
    return splitmix64((master_seed ^ shot_index) & MASK64)


class NodeRng:
    """xorshift64* generator of a single error node."""

    __slots__ = ("state",)

    def __init__(self, master_seed: int, node: int, leg: int):
        self.state = node_seed(master_seed, node, leg)

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * XORSHIFT_STAR_MULT) & MASK64


def draw_beta(rng: NodeRng, beta_lo: int, beta_hi: int) -> int:
    if beta_hi < beta_lo:
        raise ValueError(f"empty beta range [{beta_lo}, {beta_hi}]")
    return beta_lo + rng.next() % (beta_hi - beta_lo + 1)


# -- vectorised forms: one draw per node for a whole leg ---------------------

_U = np.uint64


def _splitmix64_vec(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _U(GOLDEN_GAMMA)
        z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def _first_outputs(master_seed: int, num_nodes: int, leg: int) -> np.ndarray:
    nodes = np.arange(num_nodes, dtype=np.uint64)
    mix = _U(master_seed & MASK64) ^ _U(splitmix64((leg * GOLDEN_GAMMA) & MASK64))
    s = _splitmix64_vec(mix ^ _splitmix64_vec(nodes))
    s[s == 0] = 1
    x = s ^ (s >> _U(12))
    x ^= x << _U(25)
    x ^= x >> _U(27)
    with np.errstate(over="ignore"):
        return x * _U(XORSHIFT_STAR_MULT)


def leg_betas(master_seed: int, num_nodes: int, leg: int, beta_lo: int, beta_hi: int) -> np.ndarray:
    """First draw of every node's generator for ``leg``, mapped to [beta_lo, beta_hi]."""
    if beta_hi < beta_lo:
        raise ValueError(f"empty beta range [{beta_lo}, {beta_hi}]")
    out = _first_outputs(master_seed, num_nodes, leg) % _U(beta_hi - beta_lo + 1)
    return out.astype(np.int64) + beta_lo


def leg_gammas(master_seed: int, num_nodes: int, leg: int, gamma_min: float, gamma_max: float) -> np.ndarray:
    """Real-valued memory strengths for the float reference.

    The top 53 bits of the node's first output give a uniform ``u`` in [0, 1);
    ``gamma = gamma_min + (gamma_max - gamma_min) * u``.
    """
    u = (_first_outputs(master_seed, num_nodes, leg) >> _U(11)).astype(np.float64) * 2.0 ** -53
    return gamma_min + (gamma_max - gamma_min) * u
