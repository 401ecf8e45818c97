"""Monte Carlo logical-error-rate estimation and real-time budget accounting.

Every shot draws its error from its own generator seeded by
``shot_seed(seed, index)`` and decodes with the relay seed set to the same
value, so a report depends only on the master seed and never on how shots
are spread over worker threads.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binomtest

from .bp_ref import RelayConfig, relay_decode
from .gateware import gateware_decode
from .model import DecodingModel, apply_action_matrix, apply_check_matrix
from .prng import shot_seed
from .qarith import PrecisionSpec
from .window import SlidingWindowDecoder, build_window_model, gf2_solve, make_decoder, synthesize_stream

__all__ = [
    "TimingModel",
    "ShotResult",
    "BenchReport",
    "MapResult",
    "MapOracle",
    "CSV_COLUMNS",
    "sample_error",
    "wilson_interval",
    "realtime_budget",
    "map_oracle",
    "run_shots",
    "run_windowed_shots",
    "summarize",
    "csv_row",
]

CSV_COLUMNS = ("p", "precision", "variant", "shots", "failures", "ler", "ler_lo", "ler_hi",
               "mean_iters", "p95_iters", "conv_frac", "budget_frac")


@dataclass(frozen=True)
class TimingModel:
    """Durations in nanoseconds."""

    iteration_ns: float = 24.0
    cycle_ns: float = 1000.0
    overhead_ns: float = 0.0

    def __post_init__(self):
        if self.iteration_ns <= 0:
            raise ValueError("iteration time must be positive")
        if self.cycle_ns < 0 or self.overhead_ns < 0:
            raise ValueError("durations must be non-negative")


def realtime_budget(timing: TimingModel, window_width: int | None, commit_width: int) -> int:
    """Iterations that fit in the time ``commit_width`` cycles take to arrive.

    ``floor((C * cycle - overhead) / tau)``, computed on the exact decimal
    values of the durations so that e.g. 8000 / 20 is not nudged below 400
    by binary rounding.  ``window_width`` does not enter the bound; it is
    accepted so callers can pass a full (W, C) pair.
    """
    tau = Fraction(str(timing.iteration_ns))
    avail = commit_width * Fraction(str(timing.cycle_ns)) - Fraction(str(timing.overhead_ns))
    return max(0, math.floor(avail / tau))


def sample_error(model: DecodingModel, rng: np.random.Generator, p: float | None = None) -> np.ndarray:
    """Independent Bernoulli draws, column ``j`` with its prior (or ``p`` for all).

    ``p`` overrides only the sampling law; the decoder keeps the model priors.
    """
    probs = model.priors if p is None else np.full(model.num_errors, float(p))
    return (rng.random(model.num_errors) < probs).astype(np.uint8)


def wilson_interval(failures: int, shots: int, confidence: float = 0.95) -> tuple[float, float]:
    if shots == 0:
        return 0.0, 1.0
    ci = binomtest(int(failures), int(shots)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class ShotResult:
    success: bool
    converged: bool
    iterations: int
    legs: int
    weight: float
    windows: int = 0
    windows_converged: int = 0
    windows_over_budget: int = 0
    carry_failures: int = 0


@dataclass(frozen=True)
class BenchReport:
    shots: int
    failures: int
    logical_error_rate: float
    ler_low: float
    ler_high: float
    mean_iterations: float
    p95_iterations: float
    convergence_fraction: float
    budget: int
    budget_fraction: float
    windows: int = 0
    windows_converged: int = 0
    carry_failures: int = 0
    iteration_ns: float = 24.0

    @property
    def mean_latency_ns(self) -> float:
        return self.mean_iterations * self.iteration_ns


def summarize(results: Sequence[ShotResult], budget: int, timing: TimingModel) -> BenchReport:
    n = len(results)
    fails = sum(not r.success for r in results)
    lo, hi = wilson_interval(fails, n)
    iters = np.array([r.iterations for r in results], dtype=np.int64)
    windows = sum(r.windows for r in results)
    if windows:
        over = sum(r.windows_over_budget for r in results) / windows
        conv = sum(r.windows_converged for r in results) / windows
    else:
        over = float(np.mean(iters > budget)) if n else 0.0
        conv = sum(r.converged for r in results) / n if n else 0.0
    return BenchReport(
        shots=n,
        failures=fails,
        logical_error_rate=fails / n if n else 0.0,
        ler_low=lo,
        ler_high=hi,
        mean_iterations=float(iters.mean()) if n else 0.0,
        p95_iterations=float(np.percentile(iters, 95)) if n else 0.0,
        convergence_fraction=conv,
        budget=budget,
        budget_fraction=over,
        windows=windows,
        windows_converged=sum(r.windows_converged for r in results),
        carry_failures=sum(r.carry_failures for r in results),
        iteration_ns=timing.iteration_ns,
    )


def _run_parallel(fn: Callable[[int], ShotResult], shots: int, threads: int) -> list[ShotResult]:
    if threads <= 1:
        return [fn(i) for i in range(shots)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(shots), chunksize=max(1, shots // (4 * threads))))


def _decode_fn(config: RelayConfig, spec: PrecisionSpec | None):
    if spec is None:
        return lambda model, syn, cfg: relay_decode(model, syn, cfg)
    return lambda model, syn, cfg: gateware_decode(model, syn, cfg, spec)


def run_shots(model: DecodingModel, config: RelayConfig, spec: PrecisionSpec | None, shots: int, seed: int, *,
              threads: int = 1, sample_p: float | None = None, timing: TimingModel | None = None,
              return_results: bool = False):
    """Global decoding of ``shots`` sampled errors.

    ``spec=None`` decodes with the binary64 reference, otherwise with the
    gateware emulator at that precision.  A shot succeeds when the decoder
    converged and its estimate has both the observed syndrome and the
    error's logical action.
    """
    timing = timing or TimingModel()
    decode = _decode_fn(config, spec)
    cycles = model.layout.cycles if model.layout is not None else 1
    budget = realtime_budget(timing, None, cycles)

    def one(i: int) -> ShotResult:
        s = shot_seed(seed, i)
        e = sample_error(model, np.random.default_rng(s), sample_p)
        syn = apply_check_matrix(model, e)
        out = decode(model, syn, config.with_seed(s))
        ok = (out.converged
              and np.array_equal(apply_check_matrix(model, out.error_estimate), syn)
              and np.array_equal(apply_action_matrix(model, out.error_estimate), apply_action_matrix(model, e)))
        return ShotResult(bool(ok), bool(out.converged), out.iterations_total, out.legs_used, float(out.weight))

    results = _run_parallel(one, shots, threads)
    report = summarize(results, budget, timing)
    return (report, results) if return_results else report


def run_windowed_shots(model: DecodingModel, window_width: int, commit_width: int, config: RelayConfig,
                       spec: PrecisionSpec | None, shots: int, seed: int, *, threads: int = 1,
                       carry: str = "full", sample_p: float | None = None, timing: TimingModel | None = None,
                       verify_carry: bool = False, return_results: bool = False):
    """End-to-end sliding-window shots scored on corrected observables.

    A shot succeeds when ``o_corr`` equals the noiseless observables of the
    synthesized stream.  Window iteration totals are compared against the
    real-time budget for ``commit_width`` cycles.
    """
    timing = timing or TimingModel()
    wcfg = build_window_model(model, window_width, commit_width, carry=carry)
    budget = realtime_budget(timing, window_width, commit_width)

    def one(i: int) -> ShotResult:
        s = shot_seed(seed, i)
        e = sample_error(model, np.random.default_rng(s), sample_p)
        events, expected = synthesize_stream(wcfg, e)
        dec = SlidingWindowDecoder(wcfg, make_decoder(config.with_seed(s), spec), verify_carry=verify_carry)
        _, ocorr = dec.run(events)
        recs = dec.state.records
        carry_bad = sum(1 for r in recs if r.converged and not (r.residual_clean and r.self_cancel is not False))
        return ShotResult(
            success=bool(np.array_equal(ocorr, expected)),
            converged=all(r.converged for r in recs),
            iterations=sum(r.iterations for r in recs),
            legs=sum(r.legs for r in recs),
            weight=0.0,
            windows=len(recs),
            windows_converged=sum(r.converged for r in recs),
            windows_over_budget=sum(r.iterations > budget for r in recs),
            carry_failures=carry_bad,
        )

    results = _run_parallel(one, shots, threads)
    report = summarize(results, budget, timing)
    return (report, results) if return_results else report


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def csv_row(p: float | str, precision: str, variant: str, report: BenchReport) -> str:
    fields = [
        p if isinstance(p, str) else _fmt(p), precision, variant, str(report.shots), str(report.failures),
        _fmt(report.logical_error_rate), _fmt(report.ler_low), _fmt(report.ler_high),
        _fmt(report.mean_iterations), _fmt(report.p95_iterations),
        _fmt(report.convergence_fraction), _fmt(report.budget_fraction),
    ]
    return ",".join(fields)


# ---------------------------------------------------------------------------
# exhaustive maximum-likelihood oracle

@dataclass(frozen=True)
class MapResult:
    """``class_probabilities`` maps each logical class to the joint probability
    ``Pr(class, syndrome)``; they sum to ``Pr(syndrome)``."""

    min_weight_error: np.ndarray
    class_probabilities: dict
    best_class: tuple

    @property
    def best_probability(self) -> float:
        return self.class_probabilities[self.best_class]

    @property
    def syndrome_probability(self) -> float:
        return sum(self.class_probabilities.values())


def _gf2_rref(mat: np.ndarray):
    a = (np.array(mat, dtype=np.uint8) & 1).copy()
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hit = np.flatnonzero(a[r:, c])
        if hit.size == 0:
            continue
        p = r + hit[0]
        a[[r, p]] = a[[p, r]]
        for k in np.flatnonzero(a[:, c]):
            if k != r:
                a[k] ^= a[r]
        pivots.append(c)
        r += 1
    return a[:r], pivots


class MapOracle:
    """Coset enumeration ``e0 + ker H`` for models with at most 24 columns."""

    MAX_ERRORS = 24

    def __init__(self, model: DecodingModel):
        if model.num_errors > self.MAX_ERRORS:
            raise ValueError(f"exhaustive oracle limited to {self.MAX_ERRORS} error columns")
        self.model = model
        self.h = model.dense_check_matrix()
        self.a = model.dense_action_matrix()
        rref, pivots = _gf2_rref(self.h)
        self._pivots = pivots
        n = model.num_errors
        free = [c for c in range(n) if c not in pivots]
        basis = []
        for f in free:
            v = np.zeros(n, dtype=np.uint8)
            v[f] = 1
            for row, pc in zip(rref, pivots):
                v[pc] = row[f]
            basis.append(v)
        self.kernel = np.array(basis, dtype=np.uint8).reshape(len(basis), n)
        coeffs = np.array(list(itertools.product((0, 1), repeat=len(basis))), dtype=np.int64).reshape(2 ** len(basis), len(basis))
        self._span = ((coeffs @ self.kernel.astype(np.int64)) & 1).astype(np.uint8)
        p = model.priors
        self._log1m = np.log1p(-p)
        self._llr = np.log(p) - self._log1m

    def particular(self, syndrome) -> np.ndarray | None:
        try:
            return gf2_solve(self.h, np.asarray(syndrome, dtype=np.uint8))
        except ValueError:
            return None

    def __call__(self, syndrome) -> MapResult:
        e0 = self.particular(syndrome)
        if e0 is None:
            raise ValueError("syndrome is not in the column space of H")
        errs = self._span ^ e0
        logp = errs.astype(np.float64) @ self._llr + self._log1m.sum()
        probs = np.exp(logp)
        classes = ((errs.astype(np.int64) @ self.a.T.astype(np.int64)) & 1).astype(np.uint8)
        table: dict = {}
        for row, pr in zip(classes, probs):
            cls = tuple(int(b) for b in row)
            table[cls] = table.get(cls, 0.0) + float(pr)
        best = max(sorted(table), key=lambda k: table[k])
        rep = errs[int(np.argmax(logp))].copy()
        return MapResult(rep, table, best)


def map_oracle(model: DecodingModel, syndrome) -> MapResult:
    return MapOracle(model)(syndrome)
