"""(W, C) sliding-window decoding over a stream of detector blocks.

Each window decodes ``W`` cycles of detectors (fewer for the final window),
commits the estimated errors of its first ``C`` cycles, folds their logical
effect into the Pauli frame and carries their detector flips beyond the
commit region into the next window.  A final noiseless codeword closes the
stream; its syndrome difference becomes the last detector block.

Window sub-problems are sliced from the full-history model: rows of the
window's cycles, columns assigned to those cycles.  Non-terminal windows
ignore their last cycle's detectors for convergence, because errors
straddling the window edge cannot be represented there; the terminal window
requires every row and commits every column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, TextIO

import numpy as np

from .bp_ref import DecodeOutcome, RelayConfig, relay_decode
from .gateware import gateware_decode
from .model import Closure, DecodingModel
from .qarith import PrecisionSpec

__all__ = [
    "WindowError",
    "BackPressureError",
    "StreamEvent",
    "WindowProblem",
    "WindowConfig",
    "WindowRecord",
    "WindowState",
    "build_window_model",
    "new_state",
    "ingest",
    "try_decode_window",
    "drain",
    "finalize",
    "SlidingWindowDecoder",
    "make_decoder",
    "gf2_solve",
    "synthesize_stream",
    "read_stream",
    "write_stream",
    "write_window_report",
]

Decoder = Callable[[DecodingModel, np.ndarray, np.ndarray], DecodeOutcome]


class WindowError(RuntimeError):
    pass


class BackPressureError(WindowError):
    """Detector FIFO overflowed: blocks arrived faster than windows were decoded."""


@dataclass(frozen=True)
class StreamEvent:
    kind: str  # "d", "c" or "end"
    bits: np.ndarray | None = None

    @classmethod
    def detectors(cls, bits) -> "StreamEvent":
        return cls("d", np.asarray(bits, dtype=np.uint8))

    @classmethod
    def codeword(cls, bits) -> "StreamEvent":
        return cls("c", np.asarray(bits, dtype=np.uint8))

    @classmethod
    def end(cls) -> "StreamEvent":
        return cls("end")


@dataclass(frozen=True, eq=False)
class WindowProblem:
    start: int
    stop: int
    terminal: bool
    model: DecodingModel
    columns: np.ndarray
    commit_mask: np.ndarray
    convergence_mask: np.ndarray


@dataclass(eq=False)
class WindowConfig:
    window_width: int
    commit_width: int
    model: DecodingModel
    closure: Closure
    carry: str = "full"
    fifo_depth: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not 1 <= self.commit_width < self.window_width:
            raise ValueError("commit width must satisfy 1 <= C < W")
        if self.carry not in ("full", "single"):
            raise ValueError("carry must be 'full' or 'single'")
        if self.fifo_depth is None:
            self.fifo_depth = self.window_width
        if self.fifo_depth < min(self.window_width, self.cycles):
            raise ValueError("FIFO must hold at least one full window")

    @property
    def det_per_cycle(self) -> int:
        return self.model.layout.det_per_cycle

    @property
    def cycles(self) -> int:
        return self.model.layout.cycles

    def problem(self, start: int, stop: int, terminal: bool) -> WindowProblem:
        key = (start, stop, terminal)
        if key not in self._cache:
            self._cache[key] = self._build(start, stop, terminal)
        return self._cache[key]

    def _build(self, start, stop, terminal) -> WindowProblem:
        mp = self.det_per_cycle
        cyc = self.model.layout.column_cycle
        rows = np.arange(start * mp, stop * mp)
        cols = np.flatnonzero((cyc >= start) & (cyc < stop))
        sub = self.model.submodel(rows.tolist(), cols.tolist())
        if terminal:
            commit = np.ones(cols.size, dtype=np.uint8)
            cvg = np.ones(rows.size, dtype=np.uint8)
        else:
            commit = (cyc[cols] < start + self.commit_width).astype(np.uint8)
            cvg = (rows < (stop - 1) * mp).astype(np.uint8)
        return WindowProblem(start, stop, terminal, sub, cols, commit, cvg)

    @property
    def base(self) -> WindowProblem:
        """The first window, i.e. the windowed H~, A~ and both masks."""
        stop = min(self.window_width, self.cycles)
        return self.problem(0, stop, self.window_width >= self.cycles)

    @property
    def commit_mask(self) -> np.ndarray:
        return self.base.commit_mask

    @property
    def convergence_mask(self) -> np.ndarray:
        return self.base.convergence_mask


def _identity_closure(model: DecodingModel) -> Closure:
    mp = model.layout.det_per_cycle
    return Closure(np.eye(mp, dtype=np.uint8), np.zeros((model.num_logicals, mp), dtype=np.uint8))


def build_window_model(model: DecodingModel, window_width: int, commit_width: int, *,
                       carry: str = "full", fifo_depth: int | None = None) -> WindowConfig:
    """Window configuration for a model with a cycle layout.

    Models without a physical closure use the identity closure: the final
    codeword is the last syndrome itself and reads out no observables.
    """
    if model.layout is None:
        raise WindowError("model has no cycle layout; windowed decoding needs cycles/det_per_cycle")
    closure = model.layout.closure or _identity_closure(model)
    return WindowConfig(window_width, commit_width, model, closure, carry, fifo_depth)


@dataclass
class WindowRecord:
    start: int
    stop: int
    converged: bool
    iterations: int
    legs: int
    committed: np.ndarray
    residual_clean: bool
    self_cancel: bool | None = None


@dataclass
class WindowState:
    det_per_cycle: int
    num_logicals: int
    history: list = field(default_factory=list)
    syndrome: np.ndarray = None
    carry: np.ndarray = None
    frame: np.ndarray = None
    start: int = 0
    terminal: bool = False
    closed: bool = False
    codeword: np.ndarray | None = None
    records: list = field(default_factory=list)
    committed: np.ndarray | None = None

    @property
    def total_cycles(self) -> int:
        return len(self.history)


def new_state(config: WindowConfig) -> WindowState:
    mp = config.det_per_cycle
    return WindowState(
        det_per_cycle=mp,
        num_logicals=config.model.num_logicals,
        syndrome=np.zeros(mp, dtype=np.uint8),
        carry=np.zeros(0, dtype=np.uint8),
        frame=np.zeros(config.model.num_logicals, dtype=np.uint8),
        committed=np.zeros(config.model.num_errors, dtype=np.uint8),
    )


def _f2(matrix: np.ndarray, v: np.ndarray) -> np.ndarray:
    return ((matrix.astype(np.int64) @ v.astype(np.int64)) & 1).astype(np.uint8)


def ingest(state: WindowState, config: WindowConfig, event: StreamEvent) -> WindowState:
    """Append the detector block implied by ``event`` to the history."""
    if state.closed:
        raise WindowError("stream already ended")
    mp = config.det_per_cycle
    if event.kind == "end":
        state.closed = True
        if state.terminal:
            return state
        d = np.zeros(mp, dtype=np.uint8)
    elif state.terminal:
        raise WindowError("no events may follow the final codeword except END")
    elif event.kind == "c":
        c = np.asarray(event.bits, dtype=np.uint8)
        if c.shape != (config.closure.num_qubits,):
            raise WindowError(f"codeword has length {c.size}, expected {config.closure.num_qubits}")
        d = state.syndrome ^ _f2(config.closure.noiseless_check, c)
        state.codeword = c
    elif event.kind == "d":
        d = np.asarray(event.bits, dtype=np.uint8)
        if d.shape != (mp,):
            raise WindowError(f"detector block has length {d.size}, expected {mp}")
    else:
        raise WindowError(f"unknown event kind {event.kind!r}")
    if len(state.history) >= config.cycles:
        raise WindowError(f"stream exceeds the model's {config.cycles} cycles")
    if len(state.history) - state.start >= config.fifo_depth:
        raise BackPressureError(f"detector FIFO full ({config.fifo_depth} blocks)")
    state.syndrome = state.syndrome ^ d
    state.history.append(d.copy())
    if event.kind in ("c", "end"):
        state.terminal = True
    return state


def try_decode_window(state: WindowState, config: WindowConfig, decoder: Decoder, *,
                      verify_carry: bool = False) -> WindowRecord | None:
    """Decode the next window if enough detectors are available; otherwise return None.

    ``residual_clean`` on the returned record says whether the committed
    errors exactly explain the commit-region detectors.  With
    ``verify_carry`` the window is decoded a second time with their syndrome
    removed; ``self_cancel`` is then true when that re-decode commits nothing.
    """
    t, total, w, c = state.start, state.total_cycles, config.window_width, config.commit_width
    if state.terminal:
        if t >= total:
            return None
        if total > config.cycles:
            raise WindowError("history longer than the model")
        stop = min(t + w, total)
        terminal = t + w >= total and total == config.cycles
        if not terminal and stop - t < w:
            # stream ended early (END before the last model cycle): decode what is there
            terminal = True
    else:
        if t + w > total:
            return None
        stop, terminal = t + w, False
    if terminal and total != config.cycles:
        prob = config._build(t, stop, True)
    else:
        prob = config.problem(t, stop, terminal)
    mp = config.det_per_cycle
    window = np.concatenate(state.history[t:stop])
    if state.carry.size:
        n = min(state.carry.size, window.size)
        window[:n] ^= state.carry[:n]
    out = decoder(prob.model, window, prob.convergence_mask)
    ehat_com = out.error_estimate & prob.commit_mask
    sub = prob.model
    delta_f = np.zeros(sub.num_logicals, dtype=np.uint8)
    for k, row in enumerate(sub.logical_rows):
        delta_f[k] = int(ehat_com[list(row)].sum()) & 1 if row else 0
    delta_d = np.zeros(sub.num_checks, dtype=np.uint8)
    for i, row in enumerate(sub.check_adjacency):
        if row:
            delta_d[i] = int(ehat_com[list(row)].sum()) & 1
    if terminal:
        committed_rows = sub.num_checks
        state.carry = np.zeros(0, dtype=np.uint8)
        state.start = stop
    else:
        committed_rows = c * mp
        if config.carry == "full":
            state.carry = delta_d[c * mp:].copy()
        else:
            state.carry = delta_d[c * mp:(c + 1) * mp].copy()
        state.start = t + c
    residual_clean = bool(out.converged) and not np.any((window ^ delta_d)[:committed_rows])
    self_cancel = None
    if verify_carry:
        again = decoder(prob.model, window ^ delta_d, prob.convergence_mask)
        self_cancel = not np.any(again.error_estimate & prob.commit_mask)
    state.frame ^= delta_f
    committed_cols = prob.columns[ehat_com.astype(bool)]
    state.committed[committed_cols] ^= 1
    rec = WindowRecord(t, stop, bool(out.converged), out.iterations_total, out.legs_used,
                       committed_cols, residual_clean, self_cancel)
    state.records.append(rec)
    return rec


def drain(state: WindowState, config: WindowConfig, decoder: Decoder) -> None:
    if not state.terminal:
        raise WindowError("cannot drain before the stream is terminated")
    while try_decode_window(state, config, decoder) is not None:
        pass


def finalize(state: WindowState, config: WindowConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return the Pauli frame and corrected observables ``(L c) xor f``."""
    if not state.terminal:
        raise WindowError("stream not terminated")
    if state.start < state.total_cycles:
        raise WindowError("windows still pending; drain first")
    if state.codeword is None:
        observed = np.zeros(state.num_logicals, dtype=np.uint8)
    else:
        observed = _f2(config.closure.logical_readout, state.codeword)
    return state.frame.copy(), observed ^ state.frame


class SlidingWindowDecoder:
    """Push events, decode windows as soon as they are complete."""

    def __init__(self, config: WindowConfig, decoder: Decoder, *, verify_carry: bool = False):
        self.config = config
        self.decoder = decoder
        self.verify_carry = verify_carry
        self.state = new_state(config)

    def _step(self):
        return try_decode_window(self.state, self.config, self.decoder, verify_carry=self.verify_carry)

    def push(self, event: StreamEvent) -> list[WindowRecord]:
        ingest(self.state, self.config, event)
        done = []
        while (rec := self._step()) is not None:
            done.append(rec)
        return done

    def run(self, events: Iterable[StreamEvent]) -> tuple[np.ndarray, np.ndarray]:
        for ev in events:
            self.push(ev)
        if not self.state.terminal:
            raise WindowError("stream ended without a codeword or END")
        while self._step() is not None:
            pass
        return finalize(self.state, self.config)


def make_decoder(config: RelayConfig, spec: PrecisionSpec | None = None) -> Decoder:
    """Inner window decoder: float reference when ``spec`` is None, else the gateware."""
    if spec is None:
        return lambda model, syn, mask: relay_decode(model, syn, config, check_mask=mask)
    return lambda model, syn, mask: gateware_decode(model, syn, config, spec, check_mask=mask)


# ---------------------------------------------------------------------------
# stream synthesis and text I/O

def gf2_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One solution ``x`` of ``a x = b`` over F2; raises if inconsistent."""
    a = np.array(a, dtype=np.uint8) & 1
    b = np.array(b, dtype=np.uint8) & 1
    rows, cols = a.shape
    aug = np.concatenate([a, b[:, None]], axis=1)
    pivots = []
    r = 0
    for col in range(cols):
        hit = np.flatnonzero(aug[r:, col])
        if hit.size == 0:
            continue
        p = r + hit[0]
        aug[[r, p]] = aug[[p, r]]
        for k in np.flatnonzero(aug[:, col]):
            if k != r:
                aug[k] ^= aug[r]
        pivots.append(col)
        r += 1
        if r == rows:
            break
    if np.any(aug[r:, -1]):
        raise ValueError("inconsistent F2 system")
    x = np.zeros(cols, dtype=np.uint8)
    for k, col in enumerate(pivots):
        x[col] = aug[k, -1]
    return x


def synthesize_stream(config: WindowConfig, error) -> tuple[list[StreamEvent], np.ndarray]:
    """Detector stream for a full-history error, closed by a codeword.

    The first ``T - 1`` detector blocks are sent as-is.  The codeword ``c``
    is chosen so that its noiseless syndrome reproduces the last detector
    block and its read-out equals the logical action of the error (for the
    identity closure: ``c`` is the last syndrome).  Returns the events and
    the observables a perfect decoder would report, ``L c xor A e``.
    """
    model = config.model
    e = np.asarray(error, dtype=np.uint8)
    h = model.dense_check_matrix()
    a = model.dense_action_matrix()
    dets = _f2(h, e)
    mp = config.det_per_cycle
    blocks = dets.reshape(config.cycles, mp)
    final_syndrome = np.bitwise_xor.reduce(blocks, axis=0)
    logical = _f2(a, e)
    hq, lq = config.closure.noiseless_check, config.closure.logical_readout
    if lq.any():
        c = gf2_solve(np.vstack([hq, lq]), np.concatenate([final_syndrome, logical]))
    else:
        c = gf2_solve(hq, final_syndrome)
    events = [StreamEvent.detectors(b) for b in blocks[:-1]]
    events.append(StreamEvent.codeword(c))
    expected = _f2(lq, c) ^ logical
    return events, expected


def _bits(text: str) -> np.ndarray:
    if text and set(text) <= {"0", "1"}:
        return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")
    raise WindowError(f"bad bit string {text!r}")


def read_stream(lines: Iterable[str]) -> Iterator[StreamEvent]:
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "END":
            yield StreamEvent.end()
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("d", "c"):
            raise WindowError(f"line {lineno}: expected 'd <bits>', 'c <bits>' or 'END'")
        yield StreamEvent(parts[0], _bits(parts[1]))


def _bitstr(v) -> str:
    return "".join(str(int(b)) for b in v)


def write_stream(events: Iterable[StreamEvent], out: TextIO) -> None:
    for ev in events:
        out.write("END\n" if ev.kind == "end" else f"{ev.kind} {_bitstr(ev.bits)}\n")


def write_window_report(state: WindowState, frame, ocorr, out: TextIO) -> None:
    for rec in state.records:
        out.write(f"win {rec.start} converged={int(rec.converged)} iters={rec.iterations}\n")
    out.write(f"frame {_bitstr(frame)}\n")
    out.write(f"ocorr {_bitstr(ocorr)}\n")
