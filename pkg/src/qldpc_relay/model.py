"""Decoding problems: check matrix H, logical action matrix A and priors p.

A model is stored as sparse adjacency lists in both directions.  The flat
edge-indexed routing arrays used by the decoders are derived once per model
(:func:`build_interconnect`) and cached on the instance.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ModelError",
    "CycleLayout",
    "Closure",
    "DecodingModel",
    "Interconnect",
    "build_interconnect",
    "llr_weight",
    "apply_check_matrix",
    "apply_action_matrix",
    "solution_weight",
    "load_model",
    "save_model",
    "parse_model",
    "render_model",
    "gen_single_shot_code",
    "gen_memory_code",
]

HEADER_TAG = "qldpc-model"
FORMAT_VERSION = "v1"


class ModelError(ValueError):
    """Raised for malformed model files and invariant violations."""


def llr_weight(p: float) -> float:
    """Natural-log likelihood ratio ``ln((1-p)/p)`` of an error with prior ``p``."""
    if not 0.0 < p < 0.5:
        raise ValueError(f"prior must lie in the open interval (0, 1/2), got {p!r}")
    return math.log((1.0 - p) / p)


@dataclass(frozen=True, eq=False)
class Closure:
    """Noiseless read-out of the code block that terminates a memory stream.

    ``noiseless_check`` is the M'-by-n_q matrix that turns the final codeword
    into a syndrome; ``logical_readout`` is the K-by-n_q matrix that turns it
    into logical observables.
    """

    noiseless_check: np.ndarray
    logical_readout: np.ndarray

    @property
    def num_qubits(self) -> int:
        return self.noiseless_check.shape[1]


@dataclass(frozen=True, eq=False)
class CycleLayout:
    """Assignment of detectors and error columns to syndrome cycles."""

    cycles: int
    det_per_cycle: int
    column_cycle: np.ndarray
    closure: Closure | None = None

    def detector_cycle(self, i: int) -> int:
        return i // self.det_per_cycle


@dataclass(frozen=True, eq=False)
class DecodingModel:
    """Immutable decoding problem (H, A, p) with derived LLR weights."""

    num_checks: int
    num_errors: int
    num_logicals: int
    check_adjacency: tuple[tuple[int, ...], ...]
    error_adjacency: tuple[tuple[int, ...], ...]
    logical_rows: tuple[tuple[int, ...], ...]
    priors: np.ndarray
    weights: np.ndarray = field(repr=False)
    layout: CycleLayout | None = None

    @classmethod
    def from_columns(
        cls,
        num_checks: int,
        num_logicals: int,
        columns: Sequence[Sequence[int]],
        logical_columns: Sequence[Sequence[int]],
        priors: Sequence[float],
        layout: CycleLayout | None = None,
    ) -> "DecodingModel":
        """Build a model from per-error check and logical incidence lists."""
        n = len(columns)
        if len(logical_columns) != n or len(priors) != n:
            raise ModelError("columns, logical_columns and priors must have equal length")
        err_adj = []
        check_lists: list[list[int]] = [[] for _ in range(num_checks)]
        logical_lists: list[list[int]] = [[] for _ in range(num_logicals)]
        for j, col in enumerate(columns):
            rows = sorted(col)
            if len(set(rows)) != len(rows):
                raise ModelError(f"error {j}: duplicate check index")
            for i in rows:
                if not 0 <= i < num_checks:
                    raise ModelError(f"error {j}: check index {i} out of range")
                check_lists[i].append(j)
            err_adj.append(tuple(rows))
            lrows = sorted(logical_columns[j])
            if len(set(lrows)) != len(lrows):
                raise ModelError(f"error {j}: duplicate logical index")
            for k in lrows:
                if not 0 <= k < num_logicals:
                    raise ModelError(f"error {j}: logical index {k} out of range")
                logical_lists[k].append(j)
        p = np.array(priors, dtype=np.float64)
        bad = ~((p > 0.0) & (p < 0.5))
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise ModelError(f"error {j}: prior {p[j]!r} outside (0, 1/2)")
        w = np.log((1.0 - p) / p)
        p.setflags(write=False)
        w.setflags(write=False)
        model = cls(
            num_checks=num_checks,
            num_errors=n,
            num_logicals=num_logicals,
            check_adjacency=tuple(tuple(c) for c in check_lists),
            error_adjacency=tuple(err_adj),
            logical_rows=tuple(tuple(r) for r in logical_lists),
            priors=p,
            weights=w,
            layout=layout,
        )
        model.validate()
        return model

    def validate(self) -> None:
        """Check shape, ordering and transpose-consistency invariants."""
        if len(self.check_adjacency) != self.num_checks:
            raise ModelError("check_adjacency length differs from M")
        if len(self.error_adjacency) != self.num_errors:
            raise ModelError("error_adjacency length differs from N")
        if len(self.logical_rows) != self.num_logicals:
            raise ModelError("logical_rows length differs from K")
        for lists in (self.check_adjacency, self.error_adjacency, self.logical_rows):
            for adj in lists:
                if any(b <= a for a, b in zip(adj, adj[1:])):
                    raise ModelError("adjacency lists must be strictly increasing")
        forward = {(i, j) for i, row in enumerate(self.check_adjacency) for j in row}
        backward = {(i, j) for j, col in enumerate(self.error_adjacency) for i in col}
        if forward != backward:
            raise ModelError("check and error adjacency are not transposes of each other")
        if self.priors.shape != (self.num_errors,) or self.weights.shape != (self.num_errors,):
            raise ModelError("priors/weights length differs from N")
        if self.layout is not None:
            lay = self.layout
            if lay.cycles * lay.det_per_cycle != self.num_checks:
                raise ModelError("layout cycles * det_per_cycle must equal M")
            if lay.column_cycle.shape != (self.num_errors,):
                raise ModelError("layout column_cycle length differs from N")
            if lay.column_cycle.size and (lay.column_cycle.min() < 0 or lay.column_cycle.max() >= lay.cycles):
                raise ModelError("column cycle out of range")

    @property
    def num_edges(self) -> int:
        return sum(len(c) for c in self.check_adjacency)

    @cached_property
    def interconnect(self) -> "Interconnect":
        return build_interconnect(self)

    @cached_property
    def logical_ptr_idx(self) -> tuple[np.ndarray, np.ndarray]:
        ptr = np.zeros(self.num_logicals + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(r) for r in self.logical_rows])
        idx = np.array([j for r in self.logical_rows for j in r], dtype=np.int64)
        return ptr, idx

    def dense_check_matrix(self) -> np.ndarray:
        h = np.zeros((self.num_checks, self.num_errors), dtype=np.uint8)
        for i, row in enumerate(self.check_adjacency):
            h[i, list(row)] = 1
        return h

    def dense_action_matrix(self) -> np.ndarray:
        a = np.zeros((self.num_logicals, self.num_errors), dtype=np.uint8)
        for k, row in enumerate(self.logical_rows):
            a[k, list(row)] = 1
        return a

    def with_priors(self, priors: Sequence[float] | float) -> "DecodingModel":
        """Same graph and layout, new priors."""
        p = np.broadcast_to(np.asarray(priors, dtype=np.float64), (self.num_errors,))
        return DecodingModel.from_columns(
            self.num_checks,
            self.num_logicals,
            self.error_adjacency,
            self._logical_columns(),
            p.tolist(),
            layout=self.layout,
        )

    def _logical_columns(self) -> list[list[int]]:
        cols: list[list[int]] = [[] for _ in range(self.num_errors)]
        for k, row in enumerate(self.logical_rows):
            for j in row:
                cols[j].append(k)
        return cols

    def submodel(self, rows: Sequence[int], cols: Sequence[int]) -> "DecodingModel":
        """Restriction to the given check rows and error columns (order preserved).

        Incidences on rows outside ``rows`` are dropped.
        """
        row_pos = {r: k for k, r in enumerate(rows)}
        lcols = self._logical_columns()
        columns = [[row_pos[i] for i in self.error_adjacency[j] if i in row_pos] for j in cols]
        return DecodingModel.from_columns(
            len(rows),
            self.num_logicals,
            columns,
            [lcols[j] for j in cols],
            [float(self.priors[j]) for j in cols],
        )


@dataclass(frozen=True, eq=False)
class Interconnect:
    """Flat routing tables for the decoder datapaths.

    Edges are numbered in check-major order: the edges of check ``i`` are
    ``check_ptr[i]:check_ptr[i+1]`` and ``edge_error[e]`` is the error at the
    far end of edge ``e``.  For error ``j`` the edges in increasing check order
    are ``error_edges[error_ptr[j]:error_ptr[j+1]]``.
    """

    check_ptr: np.ndarray
    edge_error: np.ndarray
    edge_check: np.ndarray
    error_ptr: np.ndarray
    error_edges: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.edge_error.size)

    def check_adjacency(self) -> list[list[int]]:
        return [self.edge_error[self.check_ptr[i]:self.check_ptr[i + 1]].tolist()
                for i in range(self.check_ptr.size - 1)]

    def error_adjacency(self) -> list[list[int]]:
        return [self.edge_check[self.error_edges[self.error_ptr[j]:self.error_ptr[j + 1]]].tolist()
                for j in range(self.error_ptr.size - 1)]


def build_interconnect(model: DecodingModel) -> Interconnect:
    m, n = model.num_checks, model.num_errors
    check_ptr = np.zeros(m + 1, dtype=np.int64)
    check_ptr[1:] = np.cumsum([len(c) for c in model.check_adjacency])
    edge_error = np.array([j for c in model.check_adjacency for j in c], dtype=np.int64)
    edge_check = np.repeat(np.arange(m, dtype=np.int64), np.diff(check_ptr))
    error_ptr = np.zeros(n + 1, dtype=np.int64)
    error_ptr[1:] = np.cumsum([len(c) for c in model.error_adjacency])
    # stable sort by error keeps increasing check order within each error
    error_edges = np.argsort(edge_error, kind="stable").astype(np.int64)
    for arr in (check_ptr, edge_error, edge_check, error_ptr, error_edges):
        arr.setflags(write=False)
    return Interconnect(check_ptr, edge_error, edge_check, error_ptr, error_edges)


def _as_bits(v, length: int, what: str) -> np.ndarray:
    bits = np.asarray(v, dtype=np.uint8)
    if bits.shape != (length,):
        raise ValueError(f"{what} has length {bits.shape}, expected {length}")
    return bits


def apply_check_matrix(model: DecodingModel, e) -> np.ndarray:
    """Syndrome ``H e`` over F2."""
    e = _as_bits(e, model.num_errors, "error vector")
    return np.array([sum(int(e[j]) for j in row) & 1 for row in model.check_adjacency], dtype=np.uint8)


def apply_action_matrix(model: DecodingModel, e) -> np.ndarray:
    """Logical action ``A e`` over F2."""
    e = _as_bits(e, model.num_errors, "error vector")
    return np.array([sum(int(e[j]) for j in row) & 1 for row in model.logical_rows], dtype=np.uint8)


def solution_weight(model: DecodingModel, e) -> float:
    """Sum of LLR weights over the set bits of ``e``, accumulated in index order."""
    e = _as_bits(e, model.num_errors, "error vector")
    w = 0.0
    for j in np.flatnonzero(e):
        w += float(model.weights[j])
    return w


# ---------------------------------------------------------------------------
# file format

_HEADER_RE = re.compile(
    rf"^{HEADER_TAG}\s+{FORMAT_VERSION}\s+M=(\d+)\s+N=(\d+)\s+K=(\d+)"
    r"(?:\s+cycles=(\d+)\s+det_per_cycle=(\d+)(?:\s+nq=(\d+))?)?\s*$"
)
# Optional closure rows: ``q <i> H:<qubits>`` (noiseless check row i) and
# ``l <k> L:<qubits>`` (logical read-out row k), both over the nq code qubits.
_CLOSURE_RE = re.compile(r"^([ql])\s+(\d+)\s+([HL]):(.*?)\s*$")
_ERROR_RE = re.compile(r"^e\s+(\d+)\s+p=(\S+)\s+H:(.*?)\s*A:(.*?)(?:\s+cycle=(\d+))?\s*$")


def _indices(text: str, lineno: int) -> list[int]:
    try:
        return [int(tok) for tok in text.split()]
    except ValueError:
        raise ModelError(f"line {lineno}: bad index list {text!r}") from None


def parse_model(text: str) -> DecodingModel:
    """Parse the plain-text sparse model format."""
    header = None
    entries: dict[int, tuple] = {}
    closure_rows: dict[str, dict[int, list[int]]] = {"q": {}, "l": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            mh = _HEADER_RE.match(line)
            if mh is None:
                raise ModelError(f"line {lineno}: expected '{HEADER_TAG} {FORMAT_VERSION} M=.. N=.. K=..' header")
            header = mh
            continue
        mc = _CLOSURE_RE.match(line)
        if mc is not None:
            kind, idx, tag = mc.group(1), int(mc.group(2)), mc.group(3)
            if (kind, tag) not in (("q", "H"), ("l", "L")):
                raise ModelError(f"line {lineno}: malformed closure line {raw!r}")
            if idx in closure_rows[kind]:
                raise ModelError(f"line {lineno}: duplicate closure row {kind} {idx}")
            closure_rows[kind][idx] = _indices(mc.group(4), lineno)
            continue
        me = _ERROR_RE.match(line)
        if me is None:
            raise ModelError(f"line {lineno}: malformed error line {raw!r}")
        j = int(me.group(1))
        if j in entries:
            raise ModelError(f"line {lineno}: duplicate error index {j}")
        try:
            p = float(me.group(2))
        except ValueError:
            raise ModelError(f"line {lineno}: bad probability {me.group(2)!r}") from None
        cyc = None if me.group(5) is None else int(me.group(5))
        entries[j] = (p, _indices(me.group(3), lineno), _indices(me.group(4), lineno), cyc)
    if header is None:
        raise ModelError("empty model file")
    m, n, k = (int(header.group(g)) for g in (1, 2, 3))
    if sorted(entries) != list(range(n)):
        raise ModelError(f"expected error lines 0..{n - 1}, got {len(entries)} entries")
    layout = None
    if header.group(4) is not None:
        cycles, dpc = int(header.group(4)), int(header.group(5))
        if any(entries[j][3] is None for j in range(n)):
            raise ModelError("cycle layout declared but some error lines lack cycle=")
        closure = _parse_closure(closure_rows, header.group(6), dpc, k)
        layout = CycleLayout(cycles, dpc, np.array([entries[j][3] for j in range(n)], dtype=np.int64),
                             closure=closure)
    elif closure_rows["q"] or closure_rows["l"]:
        raise ModelError("closure rows need a cycle layout with nq= in the header")
    return DecodingModel.from_columns(
        m, k,
        [entries[j][1] for j in range(n)],
        [entries[j][2] for j in range(n)],
        [entries[j][0] for j in range(n)],
        layout=layout,
    )


def _parse_closure(rows: dict, nq_text: str | None, dpc: int, k: int) -> Closure | None:
    if nq_text is None:
        if rows["q"] or rows["l"]:
            raise ModelError("closure rows present but header lacks nq=")
        return None
    nq = int(nq_text)
    if sorted(rows["q"]) != list(range(dpc)) or sorted(rows["l"]) != list(range(k)):
        raise ModelError(f"closure needs q rows 0..{dpc - 1} and l rows 0..{k - 1}")
    hq = np.zeros((dpc, nq), dtype=np.uint8)
    lq = np.zeros((k, nq), dtype=np.uint8)
    for mat, kind in ((hq, "q"), (lq, "l")):
        for i, cols in rows[kind].items():
            for c in cols:
                if not 0 <= c < nq:
                    raise ModelError(f"closure qubit index {c} out of range [0, {nq})")
                mat[i, c] ^= 1
    return Closure(hq, lq)


def render_model(model: DecodingModel) -> str:
    head = f"{HEADER_TAG} {FORMAT_VERSION} M={model.num_checks} N={model.num_errors} K={model.num_logicals}"
    lay = model.layout
    if lay is not None:
        head += f" cycles={lay.cycles} det_per_cycle={lay.det_per_cycle}"
        if lay.closure is not None:
            head += f" nq={lay.closure.num_qubits}"
    lines = [head]
    if lay is not None and lay.closure is not None:
        for kind, tag, mat in (("q", "H", lay.closure.noiseless_check), ("l", "L", lay.closure.logical_readout)):
            for i, row in enumerate(mat):
                lines.append(f"{kind} {i} {tag}:" + " ".join(map(str, np.flatnonzero(row))))
    lcols = model._logical_columns()
    for j in range(model.num_errors):
        h = " ".join(map(str, model.error_adjacency[j]))
        a = " ".join(map(str, lcols[j]))
        line = f"e {j} p={float(model.priors[j])!r} H:{h} A:{a}"
        if lay is not None:
            line += f" cycle={int(lay.column_cycle[j])}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def load_model(path: str | Path, format: str = "qldpc-model-v1") -> DecodingModel:
    if format != "qldpc-model-v1":
        raise ModelError(f"unknown model format {format!r}")
    return parse_model(Path(path).read_text(encoding="utf-8"))


def save_model(model: DecodingModel, path: str | Path) -> None:
    Path(path).write_text(render_model(model), encoding="utf-8")


# ---------------------------------------------------------------------------
# built-in codes

def _repetition_checks(n: int) -> np.ndarray:
    h = np.zeros((n - 1, n), dtype=np.uint8)
    for i in range(n - 1):
        h[i, i] = h[i, i + 1] = 1
    return h


def gen_single_shot_code(n: int, p: float = 0.1) -> DecodingModel:
    """Bit-flip repetition code on ``n`` bits with perfect syndrome read-out.

    Check ``i`` compares bits ``i`` and ``i+1``; the single logical row marks
    bit 0, the column crossing the cut that separates the two logical classes.
    """
    if not 2 <= n <= 24:
        raise ValueError(f"n must be in [2, 24], got {n}")
    columns = [[i for i in (j - 1, j) if 0 <= i < n - 1] for j in range(n)]
    logicals = [[0] if j == 0 else [] for j in range(n)]
    return DecodingModel.from_columns(n - 1, 1, columns, logicals, [p] * n)


def gen_memory_code(n: int, cycles: int, p_data: float, p_meas: float) -> DecodingModel:
    """Phenomenological repetition-code memory over ``cycles`` rounds.

    Detector ``t*(n-1) + i`` is the syndrome difference of check ``i`` between
    rounds ``t-1`` and ``t``.  Per cycle there are ``n`` data-error columns
    (touching only that cycle's detectors) followed by ``n-1``
    measurement-error columns (touching check ``i`` in cycles ``t`` and
    ``t+1``; degree 1 in the last cycle).  The logical row marks data errors
    on bit 0 in every cycle.  The returned layout carries the repetition-code
    closure used to terminate detector streams with a codeword.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if cycles < 1:
        raise ValueError(f"cycles must be >= 1, got {cycles}")
    mp = n - 1
    columns, logicals, priors, col_cycle = [], [], [], []
    for t in range(cycles):
        base = t * mp
        for q in range(n):
            columns.append([base + i for i in (q - 1, q) if 0 <= i < mp])
            logicals.append([0] if q == 0 else [])
            priors.append(p_data)
            col_cycle.append(t)
        for i in range(mp):
            col = [base + i]
            if t + 1 < cycles:
                col.append(base + mp + i)
            columns.append(col)
            logicals.append([])
            priors.append(p_meas)
            col_cycle.append(t)
    readout = np.zeros((1, n), dtype=np.uint8)
    readout[0, 0] = 1
    layout = CycleLayout(
        cycles, mp, np.array(col_cycle, dtype=np.int64),
        closure=Closure(_repetition_checks(n), readout),
    )
    return DecodingModel.from_columns(cycles * mp, 1, columns, logicals, priors, layout=layout)
