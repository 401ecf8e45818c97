"""Command-line front end.

Exit codes: 0 success, 1 usage / I/O / parse error (or verification
mismatch), 2 decoder non-convergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, TextIO

import numpy as np

from . import __version__
from .bench import (CSV_COLUMNS, TimingModel, csv_row, realtime_budget, run_shots, run_windowed_shots,
                    sample_error)
from .bp_ref import DecodeOutcome, RelayConfig, dmem_bp_leg, relay_decode
from .gateware import gateware_decode, write_trace_csv
from .model import (DecodingModel, ModelError, apply_check_matrix, gen_memory_code, gen_single_shot_code,
                    load_model, parse_model, render_model, save_model)
from .prng import shot_seed
from .qarith import PrecisionSpec, parse_precision
from .reference import fixed_point_relay_decode, plain_min_sum_f64, plain_min_sum_fixed
from .window import (SlidingWindowDecoder, WindowError, build_window_model, make_decoder, read_stream,
                     synthesize_stream, write_stream, write_window_report)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGED = 2

DEFAULT_VERIFY_MODEL = "mem:3:3:0.05:0.05"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _DefaultsFormatter(argparse.ArgumentDefaultsHelpFormatter):
    # options whose default is "absent" describe it in their own help text
    def _get_help_string(self, action):
        if action.default is None or action.default is False:
            return action.help
        return super()._get_help_string(action)


# ---------------------------------------------------------------------------
# argument helpers

def parse_gen(text: str) -> DecodingModel:
    """``rep:<n>:<p>`` or ``mem:<n>:<T>:<pdata>:<pmeas>``."""
    parts = text.split(":")
    try:
        if parts[0] == "rep" and len(parts) == 3:
            return gen_single_shot_code(int(parts[1]), float(parts[2]))
        if parts[0] == "mem" and len(parts) == 5:
            return gen_memory_code(int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4]))
    except ValueError as exc:
        raise UsageError(f"bad generator spec {text!r}: {exc}") from exc
    raise UsageError(f"bad generator spec {text!r}; expected rep:n:p or mem:n:T:pdata:pmeas")


def parse_bits(text: str, length: int | None = None, what: str = "bit string") -> np.ndarray:
    s = "".join(text.split())
    if not s or set(s) - {"0", "1"}:
        raise UsageError(f"malformed {what}: expected only 0/1 characters")
    bits = np.frombuffer(s.encode(), dtype=np.uint8) - ord("0")
    if length is not None and bits.size != length:
        raise UsageError(f"{what} has {bits.size} bits, model expects {length}")
    return bits


def parse_precision_arg(text: str) -> PrecisionSpec | None:
    if text == "f64":
        return None
    try:
        return parse_precision(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def precision_label(spec: PrecisionSpec | None) -> str:
    return "f64" if spec is None else spec.render()


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def load_model_arg(args) -> DecodingModel:
    if args.model and args.gen:
        raise UsageError("--model and --gen are mutually exclusive")
    if args.model:
        try:
            return load_model(args.model)
        except OSError as exc:
            raise UsageError(f"cannot read model: {exc}") from exc
    if args.gen:
        return parse_gen(args.gen)
    default = getattr(args, "default_model", None)
    if default:
        return parse_gen(default)
    raise UsageError("one of --model or --gen is required")


def relay_config(args) -> RelayConfig:
    try:
        return RelayConfig(
            solutions_sought=args.solutions, max_legs=args.legs, iters_leg0=args.t0, iters_leg=args.tr,
            gamma0=args.gamma0, gamma_min=args.gamma_min, gamma_max=args.gamma_max,
            alpha_enabled=args.alpha == "on", seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def timing_model(args) -> TimingModel:
    try:
        return TimingModel(args.iter_ns, args.cycle_ns, args.overhead_ns)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


@contextmanager
def _output(path: str | None) -> Iterator[TextIO]:
    if path is None or path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc
    with fh:
        yield fh


def _bitstr(v) -> str:
    return "".join(str(int(b)) for b in v)


# ---------------------------------------------------------------------------
# decode

def _f64_trace_rows(leg_traces: list) -> list:
    rows = []
    total = 0
    for leg in leg_traces:
        for step in leg:
            rows.append((total + step["t"], step["marginal"], step["ehat"], False))
        total += len(leg)
    return rows


def _decode(model, syndrome, config, spec, trace=None) -> DecodeOutcome:
    if spec is None:
        return relay_decode(model, syndrome, config, trace=trace)
    return gateware_decode(model, syndrome, config, spec, trace=trace)


def cmd_decode(args) -> int:
    model = load_model_arg(args)
    spec = parse_precision_arg(args.precision)
    config = relay_config(args)
    if args.stream:
        return _decode_stream(args, model, config, spec)
    if args.syndrome is not None and args.syndrome_file is not None:
        raise UsageError("--syndrome and --syndrome-file are mutually exclusive")
    if args.syndrome_file is not None:
        try:
            text = Path(args.syndrome_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read syndrome: {exc}") from exc
    elif args.syndrome is not None:
        text = args.syndrome
    else:
        raise UsageError("decode needs --syndrome, --syndrome-file or --stream")
    syndrome = parse_bits(text, model.num_checks, "syndrome")
    trace = [] if args.trace else None
    out = _decode(model, syndrome, config, spec, trace)
    if args.trace:
        rows = _f64_trace_rows(trace) if spec is None else trace
        with _output(args.trace) as fh:
            write_trace_csv(rows, fh)
    support = " ".join(str(j) for j in np.flatnonzero(out.error_estimate))
    with _output(args.out) as fh:
        fh.write(f"converged={int(out.converged)}\n")
        fh.write(f"iterations={out.iterations_total}\n")
        fh.write(f"legs={out.legs_used}\n")
        fh.write(f"solutions={out.solutions_found}\n")
        fh.write(f"weight={out.weight:.6f}\n")
        fh.write(f"support={support}\n")
    return EXIT_OK if out.converged else EXIT_NONCONVERGED


def _decode_stream(args, model, config, spec) -> int:
    try:
        wcfg = build_window_model(model, args.window, args.commit, carry=args.carry)
        lines = Path(args.stream).read_text(encoding="utf-8").splitlines()
        dec = SlidingWindowDecoder(wcfg, make_decoder(config, spec))
        frame, ocorr = dec.run(read_stream(lines))
    except OSError as exc:
        raise UsageError(f"cannot read stream: {exc}") from exc
    except (WindowError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    with _output(args.out) as fh:
        write_window_report(dec.state, frame, ocorr, fh)
    return EXIT_OK if all(r.converged for r in dec.state.records) else EXIT_NONCONVERGED


# ---------------------------------------------------------------------------
# bench / window-bench

def _sweep(args, model: DecodingModel):
    specs = [(label, parse_precision_arg(label)) for label in _csv_list(args.precision)]
    if not specs:
        raise UsageError("--precision list is empty")
    variants = _csv_list(args.variant)
    for v in variants:
        if v not in ("bp", "dmem", "relay"):
            raise UsageError(f"unknown variant {v!r}; choose from bp, dmem, relay")
    if args.p:
        try:
            ps = [float(x) for x in _csv_list(args.p)]
        except ValueError as exc:
            raise UsageError(f"bad --p list: {exc}") from exc
        points = []
        for p in ps:
            try:
                points.append((f"{p:.6g}", model.with_priors(p)))
            except (ModelError, ValueError) as exc:
                raise UsageError(str(exc)) from exc
    else:
        pri = np.unique(model.priors)
        points = [(f"{pri[0]:.6g}" if pri.size == 1 else "model", model)]
    base = relay_config(args)
    for p_label, m in points:
        for label, spec in specs:
            for v in variants:
                yield p_label, m, precision_label(spec), spec, v, base.variant(v)


def _emit(args, rows: list[str]) -> None:
    with _output(args.out) as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in rows:
            fh.write(r + "\n")


def cmd_bench(args) -> int:
    model = load_model_arg(args)
    timing = timing_model(args)
    points = list(_sweep(args, model))
    rows = []
    for p_label, m, plabel, spec, v, cfg in points:
        rep = run_shots(m, cfg, spec, args.shots, args.seed, threads=args.threads, timing=timing)
        rows.append(csv_row(p_label, plabel, v, rep))
        print(f"p={p_label} {plabel} {v}: {rep.failures}/{rep.shots} failures, "
              f"mean iters {rep.mean_iterations:.2f}", file=sys.stderr)
    _emit(args, rows)
    return EXIT_OK


def cmd_window_bench(args) -> int:
    model = load_model_arg(args)
    if model.layout is None:
        raise UsageError("window-bench needs a model with a cycle layout")
    if not 1 <= args.commit < args.window:
        raise UsageError("window-bench needs 1 <= --commit < --window")
    timing = timing_model(args)
    points = list(_sweep(args, model))
    budget = realtime_budget(timing, args.window, args.commit)
    rows = []
    for p_label, m, plabel, spec, v, cfg in points:
        rep = run_windowed_shots(m, args.window, args.commit, cfg, spec, args.shots, args.seed,
                                 threads=args.threads, carry=args.carry, timing=timing)
        rows.append(csv_row(p_label, plabel, v, rep))
        print(f"p={p_label} {plabel} {v}: {rep.failures}/{rep.shots} failures, "
              f"{rep.windows_converged}/{rep.windows} windows converged, budget {budget} iterations",
              file=sys.stderr)
    _emit(args, rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def compare_outcomes(a: DecodeOutcome, b: DecodeOutcome) -> list[str]:
    """Names of the fields on which two decode outcomes differ."""
    diffs = []
    if a.converged != b.converged:
        diffs.append("converged")
    if not np.array_equal(a.error_estimate, b.error_estimate):
        diffs.append("error_estimate")
    if not np.array_equal(np.asarray(a.marginals), np.asarray(b.marginals)):
        diffs.append("marginals")
    if tuple(a.per_leg_iterations) != tuple(b.per_leg_iterations):
        diffs.append("iterations")
    if a.legs_used != b.legs_used:
        diffs.append("legs")
    return diffs


def _verify_syndrome(model: DecodingModel, trial: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(shot_seed(seed, trial))
    if trial % 2:
        return rng.integers(0, 2, model.num_checks, dtype=np.uint8)
    return apply_check_matrix(model, sample_error(model, rng))


def verify_case(model, syndrome, config, spec, perturb_order: bool = False) -> list[str]:
    fast = gateware_decode(model, syndrome, config, spec, reverse_sum=perturb_order)
    slow = fixed_point_relay_decode(model, syndrome, config, spec)
    return compare_outcomes(fast, slow)


def reduction_check(model: DecodingModel, syndrome, spec: PrecisionSpec, iters: int, alpha: bool) -> bool:
    """gamma = 0 single leg equals textbook min-sum, in f64 and fixed point."""
    ref = plain_min_sum_f64(model, syndrome, iters, alpha)
    trace: list = []
    dmem_bp_leg(model, syndrome, np.zeros(model.num_errors), iters, alpha_enabled=alpha, trace=trace)
    if len(ref) != len(trace):
        return False
    for a, b in zip(ref, trace):
        if list(b["marginal"]) != a["marginal"]:
            return False
    fixed = plain_min_sum_fixed(model, syndrome, spec, iters, alpha)
    gw: list = []
    cfg = RelayConfig(solutions_sought=1, max_legs=1, iters_leg0=iters, gamma0=0.0, alpha_enabled=alpha)
    gateware_decode(model, syndrome, cfg, spec, trace=gw)
    if len(fixed) != len(gw):
        return False
    return all(list(int(x) for x in g[1]) == f["marginal"] for f, g in zip(fixed, gw))


def _dump_case(path: str, model, syndrome, config: RelayConfig, spec: PrecisionSpec, perturb: bool,
               diffs: list[str]) -> None:
    payload = {
        "model": render_model(model),
        "syndrome": _bitstr(syndrome),
        "seed": config.seed,
        "precision": spec.render(),
        "config": dataclasses.asdict(config),
        "perturb_order": perturb,
        "mismatch": diffs,
    }
    with _output(path) as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _replay(path: str) -> int:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        model = parse_model(payload["model"])
        config = RelayConfig(**payload["config"])
        spec = parse_precision(payload["precision"])
        syndrome = parse_bits(payload["syndrome"], model.num_checks, "syndrome")
        perturb = bool(payload.get("perturb_order", False))
    except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot replay {path}: {exc}") from exc
    diffs = verify_case(model, syndrome, config, spec, perturb)
    if diffs:
        print(f"replay: mismatch reproduced in {', '.join(diffs)}")
        return EXIT_USAGE
    print("replay: no mismatch")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.replay:
        return _replay(args.replay)
    args.default_model = DEFAULT_VERIFY_MODEL
    model = load_model_arg(args)
    spec = parse_precision_arg(args.precision)
    if spec is None:
        raise UsageError("verify compares fixed-point paths; pass an intN.S.M precision")
    base = relay_config(args)
    mismatches = 0
    first = None
    for trial in range(args.trials):
        syn = _verify_syndrome(model, trial, args.seed)
        cfg = base.with_seed(shot_seed(args.seed, trial))
        diffs = verify_case(model, syn, cfg, spec, args.perturb_order)
        if diffs:
            mismatches += 1
            if first is None:
                first = (syn, cfg, diffs)
    reductions_ok = 0
    n_red = min(args.trials, 20)
    for trial in range(n_red):
        syn = _verify_syndrome(model, trial, args.seed ^ 0x5EED)
        reductions_ok += reduction_check(model, syn, spec, 20, base.alpha_enabled)
    print(f"dual-path trials={args.trials} mismatches={mismatches}")
    print(f"gamma0 reduction checks={n_red} passed={reductions_ok}")
    if first is not None:
        syn, cfg, diffs = first
        dump = args.dump or "verify_mismatch.json"
        _dump_case(dump, model, syn, cfg, spec, args.perturb_order, diffs)
        print(f"first mismatch ({', '.join(diffs)}) written to {dump}")
    return EXIT_OK if mismatches == 0 and reductions_ok == n_red else EXIT_USAGE


# ---------------------------------------------------------------------------
# gen

def cmd_gen(args) -> int:
    model = load_model_arg(args)
    if args.out:
        try:
            save_model(model, args.out)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(render_model(model))
    if args.stream_out:
        if model.layout is None:
            raise UsageError("--stream-out needs a model with a cycle layout")
        wcfg = build_window_model(model, max(2, model.layout.cycles), 1)
        e = sample_error(model, np.random.default_rng(shot_seed(args.seed, 0)))
        events, expected = synthesize_stream(wcfg, e)
        with _output(args.stream_out) as fh:
            write_stream(events, fh)
            fh.write("END\n")
        print(f"stream written; noiseless observables {_bitstr(expected)}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", default=None, help="model file (qldpc-model-v1 text)")
    g.add_argument("--gen", default=None, help="built-in generator: rep:<n>:<p> or mem:<n>:<T>:<pdata>:<pmeas>")


def _add_decoder_flags(p, precision_default="f64"):
    g = p.add_argument_group("decoder")
    g.add_argument("--precision", default=precision_default,
                   help="f64 or intN.S.M (optionally intN.S.M/wB)")
    g.add_argument("--gamma0", type=float, default=0.125, help="uniform memory strength of leg 0")
    g.add_argument("--gamma-min", type=float, default=-0.24, help="lower end of per-node memory strengths")
    g.add_argument("--gamma-max", type=float, default=0.66, help="upper end of per-node memory strengths")
    g.add_argument("--t0", type=int, default=80, help="iteration limit of leg 0")
    g.add_argument("--tr", type=int, default=60, help="iteration limit of later legs")
    g.add_argument("--legs", type=int, default=600, help="maximum number of legs, leg 0 included")
    g.add_argument("--solutions", type=int, default=5, help="stop after this many converged legs")
    g.add_argument("--alpha", choices=("on", "off"), default="on", help="min-sum scaling 1 - 2^-t")
    g.add_argument("--seed", type=int, default=0, help="master seed")


def _add_timing_flags(p):
    g = p.add_argument_group("timing")
    g.add_argument("--iter-ns", type=float, default=24.0, help="duration of one BP iteration")
    g.add_argument("--cycle-ns", type=float, default=1000.0, help="syndrome cycle duration")
    g.add_argument("--overhead-ns", type=float, default=0.0, help="fixed per-window overhead")


def _add_window_flags(p, window_default=5, commit_default=2):
    g = p.add_argument_group("window")
    g.add_argument("--window", type=int, default=window_default, help="window width W in cycles")
    g.add_argument("--commit", type=int, default=commit_default, help="commit width C in cycles")
    g.add_argument("--carry", choices=("full", "single"), default="full",
                   help="carry the whole detector residual past the commit region, or one block")


def _add_sweep_flags(p):
    p.add_argument("--p", default=None, help="comma list of uniform error rates (default: model priors)")
    p.add_argument("--variant", default="relay", help="comma list of bp, dmem, relay")
    p.add_argument("--shots", type=int, default=10000, help="shots per sweep point")
    p.add_argument("--threads", type=int, default=1, help="worker threads; output does not depend on it")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    fmt = _DefaultsFormatter
    parser = _Parser(prog="qldpc-relay", formatter_class=fmt,
                     description="Relay-BP decoding, fixed-point emulation and sliding-window benchmarks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decode", formatter_class=fmt, help="decode one syndrome or replay a detector stream")
    _add_model_flags(p)
    _add_decoder_flags(p)
    p.add_argument("--syndrome", default=None, help="syndrome bits, e.g. 0110")
    p.add_argument("--syndrome-file", default=None, help="file holding the syndrome bits")
    p.add_argument("--stream", default=None, help="detector stream file to decode with sliding windows")
    _add_window_flags(p)
    p.add_argument("--trace", default=None, help="write a per-iteration iter,node,marginal,ehat CSV here")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", formatter_class=fmt, help="global-decoding Monte Carlo sweep, CSV output")
    _add_model_flags(p)
    _add_decoder_flags(p)
    _add_sweep_flags(p)
    _add_timing_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("window-bench", formatter_class=fmt, help="sliding-window Monte Carlo sweep, CSV output")
    _add_model_flags(p)
    _add_decoder_flags(p)
    _add_window_flags(p)
    _add_sweep_flags(p)
    _add_timing_flags(p)
    p.set_defaults(func=cmd_window_bench)

    p = sub.add_parser("verify", formatter_class=fmt,
                       help="cross-check the gateware emulator against the plain fixed-point evaluation")
    _add_model_flags(p)
    _add_decoder_flags(p, precision_default="int4.2.8")
    p.add_argument("--trials", type=int, default=1000, help="random syndromes to compare")
    p.add_argument("--perturb-order", action="store_true",
                   help="debug: reverse the emulator's marginal summation order (negative control)")
    p.add_argument("--dump", default=None, help="where to write the first mismatch (JSON)")
    p.add_argument("--replay", default=None, help="re-run a mismatch dump instead of random trials")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", formatter_class=fmt, help="write a generated model (and optionally a sampled stream)")
    _add_model_flags(p)
    p.add_argument("--out", default=None, help="model output path (default stdout)")
    p.add_argument("--stream-out", default=None, help="also write one sampled detector stream here")
    p.add_argument("--seed", type=int, default=0, help="seed for the sampled stream")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    for name, low in (("shots", 0), ("trials", 0), ("threads", 1)):
        if getattr(args, name, low) < low:
            print(f"qldpc-relay: error: --{name} must be >= {low}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qldpc-relay: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as exc:
        print(f"qldpc-relay: model error: {exc}", file=sys.stderr)
        return EXIT_USAGE
