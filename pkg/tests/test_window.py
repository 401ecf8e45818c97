import io

import numpy as np
import pytest

from qldpc_relay.bp_ref import RelayConfig, relay_decode
from qldpc_relay.model import apply_action_matrix, apply_check_matrix, gen_memory_code, gen_single_shot_code, parse_model
from qldpc_relay.qarith import parse_precision
from qldpc_relay.window import (BackPressureError, SlidingWindowDecoder, StreamEvent, WindowError,
                                build_window_model, drain, finalize, gf2_solve, ingest, make_decoder, new_state,
                                read_stream, synthesize_stream, try_decode_window, write_stream)

CFG = RelayConfig(max_legs=40)


def run(wcfg, e, config=CFG, spec=None, verify=False):
    events, expected = synthesize_stream(wcfg, e)
    dec = SlidingWindowDecoder(wcfg, make_decoder(config, spec), verify_carry=verify)
    frame, ocorr = dec.run(events)
    return dec, frame, ocorr, expected


def unit(n, *idx):
    e = np.zeros(n, dtype=np.uint8)
    e[list(idx)] = 1
    return e


class TestBuild:
    def test_requires_layout(self):
        with pytest.raises(WindowError):
            build_window_model(gen_single_shot_code(5), 2, 1)

    @pytest.mark.parametrize("w,c", [(3, 3), (3, 0), (2, 5)])
    def test_commit_width_bounds(self, w, c):
        with pytest.raises(ValueError):
            build_window_model(gen_memory_code(3, 4, 0.1, 0.1), w, c)

    def test_masks_c1_w2(self):
        m = gen_memory_code(3, 4, 0.1, 0.1)
        wc = build_window_model(m, 2, 1)
        base = wc.base
        cyc = m.layout.column_cycle[base.columns]
        assert set(cyc.tolist()) == {0, 1}
        assert np.array_equal(base.commit_mask, (cyc == 0).astype(np.uint8))
        assert base.convergence_mask.tolist() == [1, 1, 0, 0]
        assert base.model.num_checks == 2 * 2

    def test_commit_regions_partition_columns(self):
        m = gen_memory_code(3, 7, 0.1, 0.1)
        wc = build_window_model(m, 3, 2)
        seen = np.zeros(m.num_errors, dtype=int)
        t = 0
        while True:
            terminal = t + 3 >= 7
            prob = wc.problem(t, min(t + 3, 7), terminal)
            assert set(prob.columns[prob.commit_mask.astype(bool)]) <= set(prob.columns)
            seen[prob.columns[prob.commit_mask.astype(bool)]] += 1
            if terminal:
                break
            t += 2
        assert np.all(seen == 1)

    def test_degenerate_masks(self):
        m = gen_memory_code(3, 4, 0.1, 0.1)
        base = build_window_model(m, 4, 1).base
        assert base.commit_mask.all() and base.convergence_mask.all()
        assert base.model.num_errors == m.num_errors


class TestIngest:
    def setup_method(self):
        self.m = gen_memory_code(3, 4, 0.1, 0.1)
        self.wc = build_window_model(self.m, 3, 1)

    def test_zero_block(self):
        st = new_state(self.wc)
        ingest(st, self.wc, StreamEvent.detectors([0, 0]))
        assert st.total_cycles == 1 and not st.syndrome.any()

    def test_clean_codeword(self):
        st = new_state(self.wc)
        ingest(st, self.wc, StreamEvent.detectors([1, 0]))
        # c = 100 has noiseless syndrome 10
        ingest(st, self.wc, StreamEvent.codeword([1, 0, 0]))
        assert st.history[-1].tolist() == [0, 0] and st.terminal

    def test_two_ends(self):
        st = new_state(self.wc)
        ingest(st, self.wc, StreamEvent.end())
        with pytest.raises(WindowError):
            ingest(st, self.wc, StreamEvent.end())

    def test_end_after_codeword_closes(self):
        st = new_state(self.wc)
        ingest(st, self.wc, StreamEvent.codeword([0, 0, 0]))
        ingest(st, self.wc, StreamEvent.end())
        assert st.total_cycles == 1
        with pytest.raises(WindowError):
            ingest(st, self.wc, StreamEvent.detectors([0, 0]))

    def test_detector_after_codeword(self):
        st = new_state(self.wc)
        ingest(st, self.wc, StreamEvent.codeword([0, 0, 0]))
        with pytest.raises(WindowError):
            ingest(st, self.wc, StreamEvent.detectors([0, 0]))

    def test_length_mismatch(self):
        st = new_state(self.wc)
        with pytest.raises(WindowError):
            ingest(st, self.wc, StreamEvent.detectors([0, 0, 0]))
        with pytest.raises(WindowError):
            ingest(st, self.wc, StreamEvent.codeword([0, 0]))

    def test_fifo_overflow(self):
        st = new_state(self.wc)
        for _ in range(3):
            ingest(st, self.wc, StreamEvent.detectors([0, 0]))
        with pytest.raises(BackPressureError):
            ingest(st, self.wc, StreamEvent.detectors([0, 0]))

    def test_stream_longer_than_model(self):
        wc = build_window_model(self.m, 3, 1, fifo_depth=10)
        st = new_state(wc)
        for _ in range(4):
            ingest(st, wc, StreamEvent.detectors([0, 0]))
        with pytest.raises(WindowError):
            ingest(st, wc, StreamEvent.codeword([0, 0, 0]))


class TestDecodeStep:
    def test_waits_for_full_window(self):
        m = gen_memory_code(3, 6, 0.1, 0.1)
        wc = build_window_model(m, 3, 1)
        st = new_state(wc)
        dec = make_decoder(CFG)
        for k in range(2):
            ingest(st, wc, StreamEvent.detectors([0, 0]))
            assert try_decode_window(st, wc, dec) is None
        ingest(st, wc, StreamEvent.detectors([0, 0]))
        rec = try_decode_window(st, wc, dec)
        assert rec is not None and rec.start == 0 and rec.converged
        assert not st.frame.any() and not st.carry.any() and rec.committed.size == 0

    def test_finalize_before_terminal(self):
        wc = build_window_model(gen_memory_code(3, 4, 0.1, 0.1), 2, 1)
        with pytest.raises(WindowError):
            finalize(new_state(wc), wc)

    def test_drain_before_terminal(self):
        wc = build_window_model(gen_memory_code(3, 4, 0.1, 0.1), 2, 1)
        with pytest.raises(WindowError):
            drain(new_state(wc), wc, make_decoder(CFG))

    def test_no_errors(self):
        m = gen_memory_code(5, 8, 0.01, 0.01)
        wc = build_window_model(m, 3, 1)
        dec, frame, ocorr, expected = run(wc, np.zeros(m.num_errors, dtype=np.uint8))
        assert not frame.any() and np.array_equal(ocorr, expected) and not expected.any()
        assert all(r.iterations == CFG.solutions_sought for r in dec.state.records)

    def test_carry_cancels_in_next_window(self):
        # measurement error on check 0 in the last committed cycle of window 0
        n, c = 3, 2
        m = gen_memory_code(n, 2 * c, 0.05, 0.05)
        wc = build_window_model(m, c + 1, c)
        mp = n - 1
        j = next(j for j, col in enumerate(m.error_adjacency) if col == ((c - 1) * mp, c * mp))
        e = unit(m.num_errors, j)
        events, expected = synthesize_stream(wc, e)
        st = new_state(wc)
        decoder = make_decoder(CFG)
        for ev in events[:c + 1]:
            ingest(st, wc, ev)
        rec = try_decode_window(st, wc, decoder)
        assert rec.converged and rec.committed.tolist() == [j]
        # the committed column's detector in the next cycle is carried
        h = m.dense_check_matrix()
        expected_carry = h[:, j][c * mp:(c + 1) * mp]
        assert np.array_equal(st.carry[:mp], expected_carry)
        assert np.array_equal(st.history[c] ^ st.carry[:mp], np.zeros(mp, dtype=np.uint8))
        for ev in events[c + 1:]:
            ingest(st, wc, ev)
        drain(st, wc, decoder)
        frame, ocorr = finalize(st, wc)
        assert all(r.committed.size == 0 for r in st.records[1:])
        assert np.array_equal(ocorr, expected)

    def test_single_data_error_corrected(self):
        m = gen_memory_code(5, 10, 0.01, 0.01)
        wc = build_window_model(m, 4, 2)
        j = next(j for j in range(m.num_errors) if m.layout.column_cycle[j] == 3 and m.logical_rows[0].count(j))
        dec, frame, ocorr, expected = run(wc, unit(m.num_errors, j))
        assert frame.tolist() == [1]
        assert np.array_equal(ocorr, expected) and expected.tolist() == [0]


class TestInvariants:
    def test_global_equivalence(self, rng):
        m = gen_memory_code(4, 6, 0.03, 0.03)
        wc = build_window_model(m, 6, 2)
        for k in range(40):
            e = (rng.random(m.num_errors) < 0.05).astype(np.uint8)
            cfg = CFG.with_seed(k)
            _, frame, ocorr, expected = run(wc, e, cfg)
            g = relay_decode(m, apply_check_matrix(m, e), cfg)
            assert np.array_equal(frame, apply_action_matrix(m, g.error_estimate))

    def test_global_equivalence_fixed_point(self, rng):
        m = gen_memory_code(4, 5, 0.03, 0.03)
        wc = build_window_model(m, 5, 1)
        spec = parse_precision("int4.2.8")
        from qldpc_relay.gateware import gateware_decode
        for k in range(20):
            e = (rng.random(m.num_errors) < 0.05).astype(np.uint8)
            cfg = CFG.with_seed(k)
            _, frame, _, _ = run(wc, e, cfg, spec)
            g = gateware_decode(m, apply_check_matrix(m, e), cfg, spec)
            assert np.array_equal(frame, apply_action_matrix(m, g.error_estimate))

    def test_frame_linearity(self):
        m = gen_memory_code(5, 9, 0.01, 0.01)
        wc = build_window_model(m, 3, 2)
        cyc = m.layout.column_cycle
        logical = set(m.logical_rows[0])
        j1 = next(j for j in logical if cyc[j] == 0)
        j2 = next(j for j in logical if cyc[j] == 6)
        e1, e2 = unit(m.num_errors, j1), unit(m.num_errors, j2)
        f1 = run(wc, e1)[1]
        f2 = run(wc, e2)[1]
        f12 = run(wc, e1 ^ e2)[1]
        assert np.array_equal(f12, f1 ^ f2)

    def test_success_accounting_and_bookkeeping(self, rng):
        m = gen_memory_code(5, 12, 0.02, 0.02)
        wc = build_window_model(m, 4, 2)
        for k in range(60):
            e = (rng.random(m.num_errors) < 0.02).astype(np.uint8)
            dec, frame, ocorr, expected = run(wc, e, CFG.with_seed(k), verify=True)
            ae = apply_action_matrix(m, e)
            assert np.array_equal(ocorr, expected) == np.array_equal(frame, ae)
            recs = dec.state.records
            if all(r.converged for r in recs):
                assert all(r.residual_clean and r.self_cancel for r in recs)
                assert np.array_equal(apply_check_matrix(m, dec.state.committed), apply_check_matrix(m, e))
                assert np.array_equal(apply_action_matrix(m, dec.state.committed), frame)

    def test_carry_modes_agree_on_local_columns(self, rng):
        m = gen_memory_code(4, 8, 0.03, 0.03)
        full = build_window_model(m, 3, 1, carry="full")
        single = build_window_model(m, 3, 1, carry="single")
        for k in range(20):
            e = (rng.random(m.num_errors) < 0.04).astype(np.uint8)
            a = run(full, e, CFG.with_seed(k))
            b = run(single, e, CFG.with_seed(k))
            assert np.array_equal(a[1], b[1])

    def test_end_without_codeword(self):
        m = gen_memory_code(3, 3, 0.1, 0.1)
        wc = build_window_model(m, 2, 1)
        dec = SlidingWindowDecoder(wc, make_decoder(CFG))
        frame, ocorr = dec.run([StreamEvent.detectors([0, 0]), StreamEvent.detectors([0, 0]), StreamEvent.end()])
        assert dec.state.total_cycles == 3 and np.array_equal(frame, ocorr)

    def test_identity_closure_for_file_models(self):
        text = ("qldpc-model v1 M=4 N=6 K=1 cycles=2 det_per_cycle=2\n"
                "e 0 p=0.1 H:0 A:0 cycle=0\ne 1 p=0.1 H:0 1 A: cycle=0\ne 2 p=0.1 H:1 2 A: cycle=0\n"
                "e 3 p=0.1 H:2 A:0 cycle=1\ne 4 p=0.1 H:2 3 A: cycle=1\ne 5 p=0.1 H:3 A: cycle=1\n")
        m = parse_model(text)
        wc = build_window_model(m, 2, 1)
        assert wc.closure.num_qubits == 2 and not wc.closure.logical_readout.any()
        e = unit(6, 3)
        _, frame, ocorr, expected = run(wc, e)
        assert frame.tolist() == [1] and np.array_equal(ocorr, expected)


class TestStreamText:
    def test_round_trip(self):
        events = [StreamEvent.detectors([0, 1]), StreamEvent.codeword([1, 1, 0]), StreamEvent.end()]
        buf = io.StringIO()
        write_stream(events, buf)
        assert buf.getvalue() == "d 01\nc 110\nEND\n"
        back = list(read_stream(buf.getvalue().splitlines()))
        assert [e.kind for e in back] == ["d", "c", "end"]
        assert back[1].bits.tolist() == [1, 1, 0]

    @pytest.mark.parametrize("line", ["x 01", "d 012", "d", "END now"])
    def test_bad_lines(self, line):
        with pytest.raises(WindowError):
            list(read_stream([line]))


def test_gf2_solve(rng):
    for _ in range(20):
        a = rng.integers(0, 2, (6, 8), dtype=np.uint8)
        x = rng.integers(0, 2, 8, dtype=np.uint8)
        b = (a.astype(int) @ x) & 1
        y = gf2_solve(a, b)
        assert np.array_equal((a.astype(int) @ y) & 1, b)
    with pytest.raises(ValueError):
        gf2_solve(np.array([[1, 1], [1, 1]]), np.array([0, 1]))
