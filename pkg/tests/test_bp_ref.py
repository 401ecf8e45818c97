from dataclasses import replace

import numpy as np
import pytest

from qldpc_relay import bp_ref
from qldpc_relay.bp_ref import (EMPTY_MIN, LegResult, RelayConfig, alpha_factor, check_to_error_messages,
                                dmem_bp_leg, error_to_check_messages, init_state, relay_decode,
                                update_bias, update_marginals_and_decision)
from qldpc_relay.model import DecodingModel, apply_check_matrix, gen_memory_code, gen_single_shot_code
from qldpc_relay.reference import plain_min_sum_f64

from conftest import random_model, random_syndrome


def star_check(degree=3, p=0.1):
    """One check touching ``degree`` errors."""
    return DecodingModel.from_columns(1, 1, [[0]] * degree, [[]] * degree, [p] * degree)


def star_error(degree=3, p=0.1):
    """One error touching ``degree`` checks."""
    return DecodingModel.from_columns(degree, 1, [list(range(degree))], [[0]], [p])


class TestCheckMessages:
    def test_exclusive_sign_and_min(self):
        m = star_check()
        st = init_state(m)
        st.nu[:] = [3.0, -2.0, 5.0]
        mu = check_to_error_messages(st, m, [1], t=1, alpha_enabled=False)
        assert mu.tolist() == [2.0, -3.0, 2.0]

    def test_alpha_halves_at_first_iteration(self):
        m = star_check()
        st = init_state(m)
        st.nu[:] = [3.0, -2.0, 5.0]
        mu = check_to_error_messages(st, m, [1], t=1, alpha_enabled=True)
        assert mu.tolist() == [1.0, -1.5, 1.0]

    def test_positive_inputs_zero_syndrome(self, rng):
        m = star_check(5)
        st = init_state(m)
        st.nu[:] = rng.uniform(0.1, 4, 5)
        assert np.all(check_to_error_messages(st, m, [0], t=3) >= 0)

    @pytest.mark.parametrize("s", [0, 1])
    def test_degree_one_check(self, s):
        m = star_check(1)
        st = init_state(m)
        mu = check_to_error_messages(st, m, [s], t=1, alpha_enabled=False)
        assert mu[0] == (EMPTY_MIN if s == 0 else -EMPTY_MIN)

    def test_magnitudes_above_empty_min_pass_through(self):
        # two degree-1 checks push nu past EMPTY_MIN; the neighbour must see all of it
        m = DecodingModel.from_columns(3, 1, [[0, 1, 2], [2]], [[], []], [0.1, 0.2])
        tr = []
        dmem_bp_leg(m, [1, 1, 0], 0.0, 2, alpha_enabled=False, trace=tr)
        ic = m.interconnect
        edge = int(np.flatnonzero((ic.edge_check == 2) & (ic.edge_error == 1))[0])
        assert abs(tr[1]["mu"][edge]) > EMPTY_MIN
        assert tr[1]["mu"][edge] == tr[0]["nu"][int(np.flatnonzero((ic.edge_check == 2) & (ic.edge_error == 0))[0])]

    def test_locality(self, rng):
        m = random_model(rng)
        ic = m.interconnect
        st = init_state(m)
        st.nu[:] = rng.normal(size=ic.num_edges)
        s = rng.integers(0, 2, m.num_checks, dtype=np.uint8)
        before = check_to_error_messages(st, m, s, t=2).copy()
        i = 0
        outside = ic.edge_check != i
        st.nu[outside] = rng.normal(size=int(outside.sum()))
        after = check_to_error_messages(st, m, s, t=2)
        assert np.array_equal(before[~outside], after[~outside])


class TestErrorMessages:
    def test_exclusive_sum(self):
        m = star_error(3, p=1 / (1 + np.exp(2.0)))
        st = init_state(m)
        st.mu[:] = [7.0, 1.0, -3.0]
        nu = error_to_check_messages(st, m)
        assert nu[0] == pytest.approx(0.0, abs=1e-12)

    def test_no_other_neighbours(self):
        m = star_error(1)
        st = init_state(m)
        st.mu[:] = [5.0]
        assert error_to_check_messages(st, m)[0] == st.bias[0]

    def test_zero_messages(self, rng):
        m = random_model(rng)
        st = init_state(m)
        nu = error_to_check_messages(st, m)
        assert np.array_equal(nu, m.weights[m.interconnect.edge_error])


class TestMarginals:
    def _marg(self, lam, mus):
        m = star_error(len(mus), p=1 / (1 + np.exp(lam)))
        st = init_state(m)
        st.mu[:] = mus
        marg, ehat = update_marginals_and_decision(st, m)
        return marg[0], ehat[0]

    def test_sign_cases(self):
        assert self._marg(1.0, [3.0])[1] == 0
        assert self._marg(1.0, [-5.0])[1] == 1

    def test_tie_is_zero(self):
        marg, e = self._marg(1.0, [-1.0])
        assert marg == pytest.approx(0.0, abs=1e-12) and e == 0

    def test_sum(self):
        marg, e = self._marg(1.0, [-2.0, -1.0])
        assert marg == pytest.approx(-2.0) and e == 1


class TestBias:
    def test_mixing(self):
        m = star_error(1, p=1 / (1 + np.exp(4.0)))
        st = init_state(m, initial_marginals=[2.0])
        assert update_bias(st, 0.5)[0] == pytest.approx(3.0)
        st = init_state(m, initial_marginals=[2.0])
        assert update_bias(st, 0.0)[0] == pytest.approx(4.0)
        st = init_state(m, initial_marginals=[2.0])
        assert update_bias(st, 1.0)[0] == pytest.approx(2.0)


class TestLeg:
    def test_zero_syndrome_converges_immediately(self, rng):
        m = random_model(rng)
        res = dmem_bp_leg(m, np.zeros(m.num_checks, dtype=np.uint8), 0.125, 10)
        assert res.converged and res.iterations == 1 and not res.error_estimate.any()

    def test_rep3(self):
        m = gen_single_shot_code(3, 0.1)
        out = relay_decode(m, [1, 0], RelayConfig())
        assert out.converged and out.error_estimate.tolist() == [1, 0, 0]

    def test_gamma_zero_matches_textbook(self, rng):
        for _ in range(10):
            m = random_model(rng)
            s = random_syndrome(m, rng)
            ref = plain_min_sum_f64(m, s, 15, alpha_enabled=False)
            tr = []
            dmem_bp_leg(m, s, 0.0, 15, alpha_enabled=False, trace=tr)
            assert len(tr) == len(ref)
            ic = m.interconnect
            for a, b in zip(ref, tr):
                for e in range(ic.num_edges):
                    key = (int(ic.edge_check[e]), int(ic.edge_error[e]))
                    assert b["mu"][e] == a["mu"][key]
                    assert b["nu"][e] == a["nu"][key]
                assert b["marginal"].tolist() == a["marginal"]

    def test_step_mode_matches_fused(self, rng):
        for _ in range(10):
            m = random_model(rng)
            s = random_syndrome(m, rng)
            g = rng.uniform(-0.24, 0.66, m.num_errors)
            init = rng.normal(2, 1, m.num_errors)
            a = dmem_bp_leg(m, s, g, 20, init)
            tr = []
            b = dmem_bp_leg(m, s, g, 20, init, trace=tr)
            assert (a.converged, a.iterations) == (b.converged, b.iterations)
            assert np.array_equal(a.marginals, b.marginals)

    def test_check_mask(self):
        m = gen_single_shot_code(3, 0.1)
        res = dmem_bp_leg(m, [0, 1], 0.0, 5, check_mask=[1, 0])
        assert res.converged and res.iterations == 1


def test_alpha_factor():
    vals = [alpha_factor(t) for t in range(1, 60)]
    assert vals[0] == 0.5
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert all(v < 1 for v in vals[:50])
    assert alpha_factor(3, enabled=False) == 1.0


class TestRelaySelection:
    def _patch(self, monkeypatch, outcomes):
        calls = []

        def fake_leg(model, syndrome, gamma, max_iter, initial_marginals=None, **kw):
            calls.append(np.array(initial_marginals))
            conv, est = outcomes[len(calls) - 1]
            return LegResult(conv, np.array(est, dtype=np.uint8), np.full(model.num_errors, float(len(calls))), 3)

        monkeypatch.setattr(bp_ref, "dmem_bp_leg", fake_leg)
        return calls

    def test_lower_weight_wins(self, monkeypatch):
        # uniform weights: weight is proportional to |e|
        m = gen_single_shot_code(5, 0.1)
        self._patch(monkeypatch, [(True, [1, 1, 1, 0, 0]), (True, [0, 1, 0, 0, 0])])
        out = relay_decode(m, [1, 1, 0, 0], RelayConfig(solutions_sought=2, max_legs=5))
        assert out.error_estimate.tolist() == [0, 1, 0, 0, 0]
        assert out.legs_used == 2 and out.solutions_found == 2

    def test_tie_keeps_first(self, monkeypatch):
        m = gen_single_shot_code(5, 0.1)
        self._patch(monkeypatch, [(True, [1, 0, 0, 0, 0]), (True, [0, 0, 0, 0, 1])])
        out = relay_decode(m, [1, 0, 0, 0], RelayConfig(solutions_sought=2, max_legs=5))
        assert out.error_estimate.tolist() == [1, 0, 0, 0, 0]

    def test_s1_stops_at_first_solution(self, monkeypatch):
        m = gen_single_shot_code(5, 0.1)
        self._patch(monkeypatch, [(False, [0] * 5), (True, [1, 0, 0, 0, 0]), (True, [0] * 5)])
        out = relay_decode(m, [1, 0, 0, 0], RelayConfig(solutions_sought=1, max_legs=5))
        assert out.legs_used == 2 and out.per_leg_iterations == (3, 3)

    def test_marginals_carried_between_legs(self, monkeypatch):
        m = gen_single_shot_code(4, 0.1)
        calls = self._patch(monkeypatch, [(False, [0] * 4)] * 3)
        out = relay_decode(m, [1, 0, 0], RelayConfig(solutions_sought=1, max_legs=3))
        assert np.array_equal(calls[0], m.weights)
        assert calls[1].tolist() == [1.0] * 4 and calls[2].tolist() == [2.0] * 4
        assert not out.converged and out.legs_used == 3


class TestRelayProperties:
    def test_converged_implies_syndrome(self, rng):
        cfg = RelayConfig(max_legs=20, iters_leg0=30, iters_leg=20, solutions_sought=3)
        for k in range(40):
            m = random_model(rng)
            s = random_syndrome(m, rng)
            out = relay_decode(m, s, cfg.with_seed(k))
            if out.converged:
                assert np.array_equal(apply_check_matrix(m, out.error_estimate), s)
            else:
                assert out.legs_used == cfg.max_legs

    def test_more_legs_never_lose_a_solution(self, rng):
        # leg draws depend only on (seed, leg), so a larger R extends the same leg sequence
        checked = 0
        for k in range(60):
            m = random_model(rng)
            s = random_syndrome(m, rng)
            base = RelayConfig(iters_leg0=8, iters_leg=4, solutions_sought=3, seed=k)
            short = relay_decode(m, s, replace(base, max_legs=3))
            long = relay_decode(m, s, replace(base, max_legs=12))
            assert long.per_leg_iterations[:short.legs_used] == short.per_leg_iterations
            if short.converged:
                checked += 1
                assert long.converged and long.weight <= short.weight
        assert checked > 10

    def test_deterministic(self, rng):
        m = gen_memory_code(4, 4, 0.05, 0.05)
        s = random_syndrome(m, rng)
        a = relay_decode(m, s, RelayConfig(seed=3))
        b = relay_decode(m, s, RelayConfig(seed=3))
        assert np.array_equal(a.error_estimate, b.error_estimate)
        assert np.array_equal(a.marginals, b.marginals)
        assert a.per_leg_iterations == b.per_leg_iterations

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RelayConfig(solutions_sought=3, max_legs=2)
        with pytest.raises(ValueError):
            RelayConfig(gamma_min=0.5, gamma_max=0.1)
        with pytest.raises(ValueError):
            RelayConfig(iters_leg0=0)

    def test_variants(self):
        base = RelayConfig()
        assert base.variant("bp").gamma0 == 0.0 and base.variant("bp").max_legs == 1
        assert base.variant("dmem").gamma0 == 0.125 and base.variant("dmem").max_legs == 1
        assert base.variant("relay") == base
        with pytest.raises(ValueError):
            base.variant("osd")
