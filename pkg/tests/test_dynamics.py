import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_assoc import dynamics as dyn
from sparse_assoc import reference as ref
from sparse_assoc import selftest
from sparse_assoc.dynamics import (
    CapacityExceededError,
    CompletionNotFoundError,
    Exhaustive,
    FixedThreshold,
    GbClusterWta,
    GbSumOfMax,
    InputCountThreshold,
    PolicyMismatchError,
    WtaKth,
    WtaMax,
    iterate,
    retrieve_exhaustive,
    step,
    step_amari,
    step_gb_som,
    step_gb_wta,
    step_willshaw_threshold,
    step_willshaw_wta,
)
from sparse_assoc.models import AmariNetwork, GBNetwork, WillshawNetwork
from sparse_assoc.patterns import NeuronSpace, Pattern, exact_c_batch, gb_batch, substream

S5 = NeuronSpace(5)
G22 = NeuronSpace(4, 2, 2)


def P(space, *idx):
    return Pattern(space, idx)


def W(n, *msgs):
    s = NeuronSpace(n)
    return WillshawNetwork.build(s, [Pattern(s, m) for m in msgs])


def A(n, *msgs):
    s = NeuronSpace(n)
    return AmariNetwork.build(s, [Pattern(s, m) for m in msgs])


def act(p):
    return p.active.tolist()


class TestSteps:
    def test_amari(self):
        net = A(5, (0, 1, 2))
        assert act(step_amari(net, P(S5, 0, 1, 2), 2)) == [0, 1, 2]
        assert act(step_amari(net, P(S5, 0, 1), 3)) == []
        assert act(step_amari(AmariNetwork(S5), P(S5, 0, 1), 1)) == []

    def test_amari_zero_threshold_fires_everything(self):
        # Theta(x) = 1 for x >= 0, so h = 0 switches on every neuron
        assert act(step_amari(A(5, (0, 1)), P(S5, 0), 0)) == [0, 1, 2, 3, 4]

    def test_amari_negative_h(self):
        with pytest.raises(ValueError):
            step_amari(A(5, (0, 1)), P(S5, 0), -1)

    def test_willshaw_threshold(self):
        assert act(step_willshaw_threshold(W(5, (0, 1)), P(S5, 0, 1), 2)) == [0, 1]
        osc = selftest.oscillation_network()
        assert act(step_willshaw_threshold(osc, P(S5, 0), 1)) == [0, 1, 2, 3]
        assert act(step_willshaw_threshold(WillshawNetwork(S5), P(S5, 0, 1), 3)) == []

    def test_willshaw_wta(self):
        osc = selftest.oscillation_network()
        assert act(step_willshaw_wta(osc, P(S5, 0), WtaMax())) == [0, 1, 2, 3]
        assert act(step_willshaw_wta(W(5, (0, 1)), P(S5, 0), WtaMax())) == [0, 1]
        assert act(step_willshaw_wta(W(5, (0, 1), (1, 2)), P(S5, 1), WtaMax())) == [0, 1, 2]

    def test_wta_empty_state(self):
        assert act(step_willshaw_wta(W(5, (0, 1)), P(S5), WtaMax())) == []

    def test_wta_kth_keeps_ties(self):
        net = W(6, (0, 1, 2), (2, 3), (4, 5))
        # scores on {2}: 0,1,3 -> 1; 2 -> 1 (self); others 0
        assert act(step_willshaw_wta(net, P(NeuronSpace(6), 2), WtaKth(2))) == [0, 1, 2, 3]

    def test_wta_kth_is_cth_largest(self):
        rng = substream(0)
        for _ in range(200):
            s = rng.integers(0, 5, size=20)
            c = int(rng.integers(1, 20))
            got = dyn._wta_kth(s, c)
            thr = np.sort(s)[::-1][c - 1]
            assert got.tolist() == np.flatnonzero(s >= thr).tolist()
            assert got.size >= c

    def test_gb_wta(self):
        msg = P(NeuronSpace(12, 3, 4), 1, 6, 11)
        net = GBNetwork.build(msg.space, [msg])
        assert step_gb_wta(net, msg) == msg
        net = GBNetwork.build(G22, [P(G22, 0, 2)])
        assert act(step_gb_wta(net, P(G22, 0))) == [0, 2]
        assert act(step_gb_wta(net, P(G22, 0), score="sum")) == [0, 2]
        assert act(step_gb_wta(GBNetwork(G22), P(G22, 0))) == [0, 1, 2, 3]

    def test_gb_som(self):
        net = GBNetwork.build(G22, [P(G22, 0, 2)])
        assert act(step_gb_som(net, P(G22, 0))) == [0, 2]
        assert act(step_gb_som(net, P(G22, 0, 2))) == [0, 2]
        assert act(step_gb_som(GBNetwork(G22), P(G22))) == []

    def test_som_matches_reference(self):
        rng = substream(11)
        for _ in range(100):
            c, l = int(rng.integers(2, 5)), int(rng.integers(2, 6))
            n = c * l
            msgs = gb_batch(c, l, int(rng.integers(1, 15)), rng)
            net = GBNetwork.build(NeuronSpace(n, c, l), msgs)
            G = ref.clipped_weights(n, msgs)
            state = np.flatnonzero(rng.random(n) < 0.3)
            occupied = set(state // l)
            filled = sorted(set(state.tolist()) | {i for i in range(n) if i // l not in occupied})
            want = [i for i in range(n) if ref.gb_som_score(G, filled, i, l) >= c]
            assert act(step_gb_som(net, Pattern(net.space, state))) == want

    def test_synchronous(self):
        # sequential updates would let neuron 2 see neuron 1 switched on
        net = W(4, (0, 1), (1, 2))
        assert act(step_willshaw_threshold(net, P(NeuronSpace(4), 0), 1)) == [0, 1]


class TestPolicies:
    def test_mismatch(self):
        with pytest.raises(PolicyMismatchError):
            iterate(W(5, (0, 1)), P(S5, 0), GbSumOfMax())
        with pytest.raises(PolicyMismatchError):
            iterate(GBNetwork(G22), P(G22, 0), WtaMax())

    def test_exhaustive_not_iterated(self):
        with pytest.raises(PolicyMismatchError):
            iterate(W(5, (0, 1)), P(S5, 0), Exhaustive())

    @pytest.mark.parametrize("bad", [lambda: FixedThreshold(-1), lambda: WtaKth(0),
                                     lambda: GbClusterWta("max"), lambda: Exhaustive(0)])
    def test_bad_parameters(self, bad):
        with pytest.raises(ValueError):
            bad()

    def test_input_count_uses_input_size(self):
        net = W(5, (0, 1, 2))
        assert act(step(net, P(S5, 0, 1), InputCountThreshold())) == [0, 1, 2]
        assert act(step(net, P(S5, 0, 1), InputCountThreshold(), h=3)) == []


class TestIterate:
    def test_oscillation(self):
        ok, detail = selftest.check_oscillation()
        assert ok, detail

    def test_stored_converges_in_one(self):
        net = W(6, (0, 1, 2), (3, 4))
        tr = iterate(net, P(NeuronSpace(6), 0, 1, 2), WtaMax())
        assert tr.converged and tr.converged_at == 1 and tr.final == P(NeuronSpace(6), 0, 1, 2)

    def test_truncated(self):
        tr = iterate(W(5, (0, 1), (1, 2), (2, 3), (3, 4)), P(S5, 0), FixedThreshold(1), max_iters=2)
        assert tr.status == "truncated" and tr.steps == 2
        with pytest.raises(IndexError):
            tr.state_at(5)

    def test_state_at_cycle(self):
        tr = iterate(selftest.oscillation_network(), P(S5, 0), WtaMax(), max_iters=7)
        assert tr.state_at(100) == P(S5, 0) and tr.state_at(7) == P(S5, 0, 1, 2, 3)
        assert tr.final == tr.state_at(7)

    def test_max_iters(self):
        with pytest.raises(ValueError):
            iterate(W(5, (0, 1)), P(S5, 0), WtaMax(), max_iters=0)

    @settings(max_examples=150, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_fixed_threshold_grows(self, seed):
        rng = substream(seed)
        net, _, cue = selftest._erased_instance(rng, max_n=64, max_m=60)
        h = int(rng.integers(1, len(cue) + 1))
        tr = iterate(net, cue, FixedThreshold(h), max_iters=net.n)
        assert tr.converged
        assert all(a.issubset(b) for a, b in zip(tr.states, tr.states[1:]))

    @settings(max_examples=150, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_wta_one_iteration(self, seed):
        rng = substream(seed)
        net, _, cue = selftest._erased_instance(rng, max_n=64, max_m=60)
        assert selftest.one_iteration_law(iterate(net, cue, WtaMax()))

    @settings(max_examples=150, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_max_and_kth_agree_on_erasures(self, seed):
        # the memory effect puts every neuron of the stored message at the top score
        rng = substream(seed)
        net, orig, cue = selftest._erased_instance(rng, max_n=64, max_m=60)
        if len(cue):
            assert step(net, cue, WtaMax()) == step(net, cue, WtaKth(len(orig)))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_cycle_verdict(self, seed):
        rng = substream(seed)
        n = int(rng.integers(4, 30))
        msgs = exact_c_batch(n, 2, int(rng.integers(1, 40)), rng)
        net = WillshawNetwork.build(NeuronSpace(n), msgs)
        cue = Pattern(net.space, np.flatnonzero(rng.random(n) < 0.2))
        tr = iterate(net, cue, WtaKth(2))
        if tr.converged:
            assert tr.states[-1] == tr.states[-2]
        elif tr.cycled:
            assert tr.period >= 2 and tr.states[-1] == tr.states[tr.entry]

    def test_gb_stability_at_c(self):
        rng = substream(5)
        s = NeuronSpace(60, 4, 15)
        msgs = gb_batch(4, 15, 200, rng)
        net = GBNetwork.build(s, msgs)
        for m in msgs[:50]:
            p = Pattern(s, m)
            assert step(net, p, FixedThreshold(4)) == p

    def test_som_shrinks(self):
        ok, detail = selftest.check_som_shrinkage(instances=100, seed=3)
        assert ok, detail


class TestExhaustive:
    def test_gb_unique(self):
        s = NeuronSpace(2048, 8, 256)
        msg = Pattern(s, np.arange(8) * 256 + np.arange(8))
        net = GBNetwork.build(s, [msg])
        assert retrieve_exhaustive(net, Pattern(s, msg.active[:4]), rng=substream(0)) == msg

    def test_willshaw_two_completions(self):
        net = W(6, (0, 1, 2), (0, 1, 3))
        rng = substream(1)
        runs = 10_000
        hits = sum(retrieve_exhaustive(net, P(NeuronSpace(6), 0, 1), 3, rng=rng) == P(NeuronSpace(6), 0, 1, 2)
                   for _ in range(runs))
        assert abs(hits / runs - 0.5) <= 3 * np.sqrt(0.25 / runs)

    def test_amari_max_weight(self):
        s = NeuronSpace(6)
        msgs = [(0, 1, 2)] * 2 + [(0, 1, 3)] + [(0, 1)] * 3 + [(2, 4)]
        net = AmariNetwork.build(s, [Pattern(s, m) for m in msgs])
        # clique {0,1,2} weighs 5+2+2 = 9, {0,1,3} weighs 5+1+1 = 7
        rng = substream(2)
        assert all(retrieve_exhaustive(net, P(s, 0), 3, rng=rng) == P(s, 0, 1, 2) for _ in range(50))

    def test_not_found(self):
        with pytest.raises(CompletionNotFoundError):
            retrieve_exhaustive(W(6, (0, 1), (2, 3)), P(NeuronSpace(6), 0, 1), 3)

    def test_capacity(self):
        s = NeuronSpace(40)
        net = WillshawNetwork.build(s, [Pattern(s, range(40))])
        with pytest.raises(CapacityExceededError):
            retrieve_exhaustive(net, P(s, 0), 6, max_candidates=100)

    def test_target_required(self):
        with pytest.raises(ValueError):
            retrieve_exhaustive(W(5, (0, 1)), P(S5, 0))

    def _brute(self, net, W_dense, partial, c, l):
        n = net.n
        return set(ref.completions(W_dense, n, partial, c, l))

    @settings(max_examples=80, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), gb=st.booleans())
    def test_all_completions_reachable(self, seed, gb):
        rng = substream(seed)
        if gb:
            c, l = 3, int(rng.integers(2, 5))
            n = c * l
            msgs = gb_batch(c, l, int(rng.integers(1, 10)), rng)
            net, layout = GBNetwork.build(NeuronSpace(n, c, l), msgs), l
        else:
            n, c = int(rng.integers(5, 12)), 3
            msgs = exact_c_batch(n, c, int(rng.integers(1, 10)), rng)
            net, layout = WillshawNetwork.build(NeuronSpace(n), msgs), None
        partial = msgs[0][:1].tolist()
        truth = self._brute(net, ref.clipped_weights(n, msgs), partial, c, layout)
        seen = set()
        for _ in range(30 * max(1, len(truth))):
            seen.add(tuple(act(retrieve_exhaustive(net, Pattern(net.space, partial), c, rng=rng))))
        assert seen == truth

    def test_amari_matches_brute_force(self):
        rng = substream(8)
        for _ in range(60):
            n, c = int(rng.integers(5, 12)), 3
            msgs = exact_c_batch(n, c, int(rng.integers(1, 12)), rng)
            net = AmariNetwork.build(NeuronSpace(n), msgs)
            J = ref.amari_weights(n, msgs)
            G = J > 0
            np.fill_diagonal(G, J.any(axis=1))
            partial = msgs[0][:1].tolist()
            cands = ref.completions(G, n, partial, c)
            best = max(sum(J[i, j] for i, j in itertools.combinations(q, 2)) for q in cands)
            got = act(retrieve_exhaustive(net, Pattern(net.space, partial), c, rng=rng))
            assert sum(J[i, j] for i, j in itertools.combinations(got, 2)) == best
