"""Built-in property suites: dynamics laws, dense-reference equivalence, file round trips.

Each check returns ``(passed, detail)``; :func:`run_all` yields ``(name, passed, detail)``.
"""

from __future__ import annotations

import numpy as np

from . import dynamics as dyn
from . import netfile
from . import reference as ref
from .models import AmariNetwork, GBNetwork, WillshawNetwork
from .patterns import NeuronSpace, Pattern, exact_c_batch, gb_batch, substream

OSCILLATION_PAIRS = [(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4)]


def oscillation_network() -> WillshawNetwork:
    """Five neurons, six stored pairs: WTA on input {0} alternates forever."""
    return WillshawNetwork.build(NeuronSpace(5), np.array(OSCILLATION_PAIRS))


def check_oscillation():
    net = oscillation_network()
    tr = dyn.iterate(net, Pattern(net.space, [0]), dyn.WtaMax())
    seen = [s.active.tolist() for s in tr.states]
    want = [[0], [0, 1, 2, 3]]
    ok = (tr.status == "cycle" and tr.period == 2 and tr.entry == 0
          and all(s == want[t % 2] for t, s in enumerate(seen)))
    return ok, f"states {seen}, verdict {tr.status} entry {tr.entry} period {tr.period}"


def _erased_instance(rng, max_n=256, max_m=200, max_c=8):
    n = int(rng.integers(8, max_n + 1))
    c = int(rng.integers(2, min(max_c, n // 2) + 1))
    m = int(rng.integers(1, max_m + 1))
    msgs = exact_c_batch(n, c, m, rng)
    net = WillshawNetwork.build(NeuronSpace(n), msgs, keep_stored=False)
    orig = msgs[int(rng.integers(m))]
    f = int(rng.integers(1, c))
    cue = np.sort(rng.choice(orig, size=c - f, replace=False))
    return net, orig, Pattern(net.space, cue)


def check_fixed_threshold_convergence(instances: int = 500, seed: int = 0):
    """Fixed ``h <= |input|``: active sets grow under inclusion and settle within ``N`` steps."""
    rng = substream(seed, 1)
    bad = 0
    for _ in range(instances):
        net, _, cue = _erased_instance(rng)
        h = int(rng.integers(1, len(cue) + 1))
        tr = dyn.iterate(net, cue, dyn.FixedThreshold(h), max_iters=net.n)
        grows = all(a.issubset(b) for a, b in zip(tr.states, tr.states[1:]))
        bad += not (grows and tr.converged)
    return bad == 0, f"{instances - bad}/{instances} converged with growing active sets"


def one_iteration_law(tr: dyn.Trajectory, horizon: int = 8) -> bool:
    s = [tr.state_at(t) for t in range(horizon + 1)]
    fixed = all(s[t] == s[1] for t in range(1, horizon + 1))
    alternating = s[1] != s[2] and all(s[t + 2] == s[t] for t in range(1, horizon - 1))
    return fixed != alternating


def check_wta_one_iteration(instances: int = 500, seed: int = 0):
    """WTA on an erased stored message converges in one step or alternates with period 2."""
    rng = substream(seed, 2)
    bad = 0
    for _ in range(instances):
        net, _, cue = _erased_instance(rng)
        bad += not one_iteration_law(dyn.iterate(net, cue, dyn.WtaMax()))
    return bad == 0, f"{instances - bad}/{instances} satisfy the one-iteration law"


def check_stability(checks: int = 1000, seed: int = 0, n: int = 512, c: int = 6):
    """Stored messages are one-step fixed points: GB with h = c, Willshaw with WTA.

    ``checks`` stored messages per model over ``M = 1..50``; the GB space takes the
    largest ``c * l <= n``.
    """
    rng = substream(seed, 3)
    l = n // c
    gb_space, w_space = NeuronSpace(c * l, c, l), NeuronSpace(n)
    bad = 0
    for k in range(checks):
        m = 1 + k % 50
        for net, msgs, policy in (
            (GBNetwork, gb_batch(c, l, m, rng), dyn.FixedThreshold(c)),
            (WillshawNetwork, exact_c_batch(n, c, m, rng), dyn.WtaMax()),
        ):
            net = net.build(gb_space if net is GBNetwork else w_space, msgs, keep_stored=False)
            p = Pattern(net.space, msgs[int(rng.integers(m))])
            bad += dyn.step(net, p, policy) != p
    return bad == 0, f"{2 * checks - bad}/{2 * checks} stored messages fixed"


def check_dense_equivalence(instances: int = 200, seed: int = 0):
    """Packed and vectorised scores agree with the naive loops for ``n <= 64``."""
    rng = substream(seed, 4)
    bad = 0
    for _ in range(instances):
        c = int(rng.integers(2, 5))
        l = int(rng.integers(2, 64 // c + 1))
        n = c * l
        m = int(rng.integers(0, 30))
        gmsgs = gb_batch(c, l, m, rng)
        msgs = exact_c_batch(n, c, m, rng)
        state = np.flatnonzero(rng.random(n) < 0.3)
        amari = AmariNetwork.build(NeuronSpace(n), msgs)
        willshaw = WillshawNetwork.build(NeuronSpace(n), msgs)
        gb = GBNetwork.build(NeuronSpace(n, c, l), gmsgs)
        J, W, G = ref.amari_weights(n, msgs), ref.clipped_weights(n, msgs), ref.clipped_weights(n, gmsgs)
        pat = Pattern(NeuronSpace(n), state)
        gpat = Pattern(gb.space, state)
        ok = (np.array_equal(amari.fields(pat), [ref.amari_field(J, state, i) for i in range(n)])
              and np.array_equal(willshaw.scores(pat), [ref.willshaw_score(W, state, i) for i in range(n)])
              and np.array_equal(gb.fields(gpat), [ref.gb_field(G, state, i) for i in range(n)])
              and np.array_equal(gb.som_scores(gpat), [ref.gb_som_score(G, state, i, l) for i in range(n)]))
        bad += not ok
    return bad == 0, f"{instances - bad}/{instances} instances match the dense reference"


def check_round_trip(seed: int = 0):
    rng = substream(seed, 5)
    c, l = 4, 16
    n = c * l
    nets = [
        AmariNetwork.build(NeuronSpace(n), exact_c_batch(n, c, 40, rng)),
        WillshawNetwork.build(NeuronSpace(n), exact_c_batch(n, c, 40, rng)),
        GBNetwork.build(NeuronSpace(n, c, l), gb_batch(c, l, 40, rng)),
    ]
    ok = []
    for net in nets:
        back = netfile.load(netfile.save(net))
        ok.append(back == net and back.m_stored == net.m_stored
                  and all(a == b for a, b in zip(back.stored, net.stored)))
    return all(ok), "round trip " + ", ".join(f"{x.model_name}={'ok' if y else 'differs'}" for x, y in zip(nets, ok))


def check_exhaustive(instances: int = 100, seed: int = 0):
    """Exhaustive completions lie in the brute-force set, and not-found matches an empty set."""
    rng = substream(seed, 6)
    bad = 0
    for k in range(instances):
        if k % 2 == 0:
            c, l = 3, int(rng.integers(2, 7))
            n = c * l
            msgs = gb_batch(c, l, int(rng.integers(1, 12)), rng)
            net = GBNetwork.build(NeuronSpace(n, c, l), msgs)
            W, layout = ref.clipped_weights(n, msgs), l
        else:
            n, c = int(rng.integers(6, 17)), 3
            msgs = exact_c_batch(n, c, int(rng.integers(1, 12)), rng)
            net = WillshawNetwork.build(NeuronSpace(n), msgs)
            W, layout = ref.clipped_weights(n, msgs), None
        partial = msgs[int(rng.integers(len(msgs)))][:1]
        truth = set(ref.completions(W, n, partial.tolist(), c, layout))
        try:
            got = tuple(dyn.retrieve_exhaustive(net, Pattern(net.space, partial), c, rng=rng).active.tolist())
            bad += got not in truth
        except dyn.CompletionNotFoundError:
            bad += bool(truth)
    return bad == 0, f"{instances - bad}/{instances} completions agree with brute force"


def check_som_shrinkage(instances: int = 200, seed: int = 0):
    """After the first step of SUM-OF-MAX the active set only shrinks and settles within ``c*l`` steps."""
    rng = substream(seed, 7)
    bad = 0
    for _ in range(instances):
        c = int(rng.integers(2, 7))
        l = int(rng.integers(2, 17))
        msgs = gb_batch(c, l, int(rng.integers(1, 3 * l * l)), rng)
        net = GBNetwork.build(NeuronSpace(c * l, c, l), msgs, keep_stored=False)
        orig = msgs[int(rng.integers(len(msgs)))]
        cue = Pattern(net.space, np.sort(rng.choice(orig, size=int(rng.integers(0, c)), replace=False)))
        tr = dyn.iterate(net, cue, dyn.GbSumOfMax(), max_iters=c * l)
        s = tr.states
        ok = tr.converged and all(b.issubset(a) for a, b in zip(s[1:], s[2:])) and Pattern(net.space, orig).issubset(s[-1])
        bad += not ok
    return bad == 0, f"{instances - bad}/{instances} trajectories shrink and converge"


CHECKS = {
    "oscillation": check_oscillation,
    "fixed-threshold-convergence": check_fixed_threshold_convergence,
    "wta-one-iteration": check_wta_one_iteration,
    "stability": check_stability,
    "dense-equivalence": check_dense_equivalence,
    "round-trip": check_round_trip,
    "exhaustive": check_exhaustive,
    "som-shrinkage": check_som_shrinkage,
}


def run_all(seed: int = 0):
    for name, fn in CHECKS.items():
        try:
            passed, detail = fn() if name == "oscillation" else fn(seed=seed)
        except Exception as exc:  # a crash is a failed suite, not a dead selftest
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(passed), detail
