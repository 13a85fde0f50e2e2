import math

import pytest

from sparse_assoc import dynamics as dyn
from sparse_assoc.experiments import (
    ExperimentSpec,
    efficiency,
    kept_clusters,
    load_scale,
    make_policy,
    message_entropy,
    policy_name,
    run_retrieval_sweep,
    stability_probe,
    subclique_probe,
    weight_bits,
    with_workers,
    wrong_message_probe,
)
from sparse_assoc.theory import recognition_lower_bound, subclique_lower_bound


def three_sigma_le(a, b):
    """``a <= b`` up to three combined standard errors."""
    return a.error_rate - b.error_rate <= 3 * math.hypot(a.stderr, b.stderr)


class TestEfficiency:
    def test_costs(self):
        assert weight_bits("willshaw", 2048, 8, 10) == 2096128
        assert weight_bits("gb", 2048, 8, 10, 256) == 28 * 65536 == 1835008
        assert weight_bits("amari", 2048, 8, 3) == 2096128 * 2

    def test_gb_single_message(self):
        assert efficiency("gb", 2048, 8, 1, 256) == pytest.approx(64 / 1835008, rel=1e-12)

    def test_zero(self):
        assert efficiency("willshaw", 2048, 8, 0) == 0.0

    def test_amari_single(self):
        h = math.log2(math.comb(2048, 8))
        assert message_entropy("amari", 2048, 8) == pytest.approx(h, rel=1e-12)
        assert round(h, 3) == 72.681
        assert efficiency("amari", 2048, 8, 1) == pytest.approx(h / math.comb(2048, 2), rel=1e-12)

    def test_willshaw_linear_in_m(self):
        assert efficiency("willshaw", 2048, 8, 500) == pytest.approx(500 * efficiency("willshaw", 2048, 8, 1))

    def test_bad(self):
        with pytest.raises(ValueError):
            efficiency("willshaw", 0, 8, 1)
        with pytest.raises(ValueError):
            weight_bits("hopfield", 10, 2, 1)

    def test_load_scale(self):
        assert load_scale("willshaw", 2048, 8) == 256**2
        assert load_scale("gb", 2048, 8, 256) == 256**2 / 64


class TestSpec:
    def base(self, **kw):
        args = dict(model="willshaw", policy=dyn.WtaKth(4), patterns=[10], n=64, c=4, trials=10)
        args.update(kw)
        return ExperimentSpec(**args)

    def test_defaults(self):
        s = self.base()
        assert s.distribution == "exact" and s.batch_size == 100 and s.max_iters == 20
        assert ExperimentSpec("gb", dyn.GbSumOfMax(), [5], 16, 4, l=4).distribution == "gb"

    @pytest.mark.parametrize("kw", [
        dict(policy=dyn.GbSumOfMax()),
        dict(patterns=[]),
        dict(patterns=[0]),
        dict(trials=0),
        dict(erase=5),
        dict(model="gb"),
        dict(distribution="gb"),
        dict(patterns=[10**9]),
    ])
    def test_rejects(self, kw):
        with pytest.raises((ValueError, TypeError)):
            self.base(**kw)

    def test_resolved(self):
        d = self.base(policy=dyn.FixedThreshold(3)).resolved()
        assert d["policy"] == "threshold-3" and d["threshold"] == 3 and d["patterns"] == [10]

    def test_policy_names(self):
        for name in ("input-count", "wta-max", "wta-kth", "cluster-wta", "cluster-wta-sum", "som", "exhaustive"):
            assert policy_name(make_policy(name, 4)) == name
        with pytest.raises(ValueError):
            make_policy("threshold", 4)


class TestSweep:
    def test_single_message_gb(self):
        spec = ExperimentSpec("gb", dyn.GbSumOfMax(), [1], 64, 8, l=8, erase=4, trials=200)
        (p,) = run_retrieval_sweep(spec).points
        assert p.error_rate == 0.0 and p.stderr == 0.0 and p.rho == 0.5

    def test_aggregates(self):
        spec = ExperimentSpec("willshaw", dyn.WtaKth(4), [20, 200, 400], 64, 4, erase=2, trials=300, batch_size=50)
        res = run_retrieval_sweep(spec)
        for p in res.points:
            assert 0 <= p.error_rate <= 1
            assert p.stderr == pytest.approx(math.sqrt(p.error_rate * (1 - p.error_rate) / p.trials))
            assert p.alpha == pytest.approx(p.M / 256)
        assert [p.M for p in res.points] == [20, 200, 400]

    def test_deterministic_across_workers(self):
        spec = ExperimentSpec("willshaw", dyn.WtaKth(4), [50, 150], 64, 4, erase=2, trials=250, batch_size=50, seed=3)
        a = run_retrieval_sweep(spec).points
        b = run_retrieval_sweep(with_workers(spec, 3)).points
        key = lambda ps: [(p.M, p.errors, p.mean_iters, p.cycle_rate, p.notfound_rate) for p in ps]
        assert key(a) == key(b)

    def test_seed_changes_result(self):
        spec = ExperimentSpec("willshaw", dyn.WtaKth(4), [200], 64, 4, erase=2, trials=300)
        a = run_retrieval_sweep(spec).points[0]
        b = run_retrieval_sweep(ExperimentSpec("willshaw", dyn.WtaKth(4), [200], 64, 4, erase=2, trials=300, seed=1)).points[0]
        assert (a.errors, a.mean_iters) != (b.errors, b.mean_iters)

    def test_monotone_in_m(self):
        ms = [100, 300, 500, 700, 900]
        spec = ExperimentSpec("willshaw", dyn.WtaKth(4), ms, 128, 4, erase=2, trials=400, seed=5)
        pts = run_retrieval_sweep(spec).points
        assert all(three_sigma_le(a, b) for a, b in zip(pts, pts[1:]))

    def test_exhaustive_counts_not_found(self):
        spec = ExperimentSpec("willshaw", dyn.Exhaustive(max_candidates=5), [400], 64, 4, erase=3, trials=100)
        p = run_retrieval_sweep(spec).points[0]
        assert p.notfound_rate > 0 and p.capacity_rate > 0
        assert p.errors >= round(p.notfound_rate * p.trials)

    def test_iid_distribution(self):
        spec = ExperimentSpec("willshaw", dyn.WtaMax(), [30], 100, 5, distribution="iid", erase=0, trials=100)
        assert run_retrieval_sweep(spec).points[0].error_rate <= 0.1

    def test_ordering_small(self):
        kw = dict(patterns=[60], n=128, c=4, erase=2, trials=600, seed=2)
        gb = run_retrieval_sweep(ExperimentSpec("gb", dyn.GbClusterWta(), l=32, **kw)).points[0]
        w = run_retrieval_sweep(ExperimentSpec("willshaw", dyn.WtaKth(4), **kw)).points[0]
        a = run_retrieval_sweep(ExperimentSpec("amari", dyn.WtaKth(4), **kw)).points[0]
        assert three_sigma_le(gb, w) and three_sigma_le(w, a)


class TestProbes:
    def test_stability_single(self):
        for model, policy, l in [("willshaw", dyn.WtaMax(), None), ("gb", dyn.FixedThreshold(4), 8),
                                 ("amari", dyn.InputCountThreshold(), None)]:
            r = stability_probe(model, 32, 4, 1, policy, 50, l=l)
            if model == "amari":
                # no self term: a stored message's own neurons see c - 1 < c
                assert r.estimate == 0.0
            else:
                assert r.estimate == 1.0

    def test_stability_mismatch(self):
        with pytest.raises(TypeError):
            stability_probe("willshaw", 32, 4, 3, dyn.GbSumOfMax(), 10)

    def test_wrong_message_zero(self):
        assert wrong_message_probe(16, 3, 0, 100).estimate == 0.0

    def test_wrong_message_bound(self):
        for m in (200, 600):
            r = wrong_message_probe(16, 3, m, 3000, seed=1)
            assert r.estimate >= recognition_lower_bound(16, 3, m) - 3 * r.stderr

    def test_wrong_message_grows(self):
        l, c = 64, 4
        lo = wrong_message_probe(l, c, int(1.5 * l * l * math.log(c)), 4000, seed=2)
        hi = wrong_message_probe(l, c, int(2.5 * l * l * math.log(c)), 4000, seed=2)
        assert hi.estimate - lo.estimate > 3 * math.hypot(hi.stderr, lo.stderr)

    def test_subclique_trivial(self):
        assert subclique_probe(16, 4, 10, 1.0, 100).estimate == 1.0
        assert subclique_probe(16, 4, 0, 0.5, 100).estimate == 0.0

    def test_subclique_rho(self):
        assert kept_clusters(4, 0.5) == 2 and kept_clusters(5, 0.5) == 3
        r = subclique_probe(16, 5, 300, 0.5, 500, seed=3)
        assert r.rho == 0.6
        assert r.estimate >= subclique_lower_bound(16, 5, 300, r.rho) - 3 * r.stderr

    def test_probe_determinism(self):
        a = subclique_probe(16, 4, 300, 0.5, 400, seed=4)
        b = subclique_probe(16, 4, 300, 0.5, 400, seed=4, workers=2)
        assert a == b
