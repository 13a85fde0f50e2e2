"""Monte Carlo harness: retrieval error sweeps and the capacity / recognition probes.

Every batch of trials draws its own random stream from ``(seed, point, batch, purpose)``,
so results are identical for any worker count. One network is built per batch and
shared by the batch's trials.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import dynamics as dyn
from .models import GBNetwork, network_class
from .patterns import NeuronSpace, exact_c_batch, gb_batch, iid_batch, substream

MODELS = ("amari", "willshaw", "gb")
DISTRIBUTIONS = ("exact", "iid", "gb")
MAX_LOAD = 5 * 10**9  # n * M guard

_STREAM_MESSAGES, _STREAM_RETRIEVAL = 0, 1


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SPARSE_ASSOC_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------- policy naming

def policy_name(policy) -> str:
    if isinstance(policy, dyn.FixedThreshold):
        return f"threshold-{policy.h}"
    if isinstance(policy, dyn.InputCountThreshold):
        return "input-count"
    if isinstance(policy, dyn.WtaMax):
        return "wta-max"
    if isinstance(policy, dyn.WtaKth):
        return "wta-kth"
    if isinstance(policy, dyn.GbClusterWta):
        return "cluster-wta" if policy.score == "som" else "cluster-wta-sum"
    if isinstance(policy, dyn.GbSumOfMax):
        return "som"
    if isinstance(policy, dyn.Exhaustive):
        return "exhaustive"
    raise TypeError(f"unknown policy {policy!r}")


def make_policy(name: str, c: int, threshold: Optional[int] = None, max_candidates: int = dyn.DEFAULT_MAX_CANDIDATES):
    if name == "threshold":
        if threshold is None:
            raise ValueError("policy 'threshold' needs a threshold value")
        return dyn.FixedThreshold(threshold)
    table = {
        "input-count": dyn.InputCountThreshold,
        "wta-max": dyn.WtaMax,
        "wta-kth": lambda: dyn.WtaKth(c),
        "cluster-wta": dyn.GbClusterWta,
        "cluster-wta-sum": lambda: dyn.GbClusterWta("sum"),
        "som": dyn.GbSumOfMax,
        "exhaustive": lambda: dyn.Exhaustive(max_candidates),
    }
    if name not in table:
        raise ValueError(f"unknown policy {name!r}")
    return table[name]()


# ---------------------------------------------------------------- efficiency

def _log2_binom(n: int, k: int) -> float:
    if k < 0 or k > n:
        return float("-inf")
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / math.log(2)


def weight_bits(model: str, n: int, c: int, m: int, l: Optional[int] = None) -> float:
    """Bits needed to write the weights down: ``C_Amari``, ``C_Willshaw`` or ``C_GB``."""
    if model == "amari":
        return math.comb(n, 2) * math.log2(m + 1)
    if model == "willshaw":
        return float(math.comb(n, 2))
    if model == "gb":
        if l is None:
            raise ValueError("GB cost needs l")
        return float(math.comb(c, 2) * l * l)
    raise ValueError(f"unknown model {model!r}")


def message_entropy(model: str, n: int, c: int, l: Optional[int] = None) -> float:
    if model == "gb":
        if l is None:
            raise ValueError("GB entropy needs l")
        return c * math.log2(l)
    if model in ("amari", "willshaw"):
        return _log2_binom(n, c)
    raise ValueError(f"unknown model {model!r}")


def efficiency(model: str, n: int, c: int, m: int, l: Optional[int] = None) -> float:
    """Entropy of ``m`` stored messages divided by the weight bit cost."""
    if n <= 0 or c <= 0 or m < 0:
        raise ValueError("parameters must be positive")
    if m == 0:
        return 0.0
    return m * message_entropy(model, n, c, l) / weight_bits(model, n, c, m, l)


def load_scale(model: str, n: int, c: int, l: Optional[int] = None) -> float:
    """Divisor turning ``M`` into the load ``alpha``: ``(N/c)^2``, or ``l^2/c^2`` for GB."""
    if model == "gb":
        return (l * l) / (c * c)
    return (n / c) ** 2


# ---------------------------------------------------------------- specs and results

@dataclass(frozen=True)
class ExperimentSpec:
    model: str
    policy: object
    patterns: tuple
    n: int
    c: int
    l: Optional[int] = None
    distribution: Optional[str] = None
    erase: int = 0
    trials: int = 2000
    batch_size: int = 100
    max_iters: int = dyn.DEFAULT_MAX_ITERS
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(int(m) for m in self.patterns))
        if self.distribution is None:
            object.__setattr__(self, "distribution", "gb" if self.model == "gb" else "exact")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if (self.model == "gb") != (self.distribution == "gb"):
            raise ValueError("GB networks need GB messages and vice versa")
        if self.model == "gb":
            if self.l is None or self.c * self.l != self.n:
                raise ValueError("GB sweeps need c clusters of l neurons with n = c*l")
        if self.trials < 1 or self.batch_size < 1 or self.max_iters < 1:
            raise ValueError("trials, batch_size and max_iters must be positive")
        if not self.patterns:
            raise ValueError("empty M sweep")
        if min(self.patterns) < 1:
            raise ValueError("retrieval needs at least one stored message")
        if not (0 <= self.erase <= self.c):
            raise ValueError(f"cannot erase {self.erase} of {self.c} active neurons")
        if self.n * max(self.patterns) > MAX_LOAD:
            raise ValueError(f"n*M = {self.n * max(self.patterns)} exceeds the resource guard {MAX_LOAD}")
        dyn.check_policy(self.network_class()(self.space(), keep_stored=False), self.policy)

    def space(self) -> NeuronSpace:
        return NeuronSpace(self.n, self.c, self.l) if self.model == "gb" else NeuronSpace(self.n)

    def network_class(self):
        return network_class(self.model)

    @property
    def policy_name(self) -> str:
        return policy_name(self.policy)

    def resolved(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "policy"}
        d["patterns"] = list(self.patterns)
        d["policy"] = self.policy_name
        if isinstance(self.policy, dyn.FixedThreshold):
            d["threshold"] = self.policy.h
        if isinstance(self.policy, dyn.Exhaustive):
            d["max_candidates"] = self.policy.max_candidates
        return d


@dataclass
class PointResult:
    M: int
    alpha: float
    rho: float
    trials: int
    errors: int
    mean_iters: float
    cycle_rate: float
    notfound_rate: float
    capacity_rate: float
    efficiency: float
    wall_time: float = 0.0

    @property
    def error_rate(self) -> float:
        return self.errors / self.trials

    @property
    def stderr(self) -> float:
        p = self.error_rate
        return math.sqrt(p * (1.0 - p) / self.trials)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    points: list = field(default_factory=list)


@dataclass
class ProbeResult:
    estimate: float
    stderr: float
    trials: int
    rho: Optional[float] = None

    def __float__(self) -> float:
        return float(self.estimate)


# ---------------------------------------------------------------- parallel execution

def _execute(fn, tasks: Sequence[tuple], workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _batches(trials: int, batch_size: int) -> list[tuple[int, int]]:
    return [(b, min(batch_size, trials - s)) for b, s in enumerate(range(0, trials, batch_size))]


def _draw_messages(distribution: str, n: int, c: int, l: Optional[int], m: int, rng):
    if distribution == "gb":
        return gb_batch(c, l, m, rng)
    if distribution == "exact":
        return exact_c_batch(n, c, m, rng)
    return iid_batch(n, c / n, m, rng)


def _message(messages, mu: int) -> np.ndarray:
    return messages[mu]


# ---------------------------------------------------------------- retrieval sweep

def _sweep_batch(spec: ExperimentSpec, point: int, batch: int, ntrials: int) -> np.ndarray:
    """Counters ``[errors, steps, cycles, not_found, capacity_exceeded]`` for one batch."""
    m = spec.patterns[point]
    rng = substream(spec.seed, point, batch, _STREAM_MESSAGES)
    tie_rng = substream(spec.seed, point, batch, _STREAM_RETRIEVAL)
    messages = _draw_messages(spec.distribution, spec.n, spec.c, spec.l, m, rng)
    net = spec.network_class().build(spec.space(), messages, keep_stored=False).freeze()
    out = np.zeros(5, dtype=np.int64)
    for _ in range(ntrials):
        orig = _message(messages, int(rng.integers(m)))
        k = orig.size
        f = min(spec.erase, k)
        keep = np.sort(rng.choice(k, size=k - f, replace=False)) if f else np.arange(k)
        partial = orig[keep]
        res = dyn.retrieve_idx(net, partial, spec.policy, spec.max_iters, k, tie_rng)
        out[0] += not np.array_equal(res.state, orig)
        out[1] += res.steps
        out[2] += res.cycled
        out[3] += res.not_found
        out[4] += res.capacity_exceeded
    return out


def run_retrieval_sweep(spec: ExperimentSpec, progress=None) -> ExperimentResult:
    """Error rate of retrieving erased stored messages, one point per ``M`` in the sweep."""
    result = ExperimentResult(spec)
    batches = _batches(spec.trials, spec.batch_size)
    for point, m in enumerate(spec.patterns):
        t0 = time.perf_counter()
        tasks = [(spec, point, b, nt) for b, nt in batches]
        counts = np.sum(_execute(_sweep_batch, tasks, spec.workers), axis=0)
        errors, steps, cycles, notfound, capacity = (int(x) for x in counts)
        pr = PointResult(
            M=m,
            alpha=m / load_scale(spec.model, spec.n, spec.c, spec.l),
            rho=spec.erase / spec.c,
            trials=spec.trials,
            errors=errors,
            mean_iters=steps / spec.trials,
            cycle_rate=cycles / spec.trials,
            notfound_rate=(notfound + capacity) / spec.trials,
            capacity_rate=capacity / spec.trials,
            efficiency=efficiency(spec.model, spec.n, spec.c, m, spec.l),
            wall_time=time.perf_counter() - t0,
        )
        result.points.append(pr)
        if progress is not None:
            progress(pr)
    return result


# ---------------------------------------------------------------- probes

def _probe_result(hits: int, trials: int, rho=None) -> ProbeResult:
    p = hits / trials
    return ProbeResult(p, math.sqrt(p * (1.0 - p) / trials), trials, rho)


def _stability_batch(model, n, c, l, distribution, m, policy, seed, batch, ntrials) -> int:
    rng = substream(seed, batch, _STREAM_MESSAGES)
    messages = _draw_messages(distribution, n, c, l, m, rng)
    space = NeuronSpace(n, c, l) if model == "gb" else NeuronSpace(n)
    net = network_class(model).build(space, messages, keep_stored=False).freeze()
    hits = 0
    h = policy.h if isinstance(policy, dyn.FixedThreshold) else None
    for _ in range(ntrials):
        orig = _message(messages, int(rng.integers(m)))
        nxt = dyn._step_idx(net, orig, policy, orig.size if h is None else h)
        hits += np.array_equal(nxt, orig)
    return hits


def stability_probe(
    model: str, n: int, c: int, m: int, policy, trials: int, seed: int = 0,
    distribution: Optional[str] = None, l: Optional[int] = None, batch_size: int = 100, workers: int = 1,
) -> ProbeResult:
    """Fraction of trials where one step maps an uncorrupted stored message onto itself."""
    distribution = distribution or ("gb" if model == "gb" else "exact")
    if m < 1:
        raise ValueError("stability needs at least one stored message")
    space = NeuronSpace(n, c, l) if model == "gb" else NeuronSpace(n)
    dyn.check_policy(network_class(model)(space, keep_stored=False), policy)
    tasks = [(model, n, c, l, distribution, m, policy, seed, b, nt) for b, nt in _batches(trials, batch_size)]
    return _probe_result(sum(_execute(_stability_batch, tasks, workers)), trials)


def _wrong_batch(l, c, m, seed, batch, ntrials) -> int:
    rng = substream(seed, batch, _STREAM_MESSAGES)
    space = NeuronSpace.clustered(c, l)
    net = GBNetwork.build(space, gb_batch(c, l, m, rng), keep_stored=False).freeze()
    offsets = np.arange(c) * l
    return sum(net.recognize(rng.integers(0, l, size=c) + offsets) for _ in range(ntrials))


def wrong_message_probe(l: int, c: int, m: int, trials: int, seed: int = 0, batch_size: int = 100, workers: int = 1) -> ProbeResult:
    """Chance that a random GB message, independent of the stored ones, is recognized."""
    if m == 0:
        return ProbeResult(0.0, 0.0, trials)
    tasks = [(l, c, m, seed, b, nt) for b, nt in _batches(trials, batch_size)]
    return _probe_result(sum(_execute(_wrong_batch, tasks, workers)), trials)


def kept_clusters(c: int, rho: float) -> int:
    return int(math.floor(rho * c + 0.5))


def _subclique_batch(l, c, m, kept, seed, batch, ntrials) -> int:
    rng = substream(seed, batch, _STREAM_MESSAGES)
    space = NeuronSpace.clustered(c, l)
    messages = gb_batch(c, l, m, rng)
    net = GBNetwork.build(space, messages, keep_stored=False).freeze()
    hits = 0
    for _ in range(ntrials):
        true = messages[int(rng.integers(m))] % l
        wrong = rng.integers(0, l - 1, size=c - kept)
        wrong += wrong >= true[kept:]
        query = np.concatenate([true[:kept], wrong]) + np.arange(c) * l
        hits += net.recognize(query)
    return hits


def subclique_probe(
    l: int, c: int, m: int, rho: float, trials: int, seed: int = 0, batch_size: int = 100, workers: int = 1,
) -> ProbeResult:
    """Chance that a stored message with its first ``round(rho*c)`` clusters kept and a wrong
    neuron in every other cluster is still recognized. ``rho`` in the result is the realized
    kept fraction."""
    if not (0.0 <= rho <= 1.0):
        raise ValueError(f"kept fraction must lie in [0, 1], got {rho}")
    kept = kept_clusters(c, rho)
    realized = kept / c
    if kept == c:
        return ProbeResult(1.0, 0.0, trials, realized)
    if m == 0:
        return ProbeResult(0.0, 0.0, trials, realized)
    tasks = [(l, c, m, kept, seed, b, nt) for b, nt in _batches(trials, batch_size)]
    return _probe_result(sum(_execute(_subclique_batch, tasks, workers)), trials, realized)


def with_workers(spec: ExperimentSpec, workers: int) -> ExperimentSpec:
    return replace(spec, workers=workers)
