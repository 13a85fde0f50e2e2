"""Retrieval dynamics: synchronous one-step maps, their iteration, and exhaustive completion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .models import AmariNetwork, GBNetwork, WillshawNetwork
from .patterns import Pattern

DEFAULT_MAX_ITERS = 20
DEFAULT_MAX_CANDIDATES = 10**6


# ---------------------------------------------------------------- policies

@dataclass(frozen=True)
class FixedThreshold:
    h: int

    def __post_init__(self):
        if self.h < 0:
            raise ValueError(f"threshold must be non-negative, got {self.h}")


@dataclass(frozen=True)
class InputCountThreshold:
    """Threshold equal to the number of active neurons in the input, kept for all steps."""


@dataclass(frozen=True)
class WtaMax:
    """Keep the neurons reaching the maximal score."""


@dataclass(frozen=True)
class WtaKth:
    """Threshold at the ``c``-th largest score: the largest ``h`` leaving at least ``c`` active."""

    c: int

    def __post_init__(self):
        if self.c < 1:
            raise ValueError(f"WtaKth needs c >= 1, got {self.c}")


@dataclass(frozen=True)
class GbClusterWta:
    """Per-cluster winner-take-all on the SUM-OF-MAX score (``"som"``) or the plain field (``"sum"``)."""

    score: str = "som"

    def __post_init__(self):
        if self.score not in ("som", "sum"):
            raise ValueError(f"unknown GB score {self.score!r}")


@dataclass(frozen=True)
class GbSumOfMax:
    """Fill empty clusters, then keep neurons whose SUM-OF-MAX score equals ``c``."""


@dataclass(frozen=True)
class Exhaustive:
    max_candidates: int = DEFAULT_MAX_CANDIDATES

    def __post_init__(self):
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be positive")


RetrievalPolicy = Union[FixedThreshold, InputCountThreshold, WtaMax, WtaKth, GbClusterWta, GbSumOfMax, Exhaustive]

_ALLOWED = {
    AmariNetwork: (FixedThreshold, InputCountThreshold, WtaMax, WtaKth, Exhaustive),
    WillshawNetwork: (FixedThreshold, InputCountThreshold, WtaMax, WtaKth, Exhaustive),
    GBNetwork: (FixedThreshold, InputCountThreshold, GbClusterWta, GbSumOfMax, Exhaustive),
}


class PolicyMismatchError(TypeError):
    pass


def check_policy(network, policy):
    allowed = _ALLOWED.get(type(network))
    if allowed is None:
        raise TypeError(f"not a network: {type(network).__name__}")
    if not isinstance(policy, allowed):
        raise PolicyMismatchError(f"{type(policy).__name__} does not apply to {type(network).__name__}")


# ---------------------------------------------------------------- one-step maps on index arrays

def _threshold(scores: np.ndarray, h: int) -> np.ndarray:
    return np.flatnonzero(scores >= h)


def _wta_max(scores: np.ndarray) -> np.ndarray:
    top = scores.max() if scores.size else 0
    if top <= 0:
        return np.empty(0, dtype=np.int64)
    return np.flatnonzero(scores == top)


def _wta_kth(scores: np.ndarray, c: int) -> np.ndarray:
    n = scores.size
    if c >= n:
        return np.arange(n)
    thr = np.partition(scores, n - c)[n - c]
    return np.flatnonzero(scores >= thr)


def _cluster_wta(net: GBNetwork, idx: np.ndarray, score: str) -> np.ndarray:
    s = net.som_scores(idx) if score == "som" else net.fields(idx)
    s = s.reshape(net.space.c, net.space.l)
    keep = s == s.max(axis=1, keepdims=True)
    return np.flatnonzero(keep.ravel())


def _fill_empty(net: GBNetwork, idx: np.ndarray) -> np.ndarray:
    c, l = net.space.c, net.space.l
    occupied = np.zeros(c, dtype=bool)
    occupied[idx // l] = True
    if occupied.all():
        return idx
    extra = (np.flatnonzero(~occupied)[:, None] * l + np.arange(l)).ravel()
    return np.union1d(idx, extra)


def _som_step(net: GBNetwork, idx: np.ndarray) -> np.ndarray:
    filled = _fill_empty(net, idx)
    # only active neurons can reach score c: within its own cluster a neuron connects to itself alone
    s = net.som_scores(filled, rows=filled)
    return filled[s >= net.space.c]


def _step_idx(net, idx: np.ndarray, policy, h: Optional[int]) -> np.ndarray:
    if isinstance(policy, (FixedThreshold, InputCountThreshold)):
        return _threshold(net.scores(idx), h)
    if isinstance(policy, WtaMax):
        return _wta_max(net.scores(idx))
    if isinstance(policy, WtaKth):
        return _wta_kth(net.scores(idx), policy.c)
    if isinstance(policy, GbClusterWta):
        return _cluster_wta(net, idx, policy.score)
    if isinstance(policy, GbSumOfMax):
        return _som_step(net, idx)
    raise PolicyMismatchError(f"{type(policy).__name__} is not an iterated dynamics")


def _as_pattern(net, idx) -> Pattern:
    return Pattern._trusted(net.space, np.asarray(idx, dtype=np.int64))


def _idx(net, state: Pattern) -> np.ndarray:
    if state.space != net.space:
        raise ValueError("state belongs to a different neuron space")
    return state.active


# ---------------------------------------------------------------- public one-step maps

def step_amari(network: AmariNetwork, state: Pattern, h: int) -> Pattern:
    """Neuron ``i`` fires iff its field ``sum_{j != i} J_ij sigma_j`` is at least ``h``."""
    if h < 0:
        raise ValueError("threshold must be non-negative")
    return _as_pattern(network, _threshold(network.fields(_idx(network, state)), h))


def step_willshaw_threshold(network: WillshawNetwork, state: Pattern, h: int) -> Pattern:
    return _as_pattern(network, _threshold(network.scores(_idx(network, state)), h))


def step_willshaw_wta(network: WillshawNetwork, state: Pattern, policy: Union[WtaMax, WtaKth]) -> Pattern:
    s = network.scores(_idx(network, state))
    if isinstance(policy, WtaMax):
        return _as_pattern(network, _wta_max(s))
    if isinstance(policy, WtaKth):
        return _as_pattern(network, _wta_kth(s, policy.c))
    raise PolicyMismatchError("expected WtaMax or WtaKth")


def step_gb_wta(network: GBNetwork, state: Pattern, score: str = "som") -> Pattern:
    if score not in ("som", "sum"):
        raise ValueError(f"unknown GB score {score!r}")
    return _as_pattern(network, _cluster_wta(network, _idx(network, state), score))


def step_gb_som(network: GBNetwork, state: Pattern) -> Pattern:
    return _as_pattern(network, _som_step(network, _idx(network, state)))


def step(network, state: Pattern, policy, h: Optional[int] = None) -> Pattern:
    """One synchronous step of ``policy``. ``InputCountThreshold`` uses ``h`` or ``|state|``."""
    check_policy(network, policy)
    idx = _idx(network, state)
    if isinstance(policy, FixedThreshold):
        h = policy.h
    elif isinstance(policy, InputCountThreshold) and h is None:
        h = idx.size
    return _as_pattern(network, _step_idx(network, idx, policy, h))


# ---------------------------------------------------------------- iteration

@dataclass
class Trajectory:
    """States ``sigma(0), sigma(1), ...`` and how the iteration ended.

    ``status`` is ``"converged"`` (``converged_at`` steps, last two states equal),
    ``"cycle"`` (``states[-1] == states[entry]``, ``period >= 2``) or ``"truncated"``.
    """

    states: list[Pattern]
    status: str
    converged_at: Optional[int] = None
    entry: Optional[int] = None
    period: Optional[int] = None
    max_iters: int = DEFAULT_MAX_ITERS

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def cycled(self) -> bool:
        return self.status == "cycle"

    def state_at(self, t: int) -> Pattern:
        """State after ``t`` steps, extended periodically past the recorded history."""
        if t < len(self.states):
            return self.states[t]
        if self.status == "converged":
            return self.states[-1]
        if self.status == "cycle":
            return self.states[self.entry + (t - self.entry) % self.period]
        raise IndexError(f"trajectory truncated at step {self.steps}")

    @property
    def final(self) -> Pattern:
        """The state reached after ``max_iters`` steps."""
        return self.state_at(self.max_iters) if self.status != "truncated" else self.states[-1]


def _run(net, idx: np.ndarray, policy, max_iters: int):
    h = policy.h if isinstance(policy, FixedThreshold) else idx.size
    seen = {idx.tobytes(): 0}
    states = [idx]
    for t in range(max_iters):
        nxt = _step_idx(net, states[-1], policy, h)
        key = nxt.tobytes()
        states.append(nxt)
        e = seen.get(key)
        if e is not None:
            if e == t:
                return states, "converged", t + 1, None, None
            return states, "cycle", None, e, t + 1 - e
        seen[key] = t + 1
    return states, "truncated", None, None, None


def iterate(network, input: Pattern, policy, max_iters: int = DEFAULT_MAX_ITERS) -> Trajectory:
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    check_policy(network, policy)
    if isinstance(policy, Exhaustive):
        raise PolicyMismatchError("exhaustive search is not an iterated dynamics; use retrieve_exhaustive")
    states, status, conv, entry, period = _run(network, _idx(network, input), policy, max_iters)
    return Trajectory(
        [_as_pattern(network, s) for s in states], status,
        converged_at=conv, entry=entry, period=period, max_iters=max_iters,
    )


# ---------------------------------------------------------------- exhaustive completion

class CapacityExceededError(RuntimeError):
    pass


class CompletionNotFoundError(LookupError):
    pass


def _cliques(adj: list[int], size: int, limit: int) -> list[tuple[int, ...]]:
    """All ``size``-cliques of the graph given as neighbor bitmasks, each listed once."""
    out: list[tuple[int, ...]] = []
    if size == 0:
        return [()]

    def grow(chosen: list[int], cand: int):
        if len(chosen) == size:
            out.append(tuple(chosen))
            if len(out) > limit:
                raise CapacityExceededError(f"more than {limit} candidate completions")
            return
        need = size - len(chosen)
        while cand:
            if cand.bit_count() < need:
                return
            v = (cand & -cand).bit_length() - 1
            cand &= cand - 1
            chosen.append(v)
            # only extend with higher-numbered vertices so each clique appears once
            grow(chosen, cand & adj[v])
            chosen.pop()

    grow([], (1 << len(adj)) - 1)
    return out


def _bitmasks(adj: np.ndarray) -> list[int]:
    packed = np.packbits(adj, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def _gb_completions(net: GBNetwork, idx: np.ndarray, limit: int) -> list[np.ndarray]:
    c, l = net.space.c, net.space.l
    occupied = np.zeros(c, dtype=bool)
    occupied[idx // l] = True
    empty = np.flatnonzero(~occupied)
    if empty.size == 0:
        return [idx]
    pool = (empty[:, None] * l + np.arange(l)).ravel()
    sub = net.bits.rows(pool)
    ok = sub[:, idx].all(axis=1) & sub[np.arange(pool.size), pool]
    cand = pool[ok]
    if cand.size == 0:
        return []
    adj = net.bits.rows(cand)[:, cand]
    # same-cluster candidates are never adjacent off the diagonal; clear self loops
    np.fill_diagonal(adj, False)
    # visit clusters with the fewest candidates first
    cl = cand // l
    counts = {b: int((cl == b).sum()) for b in empty}
    if min(counts.values()) == 0:
        return []
    order = np.array(sorted(range(cand.size), key=lambda v: (counts[int(cl[v])], int(cl[v]), v)))
    cand, adj = cand[order], adj[np.ix_(order, order)]
    found = _cliques(_bitmasks(adj), empty.size, limit)
    return [np.sort(np.concatenate([idx, cand[list(q)]])) for q in found]


def _graph_completions(adj_rows, used, idx: np.ndarray, target: int, limit: int):
    """Candidates connected to all of ``idx`` and cliques of the missing size among them."""
    t = target - idx.size
    if t < 0:
        raise ValueError("partial pattern larger than target size")
    if t == 0:
        return np.empty(0, dtype=np.int64), [()]
    if idx.size:
        ok = adj_rows(idx).all(axis=0)
        ok[idx] = False
        cand = np.flatnonzero(ok)
    else:
        cand = np.flatnonzero(used())
    if cand.size < t:
        return cand, []
    adj = adj_rows(cand)[:, cand]
    np.fill_diagonal(adj, False)
    if t > 1:
        deg = adj.sum(axis=1)
        keep = deg >= t - 1
        cand, adj = cand[keep], adj[np.ix_(keep, keep)]
    return cand, _cliques(_bitmasks(adj), t, limit)


def retrieve_exhaustive(
    network,
    partial: Pattern,
    target_size: Optional[int] = None,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
    rng: Optional[np.random.Generator] = None,
) -> Pattern:
    """Pick one completion of ``partial`` to a full clique of ``target_size`` neurons.

    GB: one neuron per empty cluster. Willshaw: any missing neurons forming a clique with
    the partial ones; one valid completion drawn uniformly. Amari: cliques of the ``J > 0``
    graph, choosing uniformly among those with the largest sum of internal weights.
    """
    rng = rng if rng is not None else np.random.default_rng()
    idx = _idx(network, partial)
    if isinstance(network, GBNetwork):
        found = _gb_completions(network, idx, max_candidates)
        if not found:
            raise CompletionNotFoundError("no completion forms a clique")
        return _as_pattern(network, found[rng.integers(len(found))])
    if target_size is None:
        raise ValueError("target_size is required for Willshaw and Amari networks")
    if isinstance(network, WillshawNetwork):
        cand, found = _graph_completions(network.bits.rows, lambda: np.diagonal(network.dense()), idx, target_size, max_candidates)
        if not found:
            raise CompletionNotFoundError("no completion forms a clique")
        pick = found[rng.integers(len(found))]
        return _as_pattern(network, np.sort(np.concatenate([idx, cand[list(pick)]])))
    if isinstance(network, AmariNetwork):
        cand, found = _graph_completions(network.adjacency, lambda: network.weights.any(axis=1), idx, target_size, max_candidates)
        if not found:
            raise CompletionNotFoundError("no completion forms a clique")
        sets = np.sort(np.hstack([np.broadcast_to(idx, (len(found), idx.size)), cand[np.array(found, dtype=np.int64)]]), axis=1)
        totals = network.weights[sets[:, :, None], sets[:, None, :]].sum(axis=(1, 2), dtype=np.int64)
        best = np.flatnonzero(totals == totals.max())
        return _as_pattern(network, sets[best[rng.integers(best.size)]])
    raise TypeError(f"not a network: {type(network).__name__}")


# ---------------------------------------------------------------- retrieval outcome (experiments)

@dataclass
class Outcome:
    state: np.ndarray
    steps: int
    cycled: bool = False
    not_found: bool = False
    capacity_exceeded: bool = False
    extra: dict = field(default_factory=dict)


def retrieve_idx(net, idx: np.ndarray, policy, max_iters: int, target_size: Optional[int], rng) -> Outcome:
    """Index-level retrieval used by the Monte Carlo harness."""
    if isinstance(policy, Exhaustive):
        try:
            p = retrieve_exhaustive(net, _as_pattern(net, idx), target_size, policy.max_candidates, rng)
        except CompletionNotFoundError:
            return Outcome(np.empty(0, dtype=np.int64), 1, not_found=True)
        except CapacityExceededError:
            return Outcome(np.empty(0, dtype=np.int64), 1, capacity_exceeded=True)
        return Outcome(p.active, 1)
    states, status, conv, entry, period = _run(net, idx, policy, max_iters)
    if status == "cycle":
        final = states[entry + (max_iters - entry) % period]
    else:
        final = states[-1]
    return Outcome(final, len(states) - 1, cycled=status == "cycle")
