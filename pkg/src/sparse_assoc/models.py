"""Synaptic weights of the Amari, Willshaw and GB (clustered clique) networks.

All three are built from a set of stored messages:

* Amari: integer counts ``J[i, j] = #{mu : i, j both active in mu}`` for ``i != j``,
  zero diagonal.
* Willshaw: the clipped counts ``min(1, J[i, j])``, diagonal included, so a neuron
  used by any stored message sees itself (the memory effect).
* GB: the same clipped rule restricted to messages with one active neuron per
  cluster. Inside a cluster only the self entries can be set.
"""

from __future__ import annotations

from typing import Iterable, Sequence, Union

import numpy as np

from .bits import GATHER_CUTOFF, BitMatrix
from .patterns import NeuronSpace, Pattern

AMARI, WILLSHAW, GB = 0, 1, 2
MODEL_NAMES = {AMARI: "amari", WILLSHAW: "willshaw", GB: "gb"}

_CHUNK = 65536

MessageBatch = Union[np.ndarray, Sequence[np.ndarray]]


class FrozenNetworkError(RuntimeError):
    pass


class StoredSet:
    """Stored messages kept as raw index rows; ``Pattern`` objects are made on access."""

    def __init__(self, space: NeuronSpace):
        self.space = space
        self._blocks: list[np.ndarray] = []
        self._ragged: list[np.ndarray] = []
        self._order: list[tuple[int, int, int]] = []  # (kind, block, start)
        self._len = 0

    def _append_rows(self, rows: np.ndarray):
        self._blocks.append(rows)
        self._order.append((0, len(self._blocks) - 1, self._len))
        self._len += rows.shape[0]

    def _append_one(self, idx: np.ndarray):
        self._ragged.append(idx)
        self._order.append((1, len(self._ragged) - 1, self._len))
        self._len += 1

    def __len__(self) -> int:
        return self._len

    def indices(self, mu: int) -> np.ndarray:
        if not (0 <= mu < self._len):
            raise IndexError(mu)
        for kind, b, start in reversed(self._order):
            if mu >= start:
                return self._blocks[b][mu - start] if kind == 0 else self._ragged[b]
        raise IndexError(mu)  # pragma: no cover

    def __getitem__(self, mu: int) -> Pattern:
        return Pattern._trusted(self.space, self.indices(mu))

    def __iter__(self):
        for mu in range(self._len):
            yield self[mu]


def _as_rows(space: NeuronSpace, messages) -> list[np.ndarray]:
    """Normalize messages into a list of equal-width int64 index arrays."""
    if isinstance(messages, Pattern):
        messages = [messages]
    if isinstance(messages, np.ndarray) and messages.ndim == 2:
        rows = [np.sort(messages.astype(np.int64), axis=1)]
    else:
        by_size: dict[int, list[np.ndarray]] = {}
        for m in messages:
            if isinstance(m, Pattern):
                if m.space != space:
                    raise ValueError("pattern belongs to a different neuron space")
                a = m.active
            else:
                a = np.sort(np.asarray(m, dtype=np.int64))
            by_size.setdefault(a.size, []).append(a)
        rows = [np.array(v, dtype=np.int64).reshape(len(v), k) for k, v in by_size.items()]
    for r in rows:
        if r.size and (r.min() < 0 or r.max() >= space.n):
            raise ValueError(f"message index outside [0, {space.n})")
    return rows


class _Network:
    model_tag = -1

    def __init__(self, space: NeuronSpace, keep_stored: bool = True):
        self.space = space
        self.m_stored = 0
        self.stored = StoredSet(space) if keep_stored else None
        self.frozen = False

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def model_name(self) -> str:
        return MODEL_NAMES[self.model_tag]

    def freeze(self):
        self.frozen = True
        return self

    def _check_writable(self):
        if self.frozen:
            raise FrozenNetworkError("network is frozen")

    def _validate(self, rows: list[np.ndarray]):
        pass

    def store(self, pattern: Pattern):
        if pattern.space != self.space:
            raise ValueError("pattern belongs to a different neuron space")
        return self.store_many([pattern])

    def store_many(self, messages: Union[MessageBatch, Iterable[Pattern]]):
        self._check_writable()
        ragged_input = not (isinstance(messages, np.ndarray) and messages.ndim == 2)
        if ragged_input:
            messages = list(messages)
        rows = _as_rows(self.space, messages)
        self._validate(rows)
        for r in rows:
            self._add_rows(r)
        total = sum(r.shape[0] for r in rows)
        self.m_stored += total
        if self.stored is not None:
            if ragged_input:
                # keep insertion order for ragged input
                for m in messages:
                    a = m.active if isinstance(m, Pattern) else np.sort(np.asarray(m, dtype=np.int64))
                    self.stored._append_one(a)
            else:
                self.stored._append_rows(rows[0])
        return self

    @classmethod
    def build(cls, space: NeuronSpace, messages, keep_stored: bool = True):
        return cls(space, keep_stored=keep_stored).store_many(messages)

    def _add_rows(self, rows: np.ndarray):
        raise NotImplementedError

    def _state_idx(self, state) -> np.ndarray:
        if isinstance(state, Pattern):
            if state.space != self.space:
                raise ValueError("state belongs to a different neuron space")
            return state.active
        return np.asarray(state, dtype=np.int64)


class AmariNetwork(_Network):
    """Integer co-activation counts, zero diagonal. Kept as a full symmetric int32 matrix."""

    model_tag = AMARI

    def __init__(self, space: NeuronSpace, keep_stored: bool = True):
        super().__init__(space, keep_stored)
        self.weights = np.zeros((space.n, space.n), dtype=np.int32)

    def _add_rows(self, rows: np.ndarray):
        m, k = rows.shape
        if m == 0 or k < 2:
            return
        n = self.n
        ii = rows[:, :, None]
        jj = rows[:, None, :]
        off = ~np.eye(k, dtype=bool)
        for s in range(0, m, _CHUNK):
            flat = (ii[s:s + _CHUNK] * n + jj[s:s + _CHUNK])[:, off].ravel()
            self.weights += np.bincount(flat, minlength=n * n).reshape(n, n).astype(np.int32)

    def fields(self, state) -> np.ndarray:
        """Local fields ``S_i = sum_{j != i} J_ij sigma_j`` for every neuron."""
        idx = self._state_idx(state)
        if idx.size == 0:
            return np.zeros(self.n, dtype=np.int64)
        return self.weights[idx].sum(axis=0, dtype=np.int64)

    def field(self, state, i: int) -> int:
        idx = self._state_idx(state)
        return int(self.weights[i, idx].sum(dtype=np.int64))

    def scores(self, state) -> np.ndarray:
        return self.fields(state)

    def adjacency(self, idx=None) -> np.ndarray:
        """Binary graph ``J > 0`` restricted to ``idx`` rows (all rows if None)."""
        w = self.weights if idx is None else self.weights[np.asarray(idx, dtype=np.int64)]
        return w > 0

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, AmariNetwork)
            and self.space == other.space
            and self.m_stored == other.m_stored
            and np.array_equal(self.weights, other.weights)
        )


class _BinaryNetwork(_Network):
    def __init__(self, space: NeuronSpace, keep_stored: bool = True):
        super().__init__(space, keep_stored)
        self.bits = BitMatrix(space.n)

    def _add_rows(self, rows: np.ndarray):
        m, k = rows.shape
        if m == 0 or k == 0:
            return
        if m < 8:
            for r in rows:
                self.bits.set_clique(r)
            return
        dense = self.bits.to_dense()
        for s in range(0, m, _CHUNK):
            r = rows[s:s + _CHUNK]
            dense[r[:, :, None], r[:, None, :]] = True
        self.bits = BitMatrix.from_dense(dense)

    def weight(self, i: int, j: int) -> int:
        return int(self.bits.get(i, j))

    def dense(self) -> np.ndarray:
        return self.bits.to_dense()

    def scores(self, state) -> np.ndarray:
        """``sum_j W_ij sigma_j`` for every neuron, self term included."""
        return self.bits.dot(self._state_idx(state))

    def score(self, state, i: int) -> int:
        idx = self._state_idx(state)
        return int(self.bits.rows([i])[0, idx].sum())

    def _pair_mask(self, idx: np.ndarray) -> np.ndarray:
        return ~np.eye(idx.size, dtype=bool)

    def recognize(self, pattern) -> bool:
        """True iff every pair of distinct active neurons is connected."""
        idx = self._state_idx(pattern)
        if idx.size < 2:
            return True
        sub = self.bits.rows(idx)[:, idx]
        return bool(sub[self._pair_mask(idx)].all())

    def __eq__(self, other) -> bool:
        return (
            type(other) is type(self)
            and self.space == other.space
            and self.m_stored == other.m_stored
            and self.bits == other.bits
        )


class WillshawNetwork(_BinaryNetwork):
    """Clipped (binary) weights with self-loops on every used neuron."""

    model_tag = WILLSHAW


class GBNetwork(_BinaryNetwork):
    """Clustered network: ``c`` clusters of ``l`` neurons, one active neuron per cluster.

    Held as the full ``n x n`` bit matrix; inter-cluster blocks are the clique edges and
    the diagonal is the self-activity map. Intra-cluster off-diagonal bits stay zero
    because no valid message activates two neurons of one cluster.
    """

    model_tag = GB

    def __init__(self, space: NeuronSpace, keep_stored: bool = True):
        if not space.has_layout:
            raise ValueError("GB network needs a neuron space with a cluster layout")
        super().__init__(space, keep_stored)

    def _validate(self, rows: list[np.ndarray]):
        c, l = self.space.c, self.space.l
        for r in rows:
            if r.shape[1] != c or not np.array_equal(np.sort(r, axis=1) // l, np.broadcast_to(np.arange(c), r.shape)):
                raise ValueError("GB network only stores messages with exactly one active neuron per cluster")

    def fields(self, state) -> np.ndarray:
        """``S_(a,k)``: number of active neurons connected to ``(a,k)``, self included."""
        return self.scores(state)

    def field(self, state, neuron) -> int:
        i = self.space.flat(*neuron) if isinstance(neuron, tuple) else int(neuron)
        return self.score(state, i)

    def som_scores(self, state, rows=None) -> np.ndarray:
        """SUM-OF-MAX score: number of clusters holding an active neuron connected to each neuron.

        ``rows`` restricts the evaluation to a subset of neurons.
        """
        idx = np.sort(self._state_idx(state))
        nrows = self.n if rows is None else len(rows)
        if idx.size == 0:
            return np.zeros(nrows, dtype=np.int64)
        l = self.space.l
        clusters = idx // l
        starts = np.flatnonzero(np.r_[True, clusters[1:] != clusters[:-1]])
        if idx.size <= GATHER_CUTOFF:
            block = self.bits.rows(idx)
            if rows is not None:
                block = block[:, rows]
            hit = np.logical_or.reduceat(block, starts, axis=0)
            return hit.sum(axis=0, dtype=np.int64)
        words = self.bits.words if rows is None else self.bits.words[rows]
        out = np.zeros(nrows, dtype=np.int64)
        for members in np.split(idx, starts[1:]):
            # pack one cluster at a time: words can straddle cluster borders
            b = members[0] // l
            w0 = (b * l) >> 6
            w1 = (((b + 1) * l - 1) >> 6) + 1
            state_words = self.bits.pack_vector(members)[w0:w1]
            out += (words[:, w0:w1] & state_words).any(axis=1)
        return out

    def som_score(self, state, neuron) -> int:
        i = self.space.flat(*neuron) if isinstance(neuron, tuple) else int(neuron)
        return int(self.som_scores(state, rows=[i])[0])

    def _pair_mask(self, idx: np.ndarray) -> np.ndarray:
        cl = idx // self.space.l
        return cl[:, None] != cl[None, :]


def network_class(model: str):
    try:
        return {"amari": AmariNetwork, "willshaw": WillshawNetwork, "gb": GBNetwork}[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}") from None


def store(network, pattern: Pattern):
    """Add one message to ``network`` in place and return it."""
    return network.store(pattern)


def amari_field(network: AmariNetwork, state: Pattern, i: int) -> int:
    return network.field(state, i)


def willshaw_score(network: WillshawNetwork, state: Pattern, i: int) -> int:
    return network.score(state, i)


def gb_field(network: GBNetwork, state: Pattern, neuron) -> int:
    return network.field(state, neuron)


def gb_som_score(network: GBNetwork, state: Pattern, neuron) -> int:
    return network.som_score(state, neuron)


def recognize(network, pattern: Pattern) -> bool:
    if isinstance(network, AmariNetwork):
        raise TypeError("recognition is defined for the binary (Willshaw, GB) networks")
    return network.recognize(pattern)
