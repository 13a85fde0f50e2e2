"""Sparse 0/1 messages over a fixed neuron universe, their generators and erasure."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    Derivation goes through ``SeedSequence.spawn_key`` so a trial's stream depends
    only on its indices, never on scheduling or worker count.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class NeuronSpace:
    """N neurons, optionally grouped into ``c`` clusters of ``l`` neurons.

    Neuron ``(a, k)`` (cluster ``a``, position ``k``) has flat index ``a * l + k``.
    """

    n: int
    c: Optional[int] = None
    l: Optional[int] = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least 2 neurons, got n={self.n}")
        if (self.c is None) != (self.l is None):
            raise ValueError("cluster layout needs both c and l")
        if self.c is not None:
            if self.c < 2 or self.l < 2:
                raise ValueError(f"cluster layout needs c >= 2 and l >= 2, got c={self.c}, l={self.l}")
            if self.c * self.l != self.n:
                raise ValueError(f"n={self.n} does not equal c*l={self.c * self.l}")

    @classmethod
    def clustered(cls, c: int, l: int) -> "NeuronSpace":
        return cls(c * l, c, l)

    @property
    def has_layout(self) -> bool:
        return self.c is not None

    def flat(self, a: int, k: int) -> int:
        self._need_layout()
        if not (0 <= a < self.c and 0 <= k < self.l):
            raise IndexError(f"neuron ({a}, {k}) outside {self.c}x{self.l} layout")
        return a * self.l + k

    def unflat(self, i: int) -> tuple[int, int]:
        self._need_layout()
        return divmod(int(i), self.l)

    def cluster_of(self, idx):
        self._need_layout()
        return np.asarray(idx) // self.l

    def _need_layout(self):
        if self.c is None:
            raise ValueError("neuron space has no cluster layout")


class Pattern:
    """Immutable set of active neuron indices, kept sorted."""

    __slots__ = ("space", "active", "_hash")

    def __init__(self, space: NeuronSpace, active: Iterable[int] = ()):
        arr = np.asarray(list(active) if not isinstance(active, np.ndarray) else active, dtype=np.int64)
        arr = arr.ravel()
        if arr.size:
            arr = np.sort(arr)
            if arr[0] < 0 or arr[-1] >= space.n:
                raise ValueError(f"active index outside [0, {space.n})")
            if np.any(arr[1:] == arr[:-1]):
                raise ValueError("duplicate active index")
        arr.setflags(write=False)
        self.space = space
        self.active = arr
        self._hash = None

    @classmethod
    def _trusted(cls, space: NeuronSpace, sorted_unique: np.ndarray) -> "Pattern":
        # skips validation; callers guarantee sorted, unique, in-range int64
        p = cls.__new__(cls)
        arr = np.asarray(sorted_unique, dtype=np.int64)
        arr.setflags(write=False)
        p.space = space
        p.active = arr
        p._hash = None
        return p

    @classmethod
    def from_mask(cls, space: NeuronSpace, mask) -> "Pattern":
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (space.n,):
            raise ValueError(f"mask shape {mask.shape} does not match n={space.n}")
        return cls._trusted(space, np.flatnonzero(mask))

    @classmethod
    def from_pairs(cls, space: NeuronSpace, pairs: Iterable[tuple[int, int]]) -> "Pattern":
        return cls(space, [space.flat(a, k) for a, k in pairs])

    def mask(self) -> np.ndarray:
        m = np.zeros(self.space.n, dtype=bool)
        m[self.active] = True
        return m

    def __len__(self) -> int:
        return int(self.active.size)

    def __contains__(self, i) -> bool:
        j = np.searchsorted(self.active, i)
        return bool(j < self.active.size and self.active[j] == i)

    def __iter__(self):
        return iter(self.active.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pattern):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.active, other.active)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.space, self.active.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        return f"Pattern(n={self.space.n}, active={self.active.tolist()})"

    def issubset(self, other: "Pattern") -> bool:
        return bool(np.isin(self.active, other.active, assume_unique=True).all())

    def is_gb_valid(self) -> bool:
        """Exactly one active neuron in every cluster."""
        if not self.space.has_layout or len(self) != self.space.c:
            return False
        return bool(np.array_equal(self.space.cluster_of(self.active), np.arange(self.space.c)))

    def empty_clusters(self) -> np.ndarray:
        occupied = np.zeros(self.space.c, dtype=bool)
        occupied[self.space.cluster_of(self.active)] = True
        return np.flatnonzero(~occupied)


@dataclass(frozen=True)
class ErasureSpec:
    """How many active bits to delete: an absolute ``count`` or a ``fraction`` of them.

    ``mode="cluster"`` erases the single active neuron of distinct clusters (GB messages).
    """

    count: Optional[int] = None
    fraction: Optional[float] = None
    mode: str = "uniform"

    def __post_init__(self):
        if (self.count is None) == (self.fraction is None):
            raise ValueError("give exactly one of count or fraction")
        if self.count is not None and self.count < 0:
            raise ValueError(f"negative erasure count {self.count}")
        if self.fraction is not None and not (0.0 <= self.fraction < 1.0):
            raise ValueError(f"erasure fraction must lie in [0, 1), got {self.fraction}")
        if self.mode not in ("uniform", "cluster"):
            raise ValueError(f"unknown erasure mode {self.mode!r}")

    def resolve(self, k: int) -> int:
        """Number of bits to erase from a pattern with ``k`` active bits."""
        if self.count is not None:
            return self.count
        return int(np.floor(self.fraction * k + 0.5))


def _check_rng(rng):
    if not isinstance(rng, np.random.Generator):
        raise TypeError("rng must be a numpy Generator")


def gen_iid(space: NeuronSpace, p: float, rng: np.random.Generator) -> Pattern:
    if not (0.0 < p < 1.0):
        raise ValueError(f"activation probability must lie in (0, 1), got {p}")
    _check_rng(rng)
    return Pattern._trusted(space, np.flatnonzero(rng.random(space.n) < p))


def gen_exact_c(space: NeuronSpace, c: int, rng: np.random.Generator) -> Pattern:
    if not (1 <= c <= space.n):
        raise ValueError(f"need 1 <= c <= n, got c={c}, n={space.n}")
    _check_rng(rng)
    return Pattern._trusted(space, np.sort(rng.choice(space.n, size=c, replace=False)))


def gen_gb(space: NeuronSpace, rng: np.random.Generator) -> Pattern:
    if not space.has_layout:
        raise ValueError("GB messages need a cluster layout")
    _check_rng(rng)
    k = rng.integers(0, space.l, size=space.c)
    return Pattern._trusted(space, np.arange(space.c) * space.l + k)


def erase(pattern: Pattern, spec: ErasureSpec, rng: np.random.Generator) -> Pattern:
    k = len(pattern)
    f = spec.resolve(k)
    if f > k:
        raise ValueError(f"cannot erase {f} bits from a pattern with {k} active")
    if f == 0:
        return pattern
    if spec.mode == "cluster":
        space = pattern.space
        clusters = np.unique(space.cluster_of(pattern.active))
        if f > clusters.size:
            raise ValueError(f"cannot erase {f} clusters, only {clusters.size} are occupied")
        dropped = rng.choice(clusters, size=f, replace=False)
        keep = ~np.isin(space.cluster_of(pattern.active), dropped)
    else:
        keep = np.ones(k, dtype=bool)
        keep[rng.choice(k, size=f, replace=False)] = False
    return Pattern._trusted(pattern.space, pattern.active[keep])


# Batch generators: rows of flat indices, used when building networks from many messages.

def exact_c_batch(n: int, c: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``(m, c)`` array, each row a uniformly random sorted ``c``-subset of ``range(n)``."""
    if not (1 <= c <= n):
        raise ValueError(f"need 1 <= c <= n, got c={c}, n={n}")
    if m == 0:
        return np.empty((0, c), dtype=np.int64)
    if 4 * c * c > n:
        return np.array([np.sort(rng.choice(n, size=c, replace=False)) for _ in range(m)], dtype=np.int64).reshape(m, c)
    # rejection: ordered draws without repeats are uniform over subsets
    out = np.sort(rng.integers(0, n, size=(m, c)), axis=1)
    bad = np.flatnonzero((out[:, 1:] == out[:, :-1]).any(axis=1))
    while bad.size:
        redo = np.sort(rng.integers(0, n, size=(bad.size, c)), axis=1)
        out[bad] = redo
        bad = bad[(redo[:, 1:] == redo[:, :-1]).any(axis=1)]
    return out


def gb_batch(c: int, l: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``(m, c)`` array of GB messages as flat indices (one per cluster, ascending)."""
    return rng.integers(0, l, size=(m, c)) + np.arange(c) * l


def iid_batch(n: int, p: float, m: int, rng: np.random.Generator) -> list[np.ndarray]:
    if not (0.0 < p < 1.0):
        raise ValueError(f"activation probability must lie in (0, 1), got {p}")
    sizes = rng.binomial(n, p, size=m)
    # given its size, an iid pattern is a uniform subset of that size
    return [np.sort(rng.choice(n, size=s, replace=False)) for s in sizes]
