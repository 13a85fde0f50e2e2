"""Square boolean matrix packed into uint64 words, one row per neuron.

Bit ``j`` of row ``i`` lives in word ``j >> 6`` at position ``j & 63``. The matrices
stored here are symmetric, so column ``j`` equals row ``j`` and column gathers are
row reads.
"""

from __future__ import annotations

import numpy as np

try:
    _popcount = np.bitwise_count
except AttributeError:  # numpy < 2.0
    _M1 = np.uint64(0x5555555555555555)
    _M2 = np.uint64(0x3333333333333333)
    _M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
    _H01 = np.uint64(0x0101010101010101)

    def _popcount(x):
        x = x - ((x >> np.uint64(1)) & _M1)
        x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
        x = (x + (x >> np.uint64(4))) & _M4
        return (x * _H01) >> np.uint64(56)

# below this many active inputs, unpacking their rows beats a full popcount sweep
GATHER_CUTOFF = 48


def pack_rows(dense: np.ndarray) -> np.ndarray:
    """Pack a boolean ``(r, n)`` array into ``(r, ceil(n/64))`` uint64 words."""
    dense = np.asarray(dense, dtype=bool)
    r, n = dense.shape
    nw = (n + 63) // 64
    padded = np.zeros((r, nw * 64), dtype=bool)
    padded[:, :n] = dense
    return np.packbits(padded, axis=1, bitorder="little").view("<u8").astype(np.uint64, copy=False)


def unpack_rows(words: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pack_rows`, as a boolean ``(r, n)`` array."""
    words = np.ascontiguousarray(words, dtype="<u8")
    bytes_ = words.view(np.uint8).reshape(words.shape[0], -1)
    return np.unpackbits(bytes_, axis=1, count=n, bitorder="little").view(bool)


class BitMatrix:
    def __init__(self, n: int, words: np.ndarray | None = None):
        self.n = n
        self.nwords = (n + 63) // 64
        if words is None:
            words = np.zeros((n, self.nwords), dtype=np.uint64)
        elif words.shape != (n, self.nwords):
            raise ValueError(f"word array shape {words.shape} != {(n, self.nwords)}")
        self.words = words

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "BitMatrix":
        dense = np.asarray(dense, dtype=bool)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise ValueError("dense matrix must be square")
        return cls(dense.shape[0], pack_rows(dense))

    def copy(self) -> "BitMatrix":
        return BitMatrix(self.n, self.words.copy())

    def to_dense(self) -> np.ndarray:
        return unpack_rows(self.words, self.n)

    def get(self, i: int, j: int) -> bool:
        return bool((int(self.words[i, j >> 6]) >> (j & 63)) & 1)

    def set_clique(self, idx: np.ndarray):
        """Set every entry ``(i, j)`` with ``i, j`` in ``idx`` (diagonal included)."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return
        row_mask = np.zeros(self.nwords, dtype=np.uint64)
        np.bitwise_or.at(row_mask, idx >> 6, np.left_shift(np.uint64(1), (idx & 63).astype(np.uint64)))
        self.words[idx] |= row_mask

    def rows(self, idx) -> np.ndarray:
        """Boolean ``(len(idx), n)`` block of the given rows."""
        return unpack_rows(self.words[np.asarray(idx, dtype=np.int64)], self.n)

    def pack_vector(self, idx) -> np.ndarray:
        v = np.zeros(self.nwords, dtype=np.uint64)
        idx = np.asarray(idx, dtype=np.int64)
        np.bitwise_or.at(v, idx >> 6, np.left_shift(np.uint64(1), (idx & 63).astype(np.uint64)))
        return v

    def dot(self, idx, rows=None) -> np.ndarray:
        """Row-by-state counts ``sum_j M[i, j] * state[j]`` for a state given by active ``idx``.

        Only valid for symmetric matrices when ``idx`` is small (gather path reads rows of
        ``idx`` as columns).
        """
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return np.zeros(self.n if rows is None else len(rows), dtype=np.int64)
        if idx.size <= GATHER_CUTOFF:
            block = self.rows(idx)
            if rows is not None:
                block = block[:, rows]
            return block.sum(axis=0, dtype=np.int64)
        w = self.words if rows is None else self.words[rows]
        return _popcount(w & self.pack_vector(idx)).sum(axis=1, dtype=np.int64)

    def popcount_rows(self) -> np.ndarray:
        return _popcount(self.words).sum(axis=1, dtype=np.int64)

    def __eq__(self, other) -> bool:
        return isinstance(other, BitMatrix) and self.n == other.n and np.array_equal(self.words, other.words)
