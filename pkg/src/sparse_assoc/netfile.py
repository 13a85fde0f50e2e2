"""Binary network files.

Layout (all integers little-endian)::

    "SAMN"  version:u8  model:u8  flags:u8  n:u64  c:u64  l:u64  M:u64
    payload
    [stored set]

``model`` is 0 (Amari), 1 (Willshaw) or 2 (GB); ``c = l = 0`` when the space has no
cluster layout. Bit flag 1 marks a trailing stored-set section.

Payloads:

* Amari: upper triangle ``i < j``, row-major, u32 counts.
* Willshaw: triangle with diagonal ``j >= i``, row-major, one bit per entry.
* GB: for each cluster pair ``a < a'`` the ``l x l`` block row-major, one bit per
  entry; then, starting on a fresh byte, the ``n``-bit self-activity map.

Bit streams are packed least-significant bit first and zero padded to a whole byte.
The stored set is ``M`` records of ``u32 length`` followed by that many sorted u32
indices.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from .bits import BitMatrix
from .models import AMARI, GB, WILLSHAW, AmariNetwork, GBNetwork, WillshawNetwork
from .patterns import NeuronSpace

MAGIC = b"SAMN"
VERSION = 1
FLAG_STORED = 1
HEADER = struct.Struct("<4sBBBQQQQ")


class NetworkFormatError(ValueError):
    pass


class MagicMismatchError(NetworkFormatError):
    pass


class VersionMismatchError(NetworkFormatError):
    pass


class TruncatedFileError(NetworkFormatError):
    pass


class DimensionMismatchError(NetworkFormatError):
    pass


def _bits(flat: np.ndarray) -> bytes:
    return np.packbits(np.asarray(flat, dtype=bool), bitorder="little").tobytes()


def _unbits(buf: bytes, count: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(buf, dtype=np.uint8), count=count, bitorder="little").view(bool)


def _nbytes(nbits: int) -> int:
    return (nbits + 7) // 8


def payload_size(model: int, n: int, c: int, l: int) -> int:
    if model == AMARI:
        return 4 * (n * (n - 1) // 2)
    if model == WILLSHAW:
        return _nbytes(n * (n + 1) // 2)
    if model == GB:
        return _nbytes(c * (c - 1) // 2 * l * l) + _nbytes(n)
    raise NetworkFormatError(f"unknown model tag {model}")


def _payload(net) -> bytes:
    n = net.n
    if isinstance(net, AmariNetwork):
        iu = np.triu_indices(n, 1)
        return net.weights[iu].astype("<u4").tobytes()
    dense = net.dense()
    if isinstance(net, GBNetwork):
        c, l = net.space.c, net.space.l
        blocks = [
            dense[a * l:(a + 1) * l, b * l:(b + 1) * l].ravel()
            for a in range(c) for b in range(a + 1, c)
        ]
        return _bits(np.concatenate(blocks)) + _bits(np.diagonal(dense))
    return _bits(dense[np.triu_indices(n)])


def save(network, sink=None, include_stored: bool = True) -> bytes:
    """Serialize ``network``; also write to ``sink`` (path or binary file) when given."""
    include_stored = include_stored and network.stored is not None
    space = network.space
    head = HEADER.pack(
        MAGIC, VERSION, network.model_tag, FLAG_STORED if include_stored else 0,
        space.n, space.c or 0, space.l or 0, network.m_stored,
    )
    parts = [head, _payload(network)]
    if include_stored:
        for mu in range(len(network.stored)):
            idx = network.stored.indices(mu)
            parts.append(struct.pack("<I", idx.size))
            parts.append(np.asarray(idx, dtype="<u4").tobytes())
    data = b"".join(parts)
    if sink is not None:
        if isinstance(sink, (str, os.PathLike)):
            with open(sink, "wb") as fh:
                fh.write(data)
        else:
            sink.write(data)
    return data


def _read_source(source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    return source.read()


def load(source):
    """Inverse of :func:`save`. ``source`` is bytes, a path or a binary file."""
    data = _read_source(source)
    if len(data) < 4 or data[:4] != MAGIC:
        raise MagicMismatchError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < HEADER.size:
        raise TruncatedFileError(f"header needs {HEADER.size} bytes, file has {len(data)}")
    _, version, model, flags, n, c, l, m = HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatchError(f"file version {version}, reader supports {VERSION}")
    if model not in (AMARI, WILLSHAW, GB):
        raise NetworkFormatError(f"unknown model tag {model}")
    if (c == 0) != (l == 0) or (c and c * l != n) or (model == GB and c == 0):
        raise DimensionMismatchError(f"inconsistent dimensions n={n}, c={c}, l={l} for model {model}")
    try:
        space = NeuronSpace(n, c or None, l or None)
    except ValueError as exc:
        raise DimensionMismatchError(str(exc)) from None

    pos = HEADER.size
    size = payload_size(model, n, c, l)
    if len(data) < pos + size:
        raise TruncatedFileError(f"payload needs {size} bytes, only {len(data) - pos} present")
    body = data[pos:pos + size]
    pos += size
    keep = bool(flags & FLAG_STORED)

    if model == AMARI:
        net = AmariNetwork(space, keep_stored=keep)
        w = np.zeros((n, n), dtype=np.int32)
        iu = np.triu_indices(n, 1)
        vals = np.frombuffer(body, dtype="<u4")
        if vals.size and vals.max() > np.iinfo(np.int32).max:
            raise DimensionMismatchError("count exceeds int32 range")
        w[iu] = vals
        w.T[iu] = vals
        net.weights = w
    elif model == WILLSHAW:
        net = WillshawNetwork(space, keep_stored=keep)
        dense = np.zeros((n, n), dtype=bool)
        iu = np.triu_indices(n)
        dense[iu] = _unbits(body, iu[0].size)
        dense.T[iu] = dense[iu]
        net.bits = BitMatrix.from_dense(dense)
    else:
        net = GBNetwork(space, keep_stored=keep)
        nblk = _nbytes(c * (c - 1) // 2 * l * l)
        blocks = _unbits(body[:nblk], c * (c - 1) // 2 * l * l).reshape(-1, l, l)
        dense = np.zeros((n, n), dtype=bool)
        q = 0
        for a in range(c):
            for b in range(a + 1, c):
                dense[a * l:(a + 1) * l, b * l:(b + 1) * l] = blocks[q]
                dense[b * l:(b + 1) * l, a * l:(a + 1) * l] = blocks[q].T
                q += 1
        dense[np.diag_indices(n)] = _unbits(body[nblk:], n)
        net.bits = BitMatrix.from_dense(dense)
    net.m_stored = m

    if keep:
        buf = io.BytesIO(data[pos:])
        for _ in range(m):
            raw = buf.read(4)
            if len(raw) < 4:
                raise TruncatedFileError("stored set ends early")
            (k,) = struct.unpack("<I", raw)
            raw = buf.read(4 * k)
            if len(raw) < 4 * k:
                raise TruncatedFileError("stored set ends early")
            idx = np.frombuffer(raw, dtype="<u4").astype(np.int64)
            if idx.size and (idx.max() >= n or np.any(np.diff(idx) <= 0)):
                raise DimensionMismatchError("stored message indices not sorted within [0, n)")
            net.stored._append_one(idx)
        pos += buf.tell()
    if pos != len(data):
        raise DimensionMismatchError(f"{len(data) - pos} trailing bytes after declared content")
    return net
