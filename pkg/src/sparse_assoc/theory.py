"""Capacity constants and the positive-association lower bounds for clique recognition.

Loads are dimensionless: ``M = alpha * (N / c)**2`` for the Amari and Willshaw
thresholds, ``M = alpha * l**2 / c**2`` for the GB winner-take-all bound and
``M = alpha * l**2 * ln(c)`` for recognition of random messages. Logarithms are natural.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Optional

import numpy as np

from .patterns import gb_batch, substream

CONSTANTS = ("amari-stability", "amari-erasure", "amari-upper", "willshaw-wta", "gb-wta", "wrong-message")
_NEEDS_RHO = {"amari-erasure", "willshaw-wta", "gb-wta"}

ENUMERATION_LIMIT = 2_000_000


def _check_rho(rho: float):
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"erasure rate must lie in [0, 1), got {rho}")


def amari_stability() -> float:
    """Stored messages stay fixed points below this load (Amari threshold dynamics)."""
    return math.exp(-2.0)


def amari_erasure(rho: float) -> float:
    _check_rho(rho)
    return (1.0 - rho) * math.exp(-(1.0 + 1.0 / (1.0 + rho)))


def amari_upper() -> float:
    """Above this load stored messages stop being fixed points."""
    return -math.log1p(-math.exp(-1.0))


def willshaw_wta(rho: float = 0.0) -> float:
    """Sharp one-step threshold for winner-take-all on a message with fraction ``rho`` erased."""
    _check_rho(rho)
    return -math.log1p(-math.exp(-1.0 / (1.0 - rho)))


def gb_wta(rho: float = 0.0) -> float:
    return willshaw_wta(rho)


def wrong_message_alpha() -> float:
    return 2.0


def eval_constant(name: str, rho: Optional[float] = None) -> float:
    name = name.replace("_", "-")
    if name not in CONSTANTS:
        raise ValueError(f"unknown constant {name!r}; choose from {', '.join(CONSTANTS)}")
    if name in _NEEDS_RHO:
        rho = 0.0 if rho is None else rho
        return {"amari-erasure": amari_erasure, "willshaw-wta": willshaw_wta, "gb-wta": gb_wta}[name](rho)
    if rho is not None:
        _check_rho(rho)
    return {"amari-stability": amari_stability, "amari-upper": amari_upper,
            "wrong-message": wrong_message_alpha}[name]()


def edge_probability(l: int, m: int) -> float:
    """``d = 1 - (1 - 1/l^2)^M``: chance a given inter-cluster edge is used by some message."""
    return -math.expm1(m * math.log1p(-1.0 / (l * l)))


def recognition_lower_bound(l: int, c: int, m: int) -> float:
    """``d^(c(c-1)/2)``, a lower bound on the chance a random GB message is recognized."""
    if l < 2 or c < 2 or m < 0:
        raise ValueError("need l >= 2, c >= 2, M >= 0")
    return edge_probability(l, m) ** (c * (c - 1) // 2)


def subclique_exponent(c: int, rho: float) -> float:
    """Edges still to be found when a fraction ``rho`` of the ``c`` clusters is kept."""
    return rho * (1.0 - rho) * c * c + (1.0 - rho) * c * ((1.0 - rho) * c - 1.0) / 2.0


def subclique_lower_bound(l: int, c: int, m: int, rho: float) -> float:
    if l < 2 or c < 2 or m < 0:
        raise ValueError("need l >= 2, c >= 2, M >= 0")
    if not (0.0 <= rho <= 1.0):
        raise ValueError(f"kept fraction must lie in [0, 1], got {rho}")
    r = subclique_exponent(c, rho)
    if r <= 0:
        return 1.0
    return edge_probability(l, m) ** r


def load_for_bound(l: int, c: int, target: float) -> int:
    """Smallest ``M`` with ``recognition_lower_bound(l, c, M) >= target``."""
    if not (0.0 < target < 1.0):
        raise ValueError("target must lie in (0, 1)")
    L = c * (c - 1) // 2
    d = target ** (1.0 / L)
    return max(0, math.ceil(math.log1p(-d) / math.log1p(-1.0 / (l * l))))


def recognition_alpha(l: int, c: int, m: int) -> float:
    return m / (l * l * math.log(c))


def _recognized(stored: np.ndarray, query: np.ndarray) -> bool:
    c = query.size
    for a in range(c):
        for b in range(a + 1, c):
            if not np.any((stored[:, a] == query[a]) & (stored[:, b] == query[b])):
                return False
    return True


def exact_recognition_probability(
    l: int, c: int, m: int, mode: str = "enumerate", trials: int = 10_000, seed: int = 0,
    batch_size: int = 1,
):
    """Probability a uniformly random GB message is recognized after storing ``m`` random ones.

    ``mode="enumerate"`` walks every stored set and query and returns an exact ``Fraction``
    with zero standard error. ``mode="mc"`` returns a float estimate and its standard error.
    """
    if l < 2 or c < 2 or m < 0:
        raise ValueError("need l >= 2, c >= 2, M >= 0")
    if m == 0:
        return (Fraction(0) if mode == "enumerate" else 0.0), 0.0
    if mode == "enumerate":
        messages = list(itertools.product(range(l), repeat=c))
        total = len(messages) ** (m + 1)
        if total > ENUMERATION_LIMIT:
            raise ValueError(f"enumeration over {total} configurations exceeds the limit {ENUMERATION_LIMIT}")
        hits = 0
        for stored in itertools.product(messages, repeat=m):
            arr = np.array(stored)
            for q in messages:
                hits += _recognized(arr, np.array(q))
        return Fraction(hits, total), 0.0
    if mode == "mc":
        hits = 0
        for b in range(0, trials, batch_size):
            rng = substream(seed, b // batch_size)
            stored = gb_batch(c, l, m, rng) - np.arange(c) * l
            for _ in range(min(batch_size, trials - b)):
                hits += _recognized(stored, rng.integers(0, l, size=c))
        p = hits / trials
        return p, math.sqrt(p * (1.0 - p) / trials)
    raise ValueError(f"unknown mode {mode!r}")
