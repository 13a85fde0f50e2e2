"""Naive dense implementations straight from the definitions, used as test oracles.

Everything here loops over messages and neurons explicitly and never touches the
packed representation, so agreement with :mod:`sparse_assoc.models` is a real check.
Only suitable for small ``n``.
"""

from __future__ import annotations

import itertools

import numpy as np


def amari_weights(n, messages):
    J = np.zeros((n, n), dtype=np.int64)
    for msg in messages:
        for i in msg:
            for j in msg:
                if i != j:
                    J[i, j] += 1
    return J


def clipped_weights(n, messages):
    W = np.zeros((n, n), dtype=bool)
    for msg in messages:
        for i in msg:
            for j in msg:
                W[i, j] = True
    return W


def amari_field(J, state, i):
    return sum(int(J[i, j]) for j in state if j != i)


def willshaw_score(W, state, i):
    return sum(int(W[i, j]) for j in state)


def gb_field(W, state, i):
    return sum(1 for j in state if W[i, j])


def gb_som_score(W, state, i, l):
    clusters = {j // l for j in state if W[i, j]}
    return len(clusters)


def threshold_step(score, n, state, h):
    return sorted(i for i in range(n) if score(state, i) >= h)


def recognized(W, pattern, l=None):
    for i, j in itertools.combinations(pattern, 2):
        if l is not None and i // l == j // l:
            continue
        if not W[i, j]:
            return False
    return True


def completions(W, n, partial, target, l=None):
    """Every completion of ``partial`` to ``target`` neurons whose pairs are all connected.

    With ``l`` given, completions take one neuron in each empty cluster.
    """
    partial = sorted(partial)
    out = []
    if l is None:
        rest = [i for i in range(n) if i not in partial]
        pools = itertools.combinations(rest, target - len(partial))
    else:
        occupied = {i // l for i in partial}
        empty = [a for a in range(n // l) if a not in occupied]
        pools = itertools.product(*[range(a * l, (a + 1) * l) for a in empty])
    for extra in pools:
        cand = sorted(partial + list(extra))
        if all(W[i, i] for i in extra) and all(W[i, j] for i, j in itertools.combinations(cand, 2)):
            out.append(tuple(cand))
    return out
