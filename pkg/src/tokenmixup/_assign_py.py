"""Pure-Python assignment kernels; used when the compiled extension is unavailable."""
from __future__ import annotations

import numpy as np


def solve_min(cost):
    """Square min-cost assignment by shortest augmenting paths with dual potentials.

    Returns ``(col4row, u, v)`` with ``cost[i, j] - u[i] - v[j] >= 0`` everywhere and
    equality on the chosen edges.
    """
    a = np.asarray(cost, dtype=np.float64)
    n = a.shape[0]
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    rows = [[0.0] + row for row in a.tolist()]
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col4row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col4row[p[j] - 1] = j - 1
    return col4row, np.array(u[1:]), np.array(v[1:])


def lex_min_matching(tight, col4row, n_lex):
    """Lexicographically smallest perfect matching inside the ``tight`` edge set.

    ``col4row`` must already be a perfect matching using only tight edges; rows
    ``0..n_lex-1`` are minimised in order, the remaining rows just stay feasible.
    """
    allowed = np.asarray(tight, dtype=bool)
    n = allowed.shape[0]
    match = [int(c) for c in col4row]
    row4col = [0] * n
    for r, c in enumerate(match):
        row4col[c] = r
    adj = [np.flatnonzero(allowed[r]).tolist() for r in range(n)]
    fixed_col = [False] * n

    def augment(r, target, seen):
        # Re-seat row r on some column so that ``target`` ends up free for it.
        for c in adj[r]:
            if fixed_col[c] or seen[c]:
                continue
            seen[c] = True
            if c == target or augment(row4col[c], target, seen):
                match[r] = c
                row4col[c] = r
                return True
        return False

    for i in range(n_lex):
        for j in adj[i]:
            if fixed_col[j]:
                continue
            if j == match[i]:
                break
            old = match[i]
            r = row4col[j]
            seen = [False] * n
            seen[j] = True
            if augment(r, old, seen):
                match[i] = j
                row4col[j] = i
                break
        fixed_col[match[i]] = True
    return np.asarray(match, dtype=np.int64)
