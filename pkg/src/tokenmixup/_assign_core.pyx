# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assignment kernels, same contract as ``_assign_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def solve_min(cost):
    cdef double[:, ::1] a = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    cdef double inf = float("inf")
    cdef double[::1] u = np.zeros(n + 1)
    cdef double[::1] v = np.zeros(n + 1)
    cdef double[::1] minv = np.empty(n + 1)
    cdef Py_ssize_t[::1] p = np.zeros(n + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] way = np.zeros(n + 1, dtype=np.intp)
    cdef unsigned char[::1] used = np.zeros(n + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, i0, j0, j1
    cdef double delta, cur, ui0
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = inf
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - ui0 - v[j]
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
    cdef long long[::1] out = col4row
    for j in range(1, n + 1):
        out[p[j] - 1] = j - 1
    return col4row, np.asarray(u[1:]).copy(), np.asarray(v[1:]).copy()


cdef bint _augment(Py_ssize_t r, Py_ssize_t target, unsigned char[:, ::1] allowed,
                   long long[::1] match, long long[::1] row4col,
                   unsigned char[::1] fixed_col, unsigned char[::1] seen):
    cdef Py_ssize_t n = allowed.shape[0]
    cdef Py_ssize_t c
    for c in range(n):
        if not allowed[r, c] or fixed_col[c] or seen[c]:
            continue
        seen[c] = 1
        if c == target or _augment(row4col[c], target, allowed, match, row4col, fixed_col, seen):
            match[r] = c
            row4col[c] = r
            return True
    return False


def lex_min_matching(tight, col4row, Py_ssize_t n_lex):
    cdef unsigned char[:, ::1] allowed = np.ascontiguousarray(tight, dtype=np.uint8)
    cdef Py_ssize_t n = allowed.shape[0]
    result = np.array(col4row, dtype=np.int64)
    cdef long long[::1] match = result
    cdef long long[::1] row4col = np.empty(n, dtype=np.int64)
    cdef unsigned char[::1] fixed_col = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] seen = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t i, j, k, old
    for i in range(n):
        row4col[match[i]] = i
    for i in range(n_lex):
        for j in range(n):
            if not allowed[i, j] or fixed_col[j]:
                continue
            if j == match[i]:
                break
            old = match[i]
            for k in range(n):
                seen[k] = 0
            seen[j] = 1
            if _augment(row4col[j], old, allowed, match, row4col, fixed_col, seen):
                match[i] = j
                row4col[j] = i
                break
        fixed_col[match[i]] = 1
    return result
