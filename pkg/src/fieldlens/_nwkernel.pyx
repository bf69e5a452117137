# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled global alignment scoring kernel."""

from libc.stdlib cimport free, malloc


def align_score(a, b, int gap, int match, int mismatch):
    """Best global-alignment score between two int sequences (see _nwpure)."""
    cdef Py_ssize_t m = len(a)
    cdef Py_ssize_t n = len(b)
    cdef int *av = <int *> malloc(m * sizeof(int) if m else sizeof(int))
    cdef int *bv = <int *> malloc(n * sizeof(int) if n else sizeof(int))
    cdef int *prev = <int *> malloc((n + 1) * sizeof(int))
    cdef int *cur = <int *> malloc((n + 1) * sizeof(int))
    if av == NULL or bv == NULL or prev == NULL or cur == NULL:
        free(av); free(bv); free(prev); free(cur)
        raise MemoryError()
    cdef Py_ssize_t i, j
    cdef int ai, diag, up, left, best
    cdef int *tmp
    try:
        for i in range(m):
            av[i] = a[i]
        for j in range(n):
            bv[j] = b[j]
        for j in range(n + 1):
            prev[j] = <int> (j * gap)
        for i in range(1, m + 1):
            cur[0] = <int> (i * gap)
            ai = av[i - 1]
            for j in range(1, n + 1):
                diag = prev[j - 1] + (match if ai == bv[j - 1] else mismatch)
                up = prev[j] + gap
                left = cur[j - 1] + gap
                best = diag if diag >= up else up
                if left > best:
                    best = left
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
        return prev[n]
    finally:
        free(av)
        free(bv)
        free(prev)
        free(cur)
