"""Hot numeric kernels.

Every kernel has a numba implementation and a pure-numpy implementation with the same
signature; ``ZICS_BACKEND`` (read once at import, see :mod:`zics._backend`) picks one.
Reductions over the lattice are split into a fixed number of contiguous partitions,
each summed with compensation, and the partials are merged with :func:`math.fsum`.
The result depends on the partition count but not on thread scheduling.
"""
import math

import numpy as np

from ._backend import USE_NUMBA, njit, prange

#: Default number of lattice partitions for compensated reductions.
PARTITIONS = 8

SSA_DONE = 0
SSA_NEED_RANDOM = 1
SSA_FROZEN = 2
SSA_NEGATIVE = 3


def _bounds(n, partitions):
    p = max(1, min(int(partitions), n))
    edges = np.linspace(0, n, p + 1).round().astype(np.int64)
    return edges


def _merge(sums, comps):
    """Merge per-partition (sum, compensation) pairs along axis 0 with exact rounding."""
    out_shape = sums.shape[1:]
    flat_s = sums.reshape(sums.shape[0], -1)
    flat_c = comps.reshape(comps.shape[0], -1)
    out = np.empty(flat_s.shape[1])
    for k in range(flat_s.shape[1]):
        out[k] = math.fsum(np.concatenate((flat_s[:, k], flat_c[:, k])))
    return out.reshape(out_shape)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(parallel=True)
def _colsum_numba(w, F, edges):
    P = edges.shape[0] - 1
    K = F.shape[1]
    s = np.zeros((P, K))
    c = np.zeros((P, K))
    for p in prange(P):
        for x in range(edges[p], edges[p + 1]):
            wx = w[x]
            for k in range(K):
                v = wx * F[x, k]
                acc = s[p, k]
                t = acc + v
                if abs(acc) >= abs(v):
                    c[p, k] += (acc - t) + v
                else:
                    c[p, k] += (v - t) + acc
                s[p, k] = t
    return s, c


@njit(parallel=True)
def _gram_numba(w, A, B, edges):
    P = edges.shape[0] - 1
    KA = A.shape[1]
    KB = B.shape[1]
    s = np.zeros((P, KA, KB))
    c = np.zeros((P, KA, KB))
    for p in prange(P):
        for x in range(edges[p], edges[p + 1]):
            wx = w[x]
            for i in range(KA):
                a = wx * A[x, i]
                for j in range(KB):
                    v = a * B[x, j]
                    acc = s[p, i, j]
                    t = acc + v
                    if abs(acc) >= abs(v):
                        c[p, i, j] += (acc - t) + v
                    else:
                        c[p, i, j] += (v - t) + acc
                    s[p, i, j] = t
    return s, c


@njit
def _features_numba(offsets, tables, indices):
    n = offsets.shape[0]
    N = offsets.shape[1]
    K = indices.shape[0]
    F = np.empty((n, K))
    for x in range(n):
        for k in range(K):
            v = 1.0
            for j in range(N):
                v *= tables[j, offsets[x, j], indices[k, j]]
            F[x, k] = v
    return F


# ---------------------------------------------------------------------------
# numpy kernels
# ---------------------------------------------------------------------------


def _pairwise_twosum(x):
    """Cascaded pairwise summation along axis 0 with error-free transforms."""
    s = np.array(x, dtype=float, copy=True)
    e = np.zeros_like(s)
    while s.shape[0] > 1:
        if s.shape[0] % 2:
            pad = np.zeros((1,) + s.shape[1:])
            s = np.concatenate((s, pad))
            e = np.concatenate((e, pad))
        a = s[0::2]
        b = s[1::2]
        t = a + b
        bp = t - a
        err = (a - (t - bp)) + (b - bp)
        e = e[0::2] + e[1::2] + err
        s = t
    if s.shape[0] == 0:
        return np.zeros(x.shape[1:]), np.zeros(x.shape[1:])
    return s[0], e[0]


def _colsum_numpy(w, F, edges):
    P = edges.shape[0] - 1
    s = np.zeros((P, F.shape[1]))
    c = np.zeros_like(s)
    for p in range(P):
        lo, hi = edges[p], edges[p + 1]
        s[p], c[p] = _pairwise_twosum(w[lo:hi, None] * F[lo:hi])
    return s, c


def _gram_numpy(w, A, B, edges):
    P = edges.shape[0] - 1
    s = np.zeros((P, A.shape[1], B.shape[1]))
    c = np.zeros_like(s)
    for p in range(P):
        lo, hi = edges[p], edges[p + 1]
        wa = w[lo:hi, None] * A[lo:hi]
        Bp = B[lo:hi]
        for i in range(A.shape[1]):
            s[p, i], c[p, i] = _pairwise_twosum(wa[:, i : i + 1] * Bp)
    return s, c


def _features_numpy(offsets, tables, indices):
    F = np.ones((offsets.shape[0], indices.shape[0]))
    for j in range(offsets.shape[1]):
        F *= tables[j][offsets[:, j][:, None], indices[None, :, j]]
    return F


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    _colsum_impl = _colsum_numba
    _gram_impl = _gram_numba
    _features_impl = _features_numba
else:
    _colsum_impl = _colsum_numpy
    _gram_impl = _gram_numpy
    _features_impl = _features_numpy


def weighted_sum(w, partitions=PARTITIONS):
    """Compensated sum of a 1-d array."""
    w = np.ascontiguousarray(w, dtype=float)
    return float(weighted_column_sums(w, np.ones((w.shape[0], 1)), partitions)[0])


def weighted_column_sums(w, F, partitions=PARTITIONS):
    """Return ``sum_x w[x] * F[x, k]`` for every column ``k``."""
    w = np.ascontiguousarray(w, dtype=float)
    F = np.ascontiguousarray(F, dtype=float)
    if F.shape[1] == 0:
        return np.zeros(0)
    s, c = _colsum_impl(w, F, _bounds(w.shape[0], partitions))
    return _merge(s, c)


def weighted_gram(w, A, B, partitions=PARTITIONS):
    """Return ``sum_x w[x] * A[x, i] * B[x, j]`` as an ``(A.shape[1], B.shape[1])`` matrix."""
    w = np.ascontiguousarray(w, dtype=float)
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    if A.shape[1] == 0 or B.shape[1] == 0:
        return np.zeros((A.shape[1], B.shape[1]))
    s, c = _gram_impl(w, A, B, _bounds(w.shape[0], partitions))
    return _merge(s, c)


def product_features(offsets, tables, indices):
    """Tensor-product features ``F[x, k] = prod_j tables[j, offsets[x, j], indices[k, j]]``.

    ``tables`` holds one 1-d basis table per species (rows: lattice position, columns:
    degree), so each feature costs O(N) per state.
    """
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    tables = np.ascontiguousarray(tables, dtype=float)
    indices = np.ascontiguousarray(indices, dtype=np.int64).reshape(-1, offsets.shape[1])
    return _features_impl(offsets, tables, indices)


@njit
def ssa_advance(state, t, t_end, reactants, rates, groups, changes, lo, hi, strides,
                uniforms, upos, hist, sums):
    """Gillespie direct method from ``t`` up to ``t_end``.

    Dwell times are accumulated into ``hist`` (last slot: outside the lattice) and into
    ``sums[j] = (int x_j dt, int x_j (x_j - 1) dt)``. Each event consumes two entries of
    ``uniforms`` starting at ``upos``. Returns ``(t, upos, status)``.
    """
    R = reactants.shape[0]
    N = state.shape[0]
    G = changes.shape[0]
    gprop = np.zeros(G)
    gabs = np.zeros(G)
    outside = hist.shape[0] - 1
    while t < t_end:
        if upos + 2 > uniforms.shape[0]:
            return t, upos, SSA_NEED_RANDOM
        for g in range(G):
            gprop[g] = 0.0
            gabs[g] = 0.0
        for r in range(R):
            a = rates[r]
            for j in range(N):
                x = state[j]
                for q in range(reactants[r, j]):
                    a *= x - q
            gprop[groups[r]] += a
            gabs[groups[r]] += abs(a)
        a0 = 0.0
        for g in range(G):
            if gprop[g] < 0.0:
                if gprop[g] < -1e-9 * gabs[g]:
                    return t, upos, SSA_NEGATIVE
                gprop[g] = 0.0
            a0 += gprop[g]
        if a0 > 0.0:
            tau = -math.log(1.0 - uniforms[upos]) / a0
        else:
            tau = math.inf
        dwell = min(tau, t_end - t)
        idx = 0
        inside = True
        for j in range(N):
            x = state[j]
            if x < lo[j] or x > hi[j]:
                inside = False
            idx += (x - lo[j]) * strides[j]
            sums[j, 0] += dwell * x
            sums[j, 1] += dwell * x * (x - 1)
        if inside:
            hist[idx] += dwell
        else:
            hist[outside] += dwell
        if a0 <= 0.0:
            return t_end, upos, SSA_FROZEN
        if t + tau >= t_end:
            # memoryless: the pending event is redrawn after t_end
            upos += 2
            return t_end, upos, SSA_DONE
        t += tau
        target = uniforms[upos + 1] * a0
        upos += 2
        chosen = -1
        acc = 0.0
        for g in range(G):
            if gprop[g] > 0.0:
                chosen = g
                acc += gprop[g]
                if acc > target:
                    break
        for j in range(N):
            state[j] += changes[chosen, j]
    return t, upos, SSA_DONE
