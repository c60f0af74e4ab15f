"""Pure numpy implementations of the compiled kernels.

Used when the extension module is not built, or when ``RCC_PURE_PYTHON=1``.
Semantics match ``_kernels_c`` exactly; only speed differs.
"""

import math

import numpy as np

AGG_SUM, AGG_PROPORTION, AGG_MODE = 0, 1, 2
CLF_SIGMOID, CLF_SOFTMAX = 0, 1


def neighbor_sum(indptr, indices, values):
    """out[i] = sum of values[j] over the neighbors j of i."""
    n = indptr.shape[0] - 1
    out = np.zeros((n, values.shape[1]), dtype=np.float64)
    starts = indptr[:-1]
    nonempty = indptr[1:] > starts
    if indices.shape[0] == 0:
        return out
    # consecutive nonempty starts bound each segment, so reduceat sums in order
    out[nonempty] = np.add.reduceat(values[indices], starts[nonempty], axis=0)
    return out


def _aggregate_row(counts, k, agg, tau_g, deg):
    if deg == 0:
        return [0.0] * k
    if agg == AGG_SUM:
        return list(counts)
    if agg == AGG_PROPORTION:
        return [c / deg for c in counts]
    m = max(counts)
    r = [math.exp((c - m) / tau_g) for c in counts]
    z = sum(r)
    return [v / z for v in r]


def gibbs_chain(indptr, indices, base, theta_r, labels, uniforms,
                clf, tau_f, agg, tau_g, burn_in):
    """Run sequential Gibbs sweeps; return per-node label counts after burn-in.

    ``labels`` is updated in place. ``uniforms`` has one row per sweep.
    """
    n, k = base.shape
    nbrs = [indices[indptr[i]:indptr[i + 1]].tolist() for i in range(n)]
    base_l = base.tolist()
    th = theta_r.tolist()
    lab = labels.tolist()
    counts = [[0.0] * k for _ in range(n)]
    for i in range(n):
        for j in nbrs[i]:
            counts[i][lab[j]] += 1.0
    tally = np.zeros((n, k), dtype=np.float64)

    for s in range(uniforms.shape[0]):
        us = uniforms[s].tolist()
        for i in range(n):
            r = _aggregate_row(counts[i], k, agg, tau_g, len(nbrs[i]))
            p = []
            for c in range(k):
                score = base_l[i][c]
                for c2 in range(k):
                    score += r[c2] * th[c2][c]
                p.append(score)
            if clf == CLF_SIGMOID:
                p = [1.0 / (1.0 + math.exp(-v)) for v in p]
            else:
                m = max(p)
                p = [math.exp((v - m) / tau_f) for v in p]
            u = us[i] * sum(p)
            acc = 0.0
            new = k - 1
            for c in range(k):
                acc += p[c]
                if u < acc:
                    new = c
                    break
            old = lab[i]
            if new != old:
                lab[i] = new
                for j in nbrs[i]:
                    counts[j][old] -= 1.0
                    counts[j][new] += 1.0
        if s >= burn_in:
            tally[np.arange(n), lab] += 1.0
    labels[:] = lab
    return tally
