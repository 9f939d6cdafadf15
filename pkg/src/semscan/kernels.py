"""Hot sampling kernels, compiled with numba when available.

Both the collapsed Gibbs sweep and the fixed-topic fold-in are written as
plain Python loops over flat arrays.  The module exposes each kernel twice:
``*_py`` (interpreted, numpy scalars only) and ``*_jit`` (numba ``@njit``
when numba is importable).  The active pair is chosen once at import time;
setting the environment variable ``SEMSCAN_NO_NUMBA=1`` forces the
interpreted path.  Both paths consume pre-drawn uniforms and perform the
same arithmetic in the same order, so their outputs are bit-identical.
"""

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "gibbs_sweep_kernel",
    "fold_in_kernel",
    "gibbs_sweep_py",
    "fold_in_py",
    "gibbs_sweep_jit",
    "fold_in_jit",
]


def _numba_requested() -> bool:
    flag = os.environ.get("SEMSCAN_NO_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


def _load_njit():
    try:
        from numba import njit
    except ImportError:
        return None
    return njit


def _gibbs_sweep(
    tokens,
    doc_ptr,
    z,
    doc_ids,
    n_ik,
    n_kw,
    n_k,
    base_n_kw,
    base_n_k,
    alpha,
    beta,
    beta_sum,
    lo,
    hi,
    uniforms,
):
    # One sweep over the listed documents: remove the current assignment,
    # sample a topic in [lo, hi) from the collapsed conditional, reinsert.
    # base_n_kw / base_n_k are frozen additive counts that the sweep never
    # writes.  Consumes one uniform per visited token; returns the count.
    n_alloc = hi - lo
    cum = np.empty(n_alloc, dtype=np.float64)
    used = 0
    for di in range(doc_ids.shape[0]):
        d = doc_ids[di]
        for pos in range(doc_ptr[d], doc_ptr[d + 1]):
            w = tokens[pos]
            old = z[pos]
            n_ik[d, old] -= 1
            n_kw[old, w] -= 1
            n_k[old] -= 1

            total = 0.0
            for j in range(n_alloc):
                k = lo + j
                weight = (
                    (n_ik[d, k] + alpha[k])
                    * (n_kw[k, w] + base_n_kw[k, w] + beta[k])
                    / (n_k[k] + base_n_k[k] + beta_sum[k])
                )
                total += weight
                cum[j] = total

            r = uniforms[used] * total
            used += 1
            j = 0
            while j < n_alloc - 1 and cum[j] <= r:
                j += 1
            new = lo + j

            z[pos] = new
            n_ik[d, new] += 1
            n_kw[new, w] += 1
            n_k[new] += 1
    return used


def _gibbs_sweep_numpy(
    tokens,
    doc_ptr,
    z,
    doc_ids,
    n_ik,
    n_kw,
    n_k,
    base_n_kw,
    base_n_k,
    alpha,
    beta,
    beta_sum,
    lo,
    hi,
    uniforms,
):
    # Interpreted twin of _gibbs_sweep with the per-topic loop vectorised.
    # np.cumsum accumulates sequentially, so sampled topics match the jit
    # kernel bit for bit.
    alpha_s = alpha[lo:hi]
    beta_s = beta[lo:hi]
    beta_sum_s = beta_sum[lo:hi]
    used = 0
    for d in doc_ids:
        for pos in range(doc_ptr[d], doc_ptr[d + 1]):
            w = tokens[pos]
            old = z[pos]
            n_ik[d, old] -= 1
            n_kw[old, w] -= 1
            n_k[old] -= 1

            weights = (
                (n_ik[d, lo:hi] + alpha_s)
                * (n_kw[lo:hi, w] + base_n_kw[lo:hi, w] + beta_s)
                / (n_k[lo:hi] + base_n_k[lo:hi] + beta_sum_s)
            )
            cum = np.cumsum(weights)
            r = uniforms[used] * cum[-1]
            used += 1
            j = int(np.searchsorted(cum, r, side="right"))
            if j >= cum.shape[0]:
                j = cum.shape[0] - 1
            new = lo + j

            z[pos] = new
            n_ik[d, new] += 1
            n_kw[new, w] += 1
            n_k[new] += 1
    return used


def _fold_in(tokens, doc_ptr, doc_ids, phi, alpha, lo, hi, sweeps, uniforms, counts_out):
    # Per-document Gibbs with topic rows held fixed.  The first pass seeds
    # assignments sequentially from the incremental conditional, then
    # `sweeps` full resampling passes follow.  counts_out[m] receives the
    # final topic counts of doc_ids[m] over [lo, hi).
    n_alloc = hi - lo
    cum = np.empty(n_alloc, dtype=np.float64)
    z_buf = np.empty(tokens.shape[0], dtype=np.int32)
    used = 0
    for m in range(doc_ids.shape[0]):
        d = doc_ids[m]
        start = doc_ptr[d]
        stop = doc_ptr[d + 1]
        for j in range(n_alloc):
            counts_out[m, j] = 0

        for it in range(sweeps + 1):
            for pos in range(start, stop):
                w = tokens[pos]
                if it > 0:
                    counts_out[m, z_buf[pos] - lo] -= 1
                total = 0.0
                for j in range(n_alloc):
                    k = lo + j
                    weight = (counts_out[m, j] + alpha[k]) * phi[k, w]
                    total += weight
                    cum[j] = total
                r = uniforms[used] * total
                used += 1
                j = 0
                while j < n_alloc - 1 and cum[j] <= r:
                    j += 1
                z_buf[pos] = lo + j
                counts_out[m, j] += 1
    return used


def _fold_in_numpy(tokens, doc_ptr, doc_ids, phi, alpha, lo, hi, sweeps, uniforms, counts_out):
    # Interpreted twin of _fold_in (see _gibbs_sweep_numpy on bit-equality).
    alpha_s = alpha[lo:hi]
    z_buf = np.empty(tokens.shape[0], dtype=np.int32)
    used = 0
    for m, d in enumerate(doc_ids):
        start = doc_ptr[d]
        stop = doc_ptr[d + 1]
        row = counts_out[m]
        row[:] = 0
        for it in range(sweeps + 1):
            for pos in range(start, stop):
                w = tokens[pos]
                if it > 0:
                    row[z_buf[pos] - lo] -= 1
                cum = np.cumsum((row + alpha_s) * phi[lo:hi, w])
                r = uniforms[used] * cum[-1]
                used += 1
                j = int(np.searchsorted(cum, r, side="right"))
                if j >= cum.shape[0]:
                    j = cum.shape[0] - 1
                z_buf[pos] = lo + j
                row[j] += 1
    return used


gibbs_sweep_py = _gibbs_sweep_numpy
fold_in_py = _fold_in_numpy

_njit = _load_njit()
if _njit is not None:
    gibbs_sweep_jit = _njit(cache=True)(_gibbs_sweep)
    fold_in_jit = _njit(cache=True)(_fold_in)
else:
    gibbs_sweep_jit = None
    fold_in_jit = None

NUMBA_ENABLED = _njit is not None and _numba_requested()

if NUMBA_ENABLED:
    gibbs_sweep_kernel = gibbs_sweep_jit
    fold_in_kernel = fold_in_jit
else:
    gibbs_sweep_kernel = gibbs_sweep_py
    fold_in_kernel = fold_in_py
