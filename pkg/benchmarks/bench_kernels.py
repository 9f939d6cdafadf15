#!/usr/bin/env python3
"""Benchmark the jit-compiled sampling kernels against the interpreted
numpy fallback (the path selected by SEMSCAN_NO_NUMBA=1).

Usage: python benchmarks/bench_kernels.py [--docs N] [--sweeps N]
"""

import argparse
import time

import numpy as np

from semscan import kernels
from semscan.corpus import Document
from semscan.gibbs import CountTables, Hyperparameters


def build_state(n_docs, n_words, n_topics, tokens_per_doc, seed=0):
    rng = np.random.default_rng(seed)
    docs = [
        Document(
            id=f"d{i}",
            tokens=tuple(rng.integers(0, n_words, size=tokens_per_doc).tolist()),
            timestamp=0,
            location="z",
        )
        for i in range(n_docs)
    ]
    tables = CountTables.initialize(docs, n_words, n_topics, 0, rng)
    hyper = Hyperparameters.symmetric(n_topics)
    return tables, hyper


def time_sweeps(kernel, tables, hyper, sweeps, seed=1):
    rng = np.random.default_rng(seed)
    beta, beta_sum = hyper.word_prior_arrays(tables.t_background, tables.n_topics, tables.n_words)
    doc_ids = np.arange(tables.n_docs, dtype=np.int64)
    alpha = hyper.alpha[: tables.n_topics]
    n_tokens = tables.tokens.shape[0]
    started = time.perf_counter()
    for _ in range(sweeps):
        uniforms = rng.random(n_tokens)
        kernel(
            tables.tokens, tables.doc_ptr, tables.z, doc_ids,
            tables.n_ik, tables.n_kw, tables.n_k,
            tables.base_n_kw, tables.base_n_k,
            alpha, beta, beta_sum, 0, tables.n_topics, uniforms,
        )
    return time.perf_counter() - started


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=1000)
    parser.add_argument("--words", type=int, default=200)
    parser.add_argument("--topics", type=int, default=10)
    parser.add_argument("--tokens-per-doc", type=int, default=20)
    parser.add_argument("--sweeps", type=int, default=20)
    args = parser.parse_args()

    if kernels.gibbs_sweep_jit is None:
        raise SystemExit("numba is not installed; nothing to compare")

    n_tokens = args.docs * args.tokens_per_doc
    print(
        f"gibbs sweep over {args.docs} docs x {args.tokens_per_doc} tokens, "
        f"{args.topics} topics, {args.words} words ({n_tokens} positions/sweep)"
    )

    tables, hyper = build_state(args.docs, args.words, args.topics, args.tokens_per_doc)
    time_sweeps(kernels.gibbs_sweep_jit, tables, hyper, sweeps=1)  # compile
    jit_time = time_sweeps(kernels.gibbs_sweep_jit, tables, hyper, args.sweeps)

    tables, hyper = build_state(args.docs, args.words, args.topics, args.tokens_per_doc)
    py_sweeps = max(1, args.sweeps // 10)
    py_time = time_sweeps(kernels.gibbs_sweep_py, tables, hyper, py_sweeps)
    py_time_scaled = py_time * args.sweeps / py_sweeps

    per_token_jit = jit_time / (args.sweeps * n_tokens)
    per_token_py = py_time_scaled / (args.sweeps * n_tokens)
    print(f"  numba @njit : {jit_time:8.3f}s for {args.sweeps} sweeps "
          f"({per_token_jit * 1e9:7.1f} ns/token)")
    print(f"  numpy loop  : {py_time_scaled:8.3f}s for {args.sweeps} sweeps (extrapolated) "
          f"({per_token_py * 1e9:7.1f} ns/token)")
    print(f"  speedup     : {py_time_scaled / jit_time:8.1f}x")


if __name__ == "__main__":
    main()
