"""Reproducible benchmark suites behind the command-line ``bench`` command.

* ``hd-monotone``: fixed pair-block structure on the shrinking-arctan target,
  comparing the unconstrained posterior-mean predictor against the
  constrained mode and (optionally) the sample-mean predictor, across
  dimensions and replicates.
* ``block-recovery``: MaxMod runs on the three-block 6D target (optionally
  padded with dummy variables), tracking when the true partition is found.
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from .basis import BasisStructure, Subpartition, phi_matrix
from .constraints import fit_map_model
from .maxmod import MaxModConfig, run_maxmod
from .metrics import MAXIMIN_LHD, RANDOM_LHD, lhd, q2, toy_6d, toy_block_arctan
from .mle import MleProblem, fit_params
from .posterior import Dataset, posterior_predict_mean_batch
from .sampler import sample_truncated

TRUE_PARTITION_6D = ((1, 3), (2, 4), (5, 6))


def pair_partition(D: int) -> Subpartition:
    """Consecutive-pair blocks {2j-1, 2j}."""
    return Subpartition(tuple((2 * j + 1, 2 * j + 2) for j in range(D // 2)), D)


def default_n_sim(D: int) -> int:
    if D <= 10:
        return 10_000
    if D <= 20:
        return 1_000
    return 100


def hd_monotone(D: int, replicates: int = 10, n_factor: int = 3, m: int = 6,
                n_sim: int | None = None, with_mean: bool = True,
                q2_points: int = 10_000, seed: int = 0) -> dict:
    """One row of the high-dimensional monotone benchmark.

    Fits the true pair-block structure with ``m`` uniform knots per variable
    on ``n = n_factor * D`` Latin-hypercube points of the shrinking-arctan
    target, over several replicated designs.
    """
    if D % 2:
        raise ValueError("D must be even")
    if n_sim is None:
        n_sim = default_n_sim(D)
    basis = BasisStructure.from_knot_counts(pair_partition(D), m)
    test = lhd(q2_points, D, seed=seed + 91, kind=MAXIMIN_LHD).points
    y_test = toy_block_arctan(D, test)

    rows = {"q2_ba_mean": [], "q2_bac_mode": [], "q2_bac_mean": [],
            "time_mode": [], "time_mean": [], "time_fit": []}
    for r in range(replicates):
        sub = seed + 1000 * r
        X = lhd(n_factor * D, D, seed=sub, kind=RANDOM_LHD).points
        data = Dataset(X, toy_block_arctan(D, X))

        t0 = time.perf_counter()
        params, _ = fit_params(MleProblem(basis, data, seed=sub))
        t_fit = time.perf_counter() - t0

        t0 = time.perf_counter()
        model, post = fit_map_model(basis, params, data)
        t_mode = time.perf_counter() - t0

        yhat_ba = posterior_predict_mean_batch(basis, post, test)
        yhat_mode = model.predict(test)
        rows["q2_ba_mean"].append(q2(y_test, yhat_ba))
        rows["q2_bac_mode"].append(q2(y_test, yhat_mode))
        rows["time_fit"].append(t_fit)
        rows["time_mode"].append(t_mode)

        if with_mean:
            t0 = time.perf_counter()
            batch = sample_truncated(post, model.constraints, n_sim, seed=sub,
                                     initial=model.xi_hat)
            yhat_mean = phi_matrix(basis, test).T @ batch.mean()
            rows["time_mean"].append(time.perf_counter() - t0)
            rows["q2_bac_mean"].append(q2(y_test, yhat_mean))

    out = {"D": D, "m": basis.size, "n": n_factor * D, "n_sim": n_sim,
           "replicates": replicates}
    for key, vals in rows.items():
        if vals:
            out[key + "_mean"] = float(np.mean(vals))
            out[key + "_std"] = float(np.std(vals))
    return out


def block_recovery(replicates: int = 10, dummies: int = 0, n: int = 42,
                   max_iter: int = 15, seed: int = 0,
                   config: MaxModConfig | None = None,
                   q2_points: int = 4000) -> dict:
    """MaxMod structure recovery on the three-block 6D target.

    Tracks, per replicate, the first iteration at which the current
    partition equals the true one, the per-iteration test Q2 of the chosen
    models, and (with dummies) the first iteration activating a dummy.
    """
    D = 6 + dummies
    test = lhd(q2_points, D, seed=seed + 77, kind=MAXIMIN_LHD).points
    y_test = toy_6d(test)

    recovered_at, dummy_at, q2_per_iter, histories = [], [], [], []
    for r in range(replicates):
        sub = seed + 1000 * r
        X = lhd(n, D, seed=sub, kind=RANDOM_LHD).points
        data = Dataset(X, toy_6d(X))
        base = config or MaxModConfig()
        cfg = dataclasses.replace(base, max_iter=max_iter, seed=sub)

        rec, dum, q2s = [None], [None], []

        def track(state, best):
            if rec[0] is None and state.basis.blocks == TRUE_PARTITION_6D:
                rec[0] = state.iteration
            cand = best["candidate"]
            if dum[0] is None and cand.kind == "activate" and cand.var > 6:
                dum[0] = state.iteration
            q2s.append(q2(y_test, state.model.predict(test)))

        state, _ = run_maxmod(data, cfg, callback=track)
        recovered_at.append(rec[0])
        dummy_at.append(dum[0])
        q2_per_iter.append(q2s)
        histories.append(state.history)

    return {
        "replicates": replicates,
        "dummies": dummies,
        "recovered_at": recovered_at,
        "dummy_first_activation": dummy_at,
        "q2_per_iteration": q2_per_iter,
        "histories": histories,
    }
