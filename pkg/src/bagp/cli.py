"""Command-line front end.

Subcommands: ``fit``, ``maxmod``, ``predict``, ``sample``, ``check-samples``,
``bench``, ``gen-design``.  Datasets are CSV files with a header row, the
response in column ``y`` and features in columns ``x1..xD`` (inputs must lie
in [0,1] unless ``--normalize`` rescales them, recording the bounds in the
model).  Every command writes a manifest JSON echoing the resolved
configuration, the package version and the wall time, so a run can be
reproduced from its outputs.

Exit codes: 0 success, 2 validation/usage error, 3 numerical failure.
``BAGP_THREADS`` overrides candidate-level parallelism in ``maxmod``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .basis import BasisStructure, Subpartition
from .bench import block_recovery, hd_monotone
from .constraints import FittedModel, fit_map_model
from .exceptions import NumericalError
from .maxmod import MaxModConfig, history_to_csv, run_maxmod
from .metrics import lhd, q2
from .mle import MleProblem, fit_params
from .posterior import Dataset, condition
from .kernels import prior_cov
from .sampler import sample_truncated

FLOAT_FMT = "%.17g"


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# CSV handling
# ---------------------------------------------------------------------------

def _parse_cell(text, row, col):
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"non-numeric cell at row {row}, column {col!r}: {text!r}")


def read_table(path, require_y):
    """Parse a feature table; returns (X, y or None, D)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UsageError(f"{path}: empty CSV")
        header = [h.strip() for h in header]
        cols = {name: k for k, name in enumerate(header)}
        D = 0
        while f"x{D + 1}" in cols:
            D += 1
        if D == 0:
            raise UsageError(f"{path}: no feature columns x1..xD found")
        if require_y and "y" not in cols:
            raise UsageError(f"{path}: missing response column 'y'")
        X_rows, y_rows = [], []
        for r, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            X_rows.append([_parse_cell(row[cols[f"x{i}"]], r, f"x{i}")
                           for i in range(1, D + 1)])
            if require_y:
                y_rows.append(_parse_cell(row[cols["y"]], r, "y"))
        if not X_rows:
            raise UsageError(f"{path}: no data rows")
    X = np.asarray(X_rows)
    y = np.asarray(y_rows) if require_y else None
    return X, y, D


def load_dataset(path, normalize):
    """Dataset plus the recorded normalization bounds (or None)."""
    X, y, D = read_table(path, require_y=True)
    bounds = None
    if normalize:
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        X = (X - lo) / span
        bounds = {str(i + 1): [float(lo[i]), float(hi[i])] for i in range(D)}
    if np.any((X < 0) | (X > 1)):
        raise UsageError(
            f"{path}: inputs outside [0,1]; pass --normalize to rescale")
    return Dataset(X, y), bounds


def apply_normalization(X, bounds):
    if bounds is None:
        return X
    X = X.astype(float).copy()
    for key, (lo, hi) in bounds.items():
        i = int(key) - 1
        span = (hi - lo) if hi > lo else 1.0
        X[:, i] = (X[:, i] - lo) / span
    return X


def write_manifest(path, command, args_dict, extra=None):
    doc = {"command": command, "version": __version__,
           "config": args_dict, "written_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def parse_directions(spec_text):
    """'1:increasing,3:decreasing' -> mapping; None means all increasing."""
    if not spec_text:
        return None
    out = {}
    for item in spec_text.split(","):
        var, _, kind = item.partition(":")
        out[int(var)] = kind.strip() or "increasing"
    return out


def parse_blocks(spec_text, D):
    """'1,2;3' -> Subpartition; default: one singleton block per column."""
    if not spec_text:
        return Subpartition(tuple((i,) for i in range(1, D + 1)), D)
    blocks = []
    for blk in spec_text.split(";"):
        blocks.append(tuple(int(v) for v in blk.split(",") if v.strip()))
    return Subpartition(tuple(blocks), D)


def _threads(args):
    env = os.environ.get("BAGP_THREADS")
    if env:
        return max(1, int(env))
    return getattr(args, "threads", 1) or 1


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_fit(args):
    data, bounds = load_dataset(args.data, args.normalize)
    part = parse_blocks(args.blocks, data.dimension)
    basis = BasisStructure.from_knot_counts(part, args.knots)
    directions = parse_directions(args.directions)
    t0 = time.perf_counter()
    params, mle_diag = fit_params(MleProblem(basis, data,
                                             n_starts=args.mle_starts,
                                             seed=args.seed))
    model, _ = fit_map_model(basis, params, data, directions,
                             normalization=bounds)
    wall = time.perf_counter() - t0
    with open(args.out, "w") as fh:
        fh.write(model.to_json())
    pred = model.predict(data.X)
    report = {
        "nll": mle_diag["nll"],
        "kkt": model.diagnostics.get("kkt"),
        "q2_train": q2(data.Y, pred) if np.var(data.Y) > 0 else None,
        "wall_time_s": wall,
        "basis_size": basis.size,
    }
    write_manifest(args.out + ".manifest.json", "fit", vars_of(args), report)
    print(f"fit: wrote {args.out} (|L|={basis.size}, nll={mle_diag['nll']:.4f}, "
          f"{wall:.2f}s)")


def cmd_maxmod(args):
    data, bounds = load_dataset(args.data, args.normalize)
    cfg = MaxModConfig(
        alpha=args.alpha, gamma=args.gamma, eps1_rel=args.eps1,
        eps2=args.eps2, max_iter=args.max_iter, seed=args.seed,
        fit_mode=args.fit_mode, threads=_threads(args),
    )
    t0 = time.perf_counter()
    state, model = run_maxmod(data, cfg)
    wall = time.perf_counter() - t0
    model.normalization = bounds
    with open(args.out, "w") as fh:
        fh.write(model.to_json())
    history_to_csv(state, args.history)
    write_manifest(args.out + ".manifest.json", "maxmod", vars_of(args), {
        "iterations": len(state.history),
        "final_partition": [list(b) for b in state.basis.blocks],
        "final_size": state.basis.size,
        "wall_time_s": wall,
    })
    print(f"maxmod: {len(state.history)} iterations, partition "
          f"{[list(b) for b in state.basis.blocks]}, wrote {args.out}")


def cmd_predict(args):
    with open(args.model) as fh:
        model = FittedModel.from_json(fh.read())
    X, _, D = read_table(args.points, require_y=False)
    if D != model.basis.dimension:
        raise UsageError(f"model expects {model.basis.dimension} features, "
                         f"points file has {D}")
    X = apply_normalization(X, model.normalization)
    if np.any((X < 0) | (X > 1)):
        if not args.clamp:
            raise UsageError("points outside the unit cube; pass --clamp "
                             "to project them")
        X = np.clip(X, 0.0, 1.0)
    cols = {"yhat": model.predict(X)}
    if args.blocks:
        from .constraints import block_predictors
        for j, f in enumerate(block_predictors(model)):
            label = "block_" + "_".join(str(v) for v in model.basis.blocks[j])
            cols[label] = f(X)
    header = ",".join(cols)
    np.savetxt(args.out, np.column_stack(list(cols.values())),
               delimiter=",", fmt=FLOAT_FMT, header=header, comments="")
    write_manifest(args.out + ".manifest.json", "predict", vars_of(args),
                   {"rows": int(X.shape[0])})
    print(f"predict: wrote {args.out} ({X.shape[0]} rows)")


def cmd_sample(args):
    if args.n < 1:
        raise UsageError("need at least one draw")
    with open(args.model) as fh:
        model = FittedModel.from_json(fh.read())
    data, _ = load_dataset(args.data, normalize=False)
    if model.normalization:
        raise UsageError("sampling a normalized model needs raw-unit data; "
                         "normalize the CSV beforehand")
    prior = prior_cov(model.basis, model.params)
    post = condition(model.basis, prior, data, model.params.tau2)
    batch = sample_truncated(post, model.constraints, args.n, seed=args.seed,
                             initial=model.xi_hat)
    batch.to_csv(args.out)
    write_manifest(args.out + ".manifest.json", "sample", vars_of(args),
                   {"diagnostics": batch.diagnostics})
    print(f"sample: wrote {args.out} ({args.n} draws, "
          f"method={batch.diagnostics['method']})")


def cmd_check_samples(args):
    with open(args.model) as fh:
        model = FittedModel.from_json(fh.read())
    draws = np.loadtxt(args.samples, delimiter=",", ndmin=2)
    if draws.shape[1] != model.basis.size:
        raise UsageError(f"samples have {draws.shape[1]} columns, model basis "
                         f"has {model.basis.size}")
    cons = model.constraints
    worst = float(np.max(cons.matrix @ draws.T, initial=-np.inf))
    ok = worst <= args.tol
    print(f"check-samples: max constraint value {worst:.3e} "
          f"({'OK' if ok else 'VIOLATED'}, tol {args.tol:g})")
    if not ok:
        raise UsageError("sample file violates the model constraints")


def _markdown_table(rows, columns):
    head = "| " + " | ".join(columns) + " |"
    sep = "|" + "|".join("---" for _ in columns) + "|"
    lines = [head, sep]
    for r in rows:
        lines.append("| " + " | ".join(str(r.get(c, "")) for c in columns) + " |")
    return "\n".join(lines) + "\n"


def cmd_bench(args):
    os.makedirs(args.out_dir, exist_ok=True)
    t0 = time.perf_counter()
    if args.suite == "hd-monotone":
        dims = [int(d) for d in args.dims.split(",")]
        rows = [hd_monotone(D, replicates=args.replicates, n_sim=args.n_sim,
                            with_mean=not args.no_mean, seed=args.seed,
                            q2_points=args.q2_points)
                for D in dims]
        cols = ["D", "m", "n", "n_sim", "q2_ba_mean_mean", "q2_ba_mean_std",
                "q2_bac_mode_mean", "q2_bac_mode_std", "q2_bac_mean_mean",
                "q2_bac_mean_std", "time_fit_mean", "time_mode_mean",
                "time_mean_mean"]
        out_rows = [{c: round(r[c], 4) if isinstance(r.get(c), float) else r.get(c, "")
                     for c in cols} for r in rows]
    elif args.suite == "block-recovery":
        res = block_recovery(replicates=args.replicates, dummies=args.dummies,
                             seed=args.seed, max_iter=args.max_iter)
        medians = [float(np.median([q[i] for q in res["q2_per_iteration"]
                                    if len(q) > i]))
                   for i in range(max(len(q) for q in res["q2_per_iteration"]))]
        rows = [{"replicate": k + 1,
                 "recovered_at": res["recovered_at"][k],
                 "dummy_first_activation": res["dummy_first_activation"][k],
                 "final_q2": round(res["q2_per_iteration"][k][-1], 4)}
                for k in range(res["replicates"])]
        recovered = [r for r in res["recovered_at"] if r is not None]
        rows.append({"replicate": "summary",
                     "recovered_at": f"{len(recovered)}/{res['replicates']}",
                     "dummy_first_activation": "",
                     "final_q2": round(float(np.median(medians[-1:])), 4)})
        cols = ["replicate", "recovered_at", "dummy_first_activation", "final_q2"]
        out_rows = rows
        with open(os.path.join(args.out_dir, "q2_medians.json"), "w") as fh:
            json.dump({"median_q2_per_iteration": medians}, fh, indent=2)
    else:
        raise UsageError(f"unknown suite {args.suite!r}")

    base = os.path.join(args.out_dir, args.suite)
    with open(base + ".md", "w") as fh:
        fh.write(_markdown_table(out_rows, cols))
    with open(base + ".csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(out_rows)
    write_manifest(base + ".manifest.json", "bench", vars_of(args),
                   {"wall_time_s": time.perf_counter() - t0})
    print(f"bench: wrote {base}.md / .csv")


def cmd_gen_design(args):
    d = lhd(args.n, args.dim, seed=args.seed, kind=args.kind)
    d.to_csv(args.out)
    write_manifest(args.out + ".manifest.json", "gen-design", vars_of(args),
                   {"min_distance": d.min_distance()})
    print(f"gen-design: wrote {args.out}")


def vars_of(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="bagp",
                                description="Block-additive constrained GP fitting")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a fixed structure")
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--blocks", default="", help="e.g. '1,2;3' (default: singletons)")
    f.add_argument("--knots", type=int, default=2)
    f.add_argument("--directions", default="", help="e.g. '1:increasing,2:none'")
    f.add_argument("--normalize", action="store_true")
    f.add_argument("--mle-starts", type=int, default=5)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("maxmod", help="greedy structure selection")
    m.add_argument("--data", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--history", required=True)
    m.add_argument("--alpha", type=float, default=1.4)
    m.add_argument("--gamma", type=float, default=0.5)
    m.add_argument("--eps1", type=float, default=1e-4,
                   help="L2Mod threshold relative to var(y)")
    m.add_argument("--eps2", type=float, default=1e-3)
    m.add_argument("--max-iter", type=int, default=30)
    m.add_argument("--fit-mode", choices=["auto", "full", "fast"], default="auto")
    m.add_argument("--threads", type=int, default=0)
    m.add_argument("--normalize", action="store_true")
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_maxmod)

    pr = sub.add_parser("predict", help="evaluate a saved model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--points", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--blocks", action="store_true",
                    help="add centered per-block prediction columns")
    pr.add_argument("--clamp", action="store_true")
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("sample", help="draw from the constrained posterior")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    ck = sub.add_parser("check-samples", help="verify a sample file")
    ck.add_argument("--model", required=True)
    ck.add_argument("--samples", required=True)
    ck.add_argument("--tol", type=float, default=1e-8)
    ck.set_defaults(func=cmd_check_samples)

    b = sub.add_parser("bench", help="benchmark suites")
    b.add_argument("--suite", required=True,
                   choices=["hd-monotone", "block-recovery"])
    b.add_argument("--out-dir", default="bench-out")
    b.add_argument("--dims", default="10")
    b.add_argument("--replicates", type=int, default=10)
    b.add_argument("--n-sim", type=int, default=None)
    b.add_argument("--no-mean", action="store_true",
                   help="skip the sample-mean predictor column")
    b.add_argument("--q2-points", type=int, default=10_000)
    b.add_argument("--dummies", type=int, default=0)
    b.add_argument("--max-iter", type=int, default=15)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("gen-design", help="Latin hypercube designs")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--kind", default="random-lhd",
                   choices=["random-lhd", "maximin-lhd", "uniform"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_design)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
