"""Componentwise monotonicity as linear inequalities, and the MAP predictor.

A piecewise multilinear expansion is non-decreasing in a variable exactly
when its coefficients are non-decreasing along that variable's axis of every
block tensor, so the constraint set is ``A xi <= 0`` with one row per pair
of multi-indices that differ by one step in one constrained coordinate.
``A`` is block diagonal over the blocks, with two nonzeros (+1/-1) per row.

The constrained MAP estimate minimizes ``(xi - mu)' Sigma^-1 (xi - mu)``
over that polyhedron (a strictly convex QP, see :mod:`bagp.qp`), and the
mode predictor is the expansion at the minimizer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import basis as bmod
from .basis import BasisStructure, mass_vector, phi_matrix
from .kernels import KernelParams, prior_cov
from .posterior import Dataset, Posterior, condition
from .qp import solve_qp

INCREASING = "increasing"
DECREASING = "decreasing"
UNCONSTRAINED = "none"

# Componentwise feasibility accepted for a fitted coefficient vector.
MONOTONE_TOL = 1e-9


def normalize_directions(basis: BasisStructure, directions=None) -> dict:
    """Fill in a per-active-variable direction map (default: non-decreasing)."""
    out = {}
    for i in basis.partition.active_vars:
        d = INCREASING if directions is None else directions.get(i, INCREASING)
        if d not in (INCREASING, DECREASING, UNCONSTRAINED):
            raise ValueError(f"unknown direction {d!r} for variable {i}")
        out[i] = d
    return out


@dataclass(frozen=True)
class ConstraintSystem:
    """Sparse inequality system ``matrix @ xi <= 0`` plus its metadata."""

    matrix: sp.csr_matrix
    directions: dict
    row_blocks: tuple          # per block: (first row, one past last row)

    @property
    def n_rows(self):
        return self.matrix.shape[0]

    def violations(self, xi) -> np.ndarray:
        if self.n_rows == 0:
            return np.zeros(0)
        return np.asarray(self.matrix @ np.asarray(xi, dtype=float)).ravel()

    def is_feasible(self, xi, tol: float = MONOTONE_TOL) -> bool:
        v = self.violations(xi)
        return bool(v.size == 0 or v.max() <= tol)


def build_monotone_constraints(basis: BasisStructure, directions=None) -> ConstraintSystem:
    """Adjacent-pair difference constraints for the requested directions.

    Per block and per constrained variable, every pair of multi-indices one
    step apart in that variable yields one row; unconstrained variables
    contribute nothing.
    """
    directions = normalize_directions(basis, directions)
    rows, cols, vals = [], [], []
    row_blocks = []
    nrow = 0
    for j, block in enumerate(basis.blocks):
        shape = basis.block_shapes[j]
        offset = basis.block_offsets[j]
        start = nrow
        flat = np.arange(int(np.prod(shape))).reshape(shape)
        for pos, var in enumerate(block):
            sign = {INCREASING: 1.0, DECREASING: -1.0, UNCONSTRAINED: 0.0}[directions[var]]
            if sign == 0.0 or shape[pos] < 2:
                continue
            lower = np.take(flat, range(shape[pos] - 1), axis=pos).ravel() + offset
            upper = np.take(flat, range(1, shape[pos]), axis=pos).ravel() + offset
            k = lower.size
            r = np.arange(nrow, nrow + k)
            rows.extend([r, r])
            # increasing: a_l - a_{l+1} <= 0 ; decreasing: the reverse.
            cols.extend([lower, upper])
            vals.extend([np.full(k, sign), np.full(k, -sign)])
            nrow += k
        row_blocks.append((start, nrow))
    if nrow:
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nrow, basis.size))
    else:
        mat = sp.csr_matrix((0, basis.size))
    return ConstraintSystem(mat, directions, tuple(row_blocks))


def strict_interior_direction(basis: BasisStructure, cons: ConstraintSystem) -> np.ndarray:
    """A vector ``v`` with ``matrix @ v = -1`` on every row: moving along it
    pushes a feasible point strictly inside the polyhedron."""
    v = np.zeros(basis.size)
    for j, block in enumerate(basis.blocks):
        idx = basis.multi_indices(j).astype(float)
        contrib = np.zeros(idx.shape[0])
        for pos, var in enumerate(block):
            d = cons.directions.get(var, UNCONSTRAINED)
            if d == INCREASING:
                contrib += idx[:, pos]
            elif d == DECREASING:
                contrib -= idx[:, pos]
        v[basis.block_slice(j)] = contrib
    return v


def map_estimate(post: Posterior, cons: ConstraintSystem):
    """Constrained MAP coefficients and solver diagnostics."""
    if cons.n_rows == 0:
        return post.mu.copy(), {"iterations": 0, "method": "unconstrained",
                                "kkt": {"stationarity": 0.0, "primal": 0.0,
                                        "comp_slack": 0.0, "dual": 0.0}}
    res = solve_qp(post.sigma_inv, post.mu, cons.matrix)
    return res.x, {"iterations": res.iterations, "method": res.method,
                   "kkt": res.kkt, "n_active": int(res.active.size)}


@dataclass
class FittedModel:
    """Basis + kernel parameters + MAP coefficients: the mode predictor."""

    basis: BasisStructure
    params: KernelParams
    xi_hat: np.ndarray
    constraints: ConstraintSystem
    diagnostics: dict = field(default_factory=dict)
    normalization: dict | None = None

    def __post_init__(self):
        xi = np.asarray(self.xi_hat, dtype=float)
        if xi.shape != (self.basis.size,):
            raise ValueError("coefficient length does not match the basis")
        if not np.all(np.isfinite(xi)):
            raise ValueError("non-finite MAP coefficients")
        self.xi_hat = xi

    # -- evaluation ---------------------------------------------------------

    def predict(self, X) -> np.ndarray:
        """Mode-predictor values at points of the unit cube."""
        X = np.asarray(X, dtype=float)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[None, :]
        out = phi_matrix(self.basis, X).T @ self.xi_hat
        return float(out[0]) if squeeze else out

    def total_integral(self) -> float:
        """Integral of the predictor over the unit cube."""
        if self.basis.size == 0:
            return 0.0
        return float(mass_vector(self.basis) @ self.xi_hat)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": "bagp-model/1",
            "basis": self.basis.to_dict(),
            "params": self.params.to_dict(self.basis),
            "xi_hat": self.xi_hat.tolist(),
            "directions": {str(k): v for k, v in self.constraints.directions.items()},
            "normalization": self.normalization,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        if d.get("schema") != "bagp-model/1":
            raise ValueError(f"unsupported model schema {d.get('schema')!r}")
        basis = BasisStructure.from_dict(d["basis"])
        params = KernelParams.from_dict(d["params"])
        directions = {int(k): v for k, v in d["directions"].items()}
        cons = build_monotone_constraints(basis, directions)
        return cls(basis, params, np.asarray(d["xi_hat"], dtype=float), cons,
                   normalization=d.get("normalization"))

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        return cls.from_dict(json.loads(text))


def predict(model: FittedModel, x) -> float:
    """Mode-predictor value at one point."""
    return float(model.predict(np.asarray(x, dtype=float)))


def block_predictors(model: FittedModel):
    """Centered per-block predictors (each integrates to zero on the cube).

    Returns a list of callables taking ``(n, D)`` arrays; their sum plus
    :meth:`FittedModel.total_integral` reproduces the full predictor.
    """
    basis = model.basis
    funcs = []
    for j in range(len(basis.blocks)):
        xi_j = model.xi_hat[basis.block_slice(j)]
        c_j = float(bmod.block_mass(basis, j) @ xi_j)

        def f(X, j=j, xi_j=xi_j, c_j=c_j):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            P = phi_matrix(basis, X)
            return P[basis.block_slice(j)].T @ xi_j - c_j

        funcs.append(f)
    return funcs


def fit_map_model(basis: BasisStructure, params: KernelParams, data: Dataset,
                  directions=None, mu_path: str = "auto",
                  normalization: dict | None = None) -> tuple[FittedModel, Posterior]:
    """Condition on the data and solve the constrained MAP in one call."""
    if basis.size == 0:
        cons = build_monotone_constraints(basis, directions)
        model = FittedModel(basis, KernelParams((), {}, params.tau2 if params else 0.0),
                            np.zeros(0), cons, {"method": "empty"}, normalization)
        return model, None
    prior = prior_cov(basis, params)
    post = condition(basis, prior, data, params.tau2, mu_path=mu_path)
    cons = build_monotone_constraints(basis, directions)
    xi_hat, diag = map_estimate(post, cons)
    if not cons.is_feasible(xi_hat):
        raise ValueError("MAP solution violates the monotonicity tolerance")
    model = FittedModel(basis, params, xi_hat, cons, diag, normalization)
    return model, post
