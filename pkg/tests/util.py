"""Shared generators and oracles for the test suite."""

import numpy as np

from bagp.basis import BasisStructure, Subdivision, Subpartition
from bagp.constraints import FittedModel, build_monotone_constraints
from bagp.kernels import KernelParams


def random_subdivision(rng, m_max=6, min_gap=5e-3):
    m = rng.integers(2, m_max + 1)
    while True:
        interior = np.sort(rng.random(m - 2))
        knots = np.concatenate(([0.0], interior, [1.0]))
        if np.min(np.diff(knots)) > min_gap:
            return Subdivision(tuple(knots))


def random_structure(rng, D=4, m_max=4, max_block=2, p_active=0.7):
    """A random subpartition of a random subset of 1..D with random knots."""
    variables = [i for i in range(1, D + 1) if rng.random() < p_active]
    rng.shuffle(variables)
    blocks = []
    while variables:
        size = int(rng.integers(1, min(max_block, len(variables)) + 1))
        blocks.append(tuple(variables[:size]))
        variables = variables[size:]
    if not blocks:
        blocks = [(1,)]
    part = Subpartition(tuple(blocks), D)
    subs = [Subdivision()] * D
    for i in part.active_vars:
        subs[i - 1] = random_subdivision(rng, m_max)
    return BasisStructure(part, tuple(subs))


def apply_random_move(rng, basis):
    """One random ACTIVATE / REFINE / MERGE applied to a structure."""
    from bagp.maxmod import _activate, _merge, _refine
    D = basis.dimension
    choices = []
    inactive = [i for i in range(1, D + 1)
                if basis.partition.block_of(i) is None]
    if inactive:
        choices.append("activate")
    if basis.partition.active_vars:
        choices.append("refine")
    if len(basis.blocks) >= 2:
        choices.append("merge")
    kind = choices[rng.integers(len(choices))]
    if kind == "activate":
        return _activate(basis, int(rng.choice(inactive))).new_basis
    if kind == "refine":
        var = int(rng.choice(basis.partition.active_vars))
        while True:
            t = float(rng.uniform(0.05, 0.95))
            if min(abs(t - u) for u in basis.knots_for(var).knots) > 1e-3:
                return _refine(basis, var, t).new_basis
    a, b = rng.choice(len(basis.blocks), size=2, replace=False)
    return _merge(basis, int(min(a, b)), int(max(a, b))).new_basis


def make_map_model(basis, xi):
    """A FittedModel wrapper around arbitrary coefficients (no constraints
    enforced; handy for exercising predictors and criteria)."""
    params = KernelParams((1.0,) * len(basis.blocks),
                          {i: 0.5 for i in basis.partition.active_vars}, 1e-4) \
        if basis.blocks else KernelParams((), {}, 0.0)
    cons = build_monotone_constraints(basis, {i: "none" for i in
                                              basis.partition.active_vars})
    return FittedModel(basis, params, np.asarray(xi, dtype=float), cons)


def gauss_axis(knots_a, knots_b):
    """Per-cell 3-point Gauss nodes/weights on the union knot grid: exact
    for the piecewise-quadratic slices of a squared multilinear difference."""
    cells = np.union1d(np.union1d(knots_a, knots_b), [0.0, 1.0])
    gl_x, gl_w = np.polynomial.legendre.leggauss(3)
    nodes, weights = [], []
    for lo, hi in zip(cells, cells[1:]):
        half = 0.5 * (hi - lo)
        nodes.extend(lo + half * (gl_x + 1.0))
        weights.extend(half * gl_w)
    return np.asarray(nodes), np.asarray(weights)


def exact_tensor_quadrature(old_model, new_model):
    """Tensor-grid quadrature of the squared predictor difference."""
    basis = new_model.basis
    active = basis.partition.active_vars
    if not active:
        return 0.0
    axes = []
    for var in active:
        old_s = old_model.basis.knots_for(var)
        axes.append(gauss_axis(np.asarray(basis.knots_for(var).knots),
                               np.asarray(old_s.knots) if old_s else []))
    mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    X = np.full((pts.shape[0], basis.dimension), 0.5)
    for q, var in enumerate(active):
        X[:, var - 1] = pts[:, q]
    diff = new_model.predict(X) - old_model.predict(X)
    vals = (diff ** 2).reshape([len(a[0]) for a in axes])
    for _, w in reversed(axes):
        vals = vals @ w
    return float(vals)
