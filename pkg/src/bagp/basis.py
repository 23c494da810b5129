"""Tensorized hat-function bases on block structures.

A model structure is described by two objects:

* a :class:`Subpartition`: disjoint blocks of *active* variable indices
  (variables are numbered ``1..D``, matching the ``x1..xD`` data columns);
* one :class:`Subdivision` per variable: the ordered knots in ``[0, 1]``
  generating its one-dimensional hat basis (empty for inactive variables).

Each block carries the tensor products of its variables' one-dimensional hat
functions.  The full basis is the concatenation of the per-block families.

**Canonical ordering.**  Blocks are sorted by their smallest member and the
variables inside a block are sorted ascending.  Within a block, the tensor
basis functions are enumerated in lexicographic (C) order of their
multi-indices, the first variable of the block varying slowest.  The
coefficient vector of any expansion follows this layout, and all change-of-
basis and serialization code relies on it.

One-dimensional hat functions use the boundary convention that the first and
last hat extend to virtual knots -1 and 2, so that restricted to ``[0, 1]``
they form a partition of unity together with the interior hats.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import StructureError

# A refinement knot closer than this to an existing knot is rejected; two
# knots closer than SNAP_TOL are treated as the same knot.
KNOT_MIN_GAP = 1e-9
SNAP_TOL = 1e-12


# ---------------------------------------------------------------------------
# Structure types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Subdivision:
    """Ordered knots in [0, 1] for one variable; empty means inactive."""

    knots: tuple = ()

    def __post_init__(self):
        k = tuple(float(t) for t in self.knots)
        object.__setattr__(self, "knots", k)
        if not k:
            return
        if len(k) < 2:
            raise ValueError("a nonempty subdivision needs at least 2 knots")
        if k[0] != 0.0 or k[-1] != 1.0:
            raise ValueError("subdivision must start at 0 and end at 1")
        if any(b - a <= 0 for a, b in zip(k, k[1:])):
            raise ValueError("knots must be strictly increasing")

    @property
    def size(self):
        return len(self.knots)

    def __len__(self):
        return len(self.knots)

    def __bool__(self):
        return bool(self.knots)

    @classmethod
    def uniform(cls, m: int) -> "Subdivision":
        """Equally spaced subdivision with ``m`` knots."""
        if m < 2:
            raise ValueError("m must be >= 2")
        return cls(tuple(np.linspace(0.0, 1.0, m)))

    def refine(self, t: float) -> "Subdivision":
        """Insert knot ``t``; rejects near-duplicates of existing knots."""
        if not self.knots:
            raise ValueError("cannot refine an empty subdivision")
        if min(abs(t - u) for u in self.knots) < KNOT_MIN_GAP:
            raise ValueError(f"knot {t} is within {KNOT_MIN_GAP} of an existing knot")
        return Subdivision(tuple(sorted(self.knots + (float(t),))))

    def contains(self, other: "Subdivision") -> bool:
        """True if every knot of ``other`` appears here (up to snapping)."""
        if not other.knots:
            return True
        if not self.knots:
            return False
        mine = np.asarray(self.knots)
        return all(np.min(np.abs(mine - t)) <= SNAP_TOL for t in other.knots)


@dataclass(frozen=True)
class Subpartition:
    """Disjoint blocks of active variable indices in {1..D}.

    Stored in canonical form: variables ascending inside each block, blocks
    sorted by smallest member.  The union of the blocks may be a strict
    subset of {1..D}; left-out variables are inactive.
    """

    blocks: tuple
    dimension: int

    def __post_init__(self):
        canon = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        canon = tuple(sorted(canon, key=lambda b: b[0] if b else -1))
        object.__setattr__(self, "blocks", canon)
        seen = set()
        for b in canon:
            if not b:
                raise ValueError("empty block")
            for i in b:
                if not 1 <= i <= self.dimension:
                    raise ValueError(f"variable {i} outside 1..{self.dimension}")
                if i in seen:
                    raise ValueError(f"variable {i} appears in two blocks")
                seen.add(i)

    @property
    def n_blocks(self):
        return len(self.blocks)

    @property
    def active_vars(self):
        return tuple(sorted(i for b in self.blocks for i in b))

    def block_of(self, var: int):
        """Index of the block containing ``var``, or None."""
        for j, b in enumerate(self.blocks):
            if var in b:
                return j
        return None

    @classmethod
    def empty(cls, dimension: int) -> "Subpartition":
        return cls((), dimension)


@dataclass(frozen=True)
class BasisStructure:
    """A subpartition plus subdivisions, with the derived index bookkeeping.

    Attributes
    ----------
    partition : Subpartition
    subdivisions : tuple of Subdivision
        One per variable ``1..D`` (entry ``i-1`` belongs to variable ``i``);
        nonempty exactly for the active variables.
    block_shapes : tuple of tuple
        Per block, the knot counts of its variables in ascending order.
    block_sizes, block_offsets : tuple of int
        Flattened length of each block's tensor basis and its offset into
        the concatenated coefficient vector.
    size : int
        Total number of basis functions.
    """

    partition: Subpartition
    subdivisions: tuple
    block_shapes: tuple = field(init=False)
    block_sizes: tuple = field(init=False)
    block_offsets: tuple = field(init=False)
    size: int = field(init=False)

    def __post_init__(self):
        subs = tuple(s if isinstance(s, Subdivision) else Subdivision(tuple(s))
                     for s in self.subdivisions)
        if len(subs) != self.partition.dimension:
            raise ValueError("need one subdivision slot per variable")
        object.__setattr__(self, "subdivisions", subs)
        active = set(self.partition.active_vars)
        for i, s in enumerate(subs, start=1):
            if (i in active) != bool(s):
                raise ValueError(
                    f"variable {i} is {'active' if i in active else 'inactive'} "
                    f"but its subdivision is {'empty' if not s else 'nonempty'}")
        shapes = tuple(tuple(subs[i - 1].size for i in b) for b in self.partition.blocks)
        sizes = tuple(int(np.prod(sh)) for sh in shapes)
        offsets = tuple(int(o) for o in np.concatenate(([0], np.cumsum(sizes)[:-1]))) \
            if sizes else ()
        object.__setattr__(self, "block_shapes", shapes)
        object.__setattr__(self, "block_sizes", sizes)
        object.__setattr__(self, "block_offsets", offsets)
        object.__setattr__(self, "size", int(sum(sizes)))

    # -- convenience -------------------------------------------------------

    @property
    def dimension(self):
        return self.partition.dimension

    @property
    def blocks(self):
        return self.partition.blocks

    def knots_for(self, var: int) -> Subdivision:
        return self.subdivisions[var - 1]

    def block_slice(self, j: int) -> slice:
        return slice(self.block_offsets[j], self.block_offsets[j] + self.block_sizes[j])

    def multi_indices(self, j: int) -> np.ndarray:
        """All multi-indices of block ``j`` (1-based entries), in canonical
        order; shape ``(block_sizes[j], len(block))``."""
        shape = self.block_shapes[j]
        grids = np.meshgrid(*[np.arange(1, m + 1) for m in shape], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @classmethod
    def empty(cls, dimension: int) -> "BasisStructure":
        return cls(Subpartition.empty(dimension), (Subdivision(),) * dimension)

    @classmethod
    def from_knot_counts(cls, partition: Subpartition, m) -> "BasisStructure":
        """Uniform subdivisions with ``m`` knots (an int, or a per-variable
        mapping) on every active variable."""
        subs = []
        for i in range(1, partition.dimension + 1):
            if partition.block_of(i) is None:
                subs.append(Subdivision())
            else:
                mi = m if isinstance(m, int) else m[i]
                subs.append(Subdivision.uniform(mi))
        return cls(partition, tuple(subs))

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "blocks": [list(b) for b in self.blocks],
            "subdivisions": {str(i): list(self.subdivisions[i - 1].knots)
                             for i in self.partition.active_vars},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "BasisStructure":
        dim = int(d["dimension"])
        part = Subpartition(tuple(tuple(b) for b in d["blocks"]), dim)
        subs = [Subdivision()] * dim
        for key, knots in d["subdivisions"].items():
            subs[int(key) - 1] = Subdivision(tuple(knots))
        return cls(part, tuple(subs))

    @classmethod
    def from_json(cls, text: str) -> "BasisStructure":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Hat-function evaluation
# ---------------------------------------------------------------------------

def hat_eval(u: float, v: float, w: float, x) -> np.ndarray | float:
    """Piecewise-linear bump with support [u, w], peak 1 at v.

    Rises linearly on [u, v], falls on [v, w], zero outside.
    """
    if not u < v < w:
        raise ValueError("hat knots must satisfy u < v < w")
    x = np.asarray(x, dtype=float)
    up = (x - u) / (v - u)
    down = (w - x) / (w - v)
    out = np.where(x <= v, up, down)
    out = np.where((x < u) | (x > w), 0.0, out)
    return out if out.ndim else float(out)


def basis_eval_1d(s: Subdivision, x: float) -> np.ndarray:
    """Values of the m hat functions of subdivision ``s`` at a point.

    At most two entries are nonzero and they sum to one.
    """
    return basis_matrix_1d(s, [x])[0]


def basis_matrix_1d(s: Subdivision, x) -> np.ndarray:
    """Hat-basis values at many points: array of shape ``(len(x), m)``."""
    if not s:
        raise ValueError("subdivision is empty")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("points must lie in [0, 1]")
    t = np.asarray(s.knots)
    m = t.size
    # Cell index such that t[c] <= x <= t[c+1]; the clip handles x == 1.
    c = np.clip(np.searchsorted(t, x, side="right") - 1, 0, m - 2)
    width = t[c + 1] - t[c]
    right = (x - t[c]) / width
    out = np.zeros((x.size, m))
    rows = np.arange(x.size)
    out[rows, c] = 1.0 - right
    out[rows, c + 1] = right
    return out


def phi_eval(basis: BasisStructure, x) -> np.ndarray:
    """Concatenated tensor-basis values at one point of the unit cube."""
    return phi_matrix(basis, np.asarray(x, dtype=float)[None, :])[:, 0]


def phi_matrix(basis: BasisStructure, X) -> np.ndarray:
    """Basis values at many points: array of shape ``(basis.size, n)``.

    Row layout follows the canonical coefficient ordering; per block, the
    entries sum to one for every point.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != basis.dimension:
        raise ValueError(f"points must have shape (n, {basis.dimension})")
    n = X.shape[0]
    out = np.empty((basis.size, n))
    for j, block in enumerate(basis.blocks):
        T = np.ones((n, 1))
        for var in block:
            B = basis_matrix_1d(basis.knots_for(var), X[:, var - 1])
            T = (T[:, :, None] * B[:, None, :]).reshape(n, -1)
        out[basis.block_slice(j)] = T.T
    return out


def knot_point(basis: BasisStructure, block_id: int, idx) -> np.ndarray:
    """Coordinates (within the block) of the knot where basis function
    ``idx`` (a 1-based multi-index) peaks at value one."""
    block = basis.blocks[block_id]
    idx = tuple(int(k) for k in idx)
    if len(idx) != len(block):
        raise ValueError("multi-index length must match block size")
    coords = []
    for var, k in zip(block, idx):
        s = basis.knots_for(var)
        if not 1 <= k <= s.size:
            raise ValueError(f"index {k} out of range 1..{s.size} for variable {var}")
        coords.append(s.knots[k - 1])
    return np.array(coords)


def block_knot_grid(basis: BasisStructure, block_id: int) -> np.ndarray:
    """All knot points of a block, shape ``(block_sizes[j], len(block))``,
    in canonical multi-index order."""
    block = basis.blocks[block_id]
    axes = [np.asarray(basis.knots_for(var).knots) for var in block]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


# ---------------------------------------------------------------------------
# Exact integrals
# ---------------------------------------------------------------------------

def gram_1d(s: Subdivision) -> np.ndarray:
    """Gram matrix of the hat basis: entries are exact integrals of products
    of two hats over [0, 1].  Symmetric tridiagonal, positive definite."""
    if not s:
        raise ValueError("subdivision is empty")
    t = np.asarray(s.knots)
    m = t.size
    diag = np.empty(m)
    diag[0] = (t[1] - t[0]) / 3.0
    diag[-1] = (t[-1] - t[-2]) / 3.0
    if m > 2:
        diag[1:-1] = (t[2:] - t[:-2]) / 3.0
    off = (t[1:] - t[:-1]) / 6.0
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def mass_1d(s: Subdivision) -> np.ndarray:
    """Integrals of the individual hats over [0, 1]; entries sum to one."""
    if not s:
        raise ValueError("subdivision is empty")
    t = np.asarray(s.knots)
    m = t.size
    e = np.empty(m)
    e[0] = (t[1] - t[0]) / 2.0
    e[-1] = (t[-1] - t[-2]) / 2.0
    if m > 2:
        e[1:-1] = (t[2:] - t[:-2]) / 2.0
    return e


def block_gram(basis: BasisStructure, block_id: int) -> sp.csr_matrix:
    """Sparse Gram matrix of one block's tensor basis (Kronecker product of
    the univariate tridiagonal Grams); at most ``3**len(block)`` nonzeros
    per row."""
    block = basis.blocks[block_id]
    mat = sp.csr_matrix(np.array([[1.0]]))
    for var in block:
        mat = sp.kron(mat, sp.csr_matrix(gram_1d(basis.knots_for(var))), format="csr")
    return mat


def block_mass(basis: BasisStructure, block_id: int) -> np.ndarray:
    """Integrals of one block's tensor basis functions over the cube."""
    block = basis.blocks[block_id]
    v = np.array([1.0])
    for var in block:
        v = np.kron(v, mass_1d(basis.knots_for(var)))
    return v


def mass_vector(basis: BasisStructure) -> np.ndarray:
    """Concatenated block mass vectors, aligned with the coefficient layout."""
    if basis.size == 0:
        return np.zeros(0)
    return np.concatenate([block_mass(basis, j) for j in range(len(basis.blocks))])


# ---------------------------------------------------------------------------
# Nesting and change of basis
# ---------------------------------------------------------------------------

def inclusion_check(old: BasisStructure, new: BasisStructure) -> bool:
    """True iff every function expressible in ``old`` is expressible in
    ``new``: each active old subdivision is a subset of the new one and each
    old block is contained in some new block."""
    if old.dimension != new.dimension:
        return False
    for i in old.partition.active_vars:
        if not new.knots_for(i).contains(old.knots_for(i)):
            return False
    for b in old.blocks:
        bs = set(b)
        if not any(bs <= set(nb) for nb in new.blocks):
            return False
    return True


def change_of_basis(old: BasisStructure, new: BasisStructure, coeffs) -> np.ndarray:
    """Re-express a coefficient vector on ``old`` in the nested basis ``new``.

    The returned vector represents the *same function* on the cube: the old
    expansion is interpolated at the new knots block by block, new blocks
    that absorb several old blocks accumulate their contributions, and
    freshly activated blocks contribute zero.
    """
    if not inclusion_check(old, new):
        raise StructureError("old structure is not nested in the new one")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (old.size,):
        raise ValueError(f"expected {old.size} coefficients, got {coeffs.shape}")
    out = np.zeros(new.size)
    for j, block in enumerate(old.blocks):
        jstar = next(k for k, nb in enumerate(new.blocks) if set(block) <= set(nb))
        new_block = new.blocks[jstar]
        T = coeffs[old.block_slice(j)].reshape(old.block_shapes[j])
        # Interpolate each old axis onto the refined knots.
        for ax, var in enumerate(block):
            W = basis_matrix_1d(old.knots_for(var), new.knots_for(var).knots)
            T = np.moveaxis(np.tensordot(T, W.T, axes=(ax, 0)), -1, ax)
        # Insert broadcast axes for the merged-in variables.
        expanded = T
        for pos, var in enumerate(new_block):
            if var not in block:
                expanded = np.expand_dims(expanded, axis=pos)
        expanded = np.broadcast_to(expanded, new.block_shapes[jstar])
        out[new.block_slice(jstar)] += expanded.ravel()
    return out
