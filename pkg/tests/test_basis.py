"""Hat bases: evaluation, exact integrals, nesting and change of basis."""

import numpy as np
import pytest
from scipy.integrate import quad

from bagp.basis import (BasisStructure, Subdivision, Subpartition,
                        basis_eval_1d, basis_matrix_1d, block_gram,
                        block_mass, change_of_basis, gram_1d, hat_eval,
                        inclusion_check, knot_point, mass_1d, mass_vector,
                        phi_eval, phi_matrix)
from bagp.exceptions import StructureError
from util import apply_random_move, random_structure, random_subdivision


# ---------------------------------------------------------------------------
# One-dimensional evaluation
# ---------------------------------------------------------------------------

def test_hat_eval_pointwise():
    assert hat_eval(0, 0.5, 1, 0.5) == 1.0
    assert hat_eval(0, 0.5, 1, 0.25) == 0.5
    assert hat_eval(0, 0.5, 1, 1.5) == 0.0
    assert hat_eval(0, 0.5, 1, -0.2) == 0.0
    with pytest.raises(ValueError):
        hat_eval(0.5, 0.5, 1, 0.3)


def test_hat_eval_continuity():
    xs = np.linspace(-0.5, 1.5, 2001)
    vals = hat_eval(0.1, 0.4, 0.9, xs)
    assert np.max(np.abs(np.diff(vals))) < 0.01


def test_basis_eval_1d_examples():
    np.testing.assert_allclose(basis_eval_1d(Subdivision((0, 0.5, 1)), 0.25),
                               [0.5, 0.5, 0.0])
    np.testing.assert_allclose(basis_eval_1d(Subdivision((0, 1)), 0.0),
                               [1.0, 0.0])
    # Direct hat_eval oracle on the six-knot subdivision.
    s = Subdivision((0, 0.1, 0.2, 0.5, 0.85, 1))
    np.testing.assert_allclose(basis_eval_1d(s, 0.35), [0, 0, 0.5, 0.5, 0, 0])
    t = (-1.0,) + s.knots + (2.0,)
    oracle = [hat_eval(t[k - 1], t[k], t[k + 1], 0.35) for k in range(1, 7)]
    np.testing.assert_allclose(basis_eval_1d(s, 0.35), oracle, atol=1e-15)


def test_basis_eval_1d_matches_hats_everywhere():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = random_subdivision(rng)
        t = (-1.0,) + s.knots + (2.0,)
        xs = rng.random(50)
        B = basis_matrix_1d(s, xs)
        for k in range(1, s.size + 1):
            np.testing.assert_allclose(B[:, k - 1],
                                       hat_eval(t[k - 1], t[k], t[k + 1], xs),
                                       atol=1e-14)


def test_basis_eval_partition_of_unity_and_sparsity():
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = random_subdivision(rng)
        B = basis_matrix_1d(s, rng.random(40))
        np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-12)
        assert np.all((B > 0).sum(axis=1) <= 2)


def test_basis_eval_domain_error():
    with pytest.raises(ValueError):
        basis_eval_1d(Subdivision((0, 1)), 1.2)
    with pytest.raises(ValueError):
        basis_eval_1d(Subdivision(), 0.5)


# ---------------------------------------------------------------------------
# Multi-dimensional evaluation
# ---------------------------------------------------------------------------

def test_phi_eval_single_block_affine():
    b = BasisStructure(Subpartition(((1,),), 2),
                       (Subdivision((0, 1)), Subdivision()))
    np.testing.assert_allclose(phi_eval(b, (0.3, 0.9)), [0.7, 0.3])


def test_phi_eval_tensor_block():
    b = BasisStructure(Subpartition(((1, 2),), 2),
                       (Subdivision((0, 1)), Subdivision((0, 1))))
    np.testing.assert_allclose(phi_eval(b, (0.5, 0.5)), [0.25] * 4)


def test_phi_eval_two_blocks():
    b = BasisStructure(Subpartition(((1,), (2,)), 2),
                       (Subdivision((0, 1)), Subdivision((0, 1))))
    np.testing.assert_allclose(phi_eval(b, (0.2, 0.8)), [0.8, 0.2, 0.2, 0.8])


def test_phi_partition_of_unity_per_block():
    rng = np.random.default_rng(2)
    for _ in range(10):
        basis = random_structure(rng)
        X = rng.random((30, basis.dimension))
        P = phi_matrix(basis, X)
        for j in range(len(basis.blocks)):
            np.testing.assert_allclose(P[basis.block_slice(j)].sum(axis=0),
                                       1.0, atol=1e-12)
            nnz = (P[basis.block_slice(j)] > 0).sum(axis=0)
            assert np.all(nnz <= 2 ** len(basis.blocks[j]))


def test_phi_interpolation_indicator():
    rng = np.random.default_rng(3)
    for _ in range(10):
        basis = random_structure(rng)
        for j in range(len(basis.blocks)):
            idxs = basis.multi_indices(j)
            pick = idxs[rng.integers(idxs.shape[0])]
            pt = np.full(basis.dimension, 0.5)
            coords = knot_point(basis, j, pick)
            for var, c in zip(basis.blocks[j], coords):
                pt[var - 1] = c
            vals = phi_eval(basis, pt)[basis.block_slice(j)]
            expected = np.zeros(basis.block_sizes[j])
            expected[np.ravel_multi_index(pick - 1, basis.block_shapes[j])] = 1.0
            np.testing.assert_allclose(vals, expected, atol=1e-12)


def test_knot_point_examples():
    b = BasisStructure(Subpartition(((2,),), 2),
                       (Subdivision(), Subdivision((0, 0.5, 1))))
    np.testing.assert_allclose(knot_point(b, 0, (2,)), [0.5])
    b2 = BasisStructure(Subpartition(((1, 3),), 3),
                        (Subdivision((0, 1)), Subdivision(),
                         Subdivision((0, 0.5, 1))))
    np.testing.assert_allclose(knot_point(b2, 0, (2, 3)), [1.0, 1.0])
    b3 = BasisStructure(Subpartition(((1,),), 1), (Subdivision((0, 1)),))
    np.testing.assert_allclose(knot_point(b3, 0, (1,)), [0.0])
    with pytest.raises(ValueError):
        knot_point(b3, 0, (3,))


# ---------------------------------------------------------------------------
# Exact integrals vs quadrature
# ---------------------------------------------------------------------------

def quad_hat_product(s, k, kp):
    """Adaptive quadrature of the product of two hats (1-based indices)."""
    t = (-1.0,) + s.knots + (2.0,)

    def f(x):
        return (hat_eval(t[k - 1], t[k], t[k + 1], x)
                * hat_eval(t[kp - 1], t[kp], t[kp + 1], x))

    val, _ = quad(f, 0.0, 1.0, points=list(s.knots), limit=200, epsabs=1e-13)
    return val


def test_gram_1d_examples():
    g = gram_1d(Subdivision((0, 0.5, 1)))
    np.testing.assert_allclose(np.diag(g), [1 / 6, 1 / 3, 1 / 6])
    assert g[0, 1] == pytest.approx(1 / 12)
    np.testing.assert_allclose(gram_1d(Subdivision((0, 1))),
                               [[1 / 3, 1 / 6], [1 / 6, 1 / 3]])


def test_mass_1d_examples():
    np.testing.assert_allclose(mass_1d(Subdivision((0, 0.5, 1))), [0.25, 0.5, 0.25])
    np.testing.assert_allclose(mass_1d(Subdivision((0, 1))), [0.5, 0.5])
    np.testing.assert_allclose(mass_1d(Subdivision((0, 0.1, 1))), [0.05, 0.5, 0.45])


def test_gram_and_mass_match_quadrature():
    rng = np.random.default_rng(4)
    for _ in range(100):
        s = random_subdivision(rng)
        g = gram_1d(s)
        e = mass_1d(s)
        m = s.size
        # Row sums of the Gram equal the mass entries (partition of unity).
        np.testing.assert_allclose(g.sum(axis=1), e, atol=1e-14)
        assert e.sum() == pytest.approx(1.0)
        for k in range(1, m + 1):
            for kp in range(k, m + 1):
                np.testing.assert_allclose(g[k - 1, kp - 1],
                                           quad_hat_product(s, k, kp),
                                           atol=1e-10)
        # Positive definiteness.
        assert np.linalg.eigvalsh(g).min() > 0


def test_block_gram_mass_tensorization():
    b = BasisStructure(Subpartition(((1, 2),), 2),
                       (Subdivision((0, 0.5, 1)), Subdivision((0, 1))))
    G = block_gram(b, 0).toarray()
    np.testing.assert_allclose(G, np.kron(gram_1d(b.subdivisions[0]),
                                          gram_1d(b.subdivisions[1])))
    E = block_mass(b, 0)
    np.testing.assert_allclose(E, np.kron(mass_1d(b.subdivisions[0]),
                                          mass_1d(b.subdivisions[1])))
    assert E.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(mass_vector(b), E)


# ---------------------------------------------------------------------------
# Inclusion and change of basis
# ---------------------------------------------------------------------------

def two_step_structures():
    old = BasisStructure(Subpartition(((1,),), 2),
                         (Subdivision((0, 1)), Subdivision()))
    new = BasisStructure(Subpartition(((1, 2),), 2),
                         (Subdivision((0, 0.5, 1)), Subdivision((0, 1))))
    return old, new


def test_inclusion_examples():
    old, new = two_step_structures()
    assert inclusion_check(old, new)
    # Lost knot.
    a = BasisStructure(Subpartition(((1,),), 1), (Subdivision((0, 0.3, 1)),))
    b = BasisStructure(Subpartition(((1,),), 1), (Subdivision((0, 0.5, 1)),))
    assert not inclusion_check(a, b)
    # Block split.
    joint = BasisStructure(Subpartition(((1, 2),), 2),
                           (Subdivision((0, 1)), Subdivision((0, 1))))
    split = BasisStructure(Subpartition(((1,), (2,)), 2),
                           (Subdivision((0, 1)), Subdivision((0, 1))))
    assert not inclusion_check(joint, split)
    assert inclusion_check(split, joint)


def test_change_of_basis_refine_stencil():
    old = BasisStructure(Subpartition(((1,),), 1), (Subdivision((0, 1)),))
    new = BasisStructure(Subpartition(((1,),), 1), (Subdivision((0, 0.5, 1)),))
    out = change_of_basis(old, new, [1.0, 3.0])
    np.testing.assert_allclose(out, [1.0, 2.0, 3.0])


def test_change_of_basis_activate_appends_zeros():
    old = BasisStructure(Subpartition(((1,),), 2),
                         (Subdivision((0, 1)), Subdivision()))
    new = BasisStructure(Subpartition(((1,), (2,)), 2),
                         (Subdivision((0, 1)), Subdivision((0, 1))))
    np.testing.assert_allclose(change_of_basis(old, new, [2.0, 5.0]),
                               [2.0, 5.0, 0.0, 0.0])


def test_change_of_basis_merge_outer_sum():
    old = BasisStructure(Subpartition(((1,), (2,)), 2),
                         (Subdivision((0, 1)), Subdivision((0, 1))))
    new = BasisStructure(Subpartition(((1, 2),), 2),
                         (Subdivision((0, 1)), Subdivision((0, 1))))
    a1, a2, b1, b2 = 1.0, 2.0, 10.0, 20.0
    out = change_of_basis(old, new, [a1, a2, b1, b2])
    np.testing.assert_allclose(out, [a1 + b1, a1 + b2, a2 + b1, a2 + b2])


def test_change_of_basis_requires_inclusion():
    old, new = two_step_structures()
    with pytest.raises(StructureError):
        change_of_basis(new, old, np.zeros(new.size))


def test_change_of_basis_exactness_over_random_move_chains():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        D = int(rng.integers(2, 5))
        old = random_structure(rng, D=D, m_max=3)
        new = old
        for _ in range(int(rng.integers(1, 4))):
            new = apply_random_move(rng, new)
        coeffs = rng.standard_normal(old.size)
        lifted = change_of_basis(old, new, coeffs)
        X = rng.random((200, D))
        before = phi_matrix(old, X).T @ coeffs
        after = phi_matrix(new, X).T @ lifted
        worst = max(worst, float(np.max(np.abs(before - after))))
    assert worst <= 1e-12


def test_inclusion_reflexive_and_transitive():
    rng = np.random.default_rng(6)
    for _ in range(20):
        b0 = random_structure(rng, D=4, m_max=3)
        assert inclusion_check(b0, b0)
        b1 = apply_random_move(rng, b0)
        b2 = apply_random_move(rng, b1)
        assert inclusion_check(b0, b1) and inclusion_check(b1, b2)
        assert inclusion_check(b0, b2)


# ---------------------------------------------------------------------------
# Structure invariants & serialization
# ---------------------------------------------------------------------------

def test_subdivision_validation():
    with pytest.raises(ValueError):
        Subdivision((0, 0.5))          # must end at 1
    with pytest.raises(ValueError):
        Subdivision((0.1, 1))          # must start at 0
    with pytest.raises(ValueError):
        Subdivision((0, 0.5, 0.5, 1))  # strictly increasing
    with pytest.raises(ValueError):
        Subdivision((0,))
    assert Subdivision().size == 0


def test_refine_rejects_near_duplicates():
    s = Subdivision((0, 0.5, 1))
    with pytest.raises(ValueError):
        s.refine(0.5 + 1e-10)
    assert s.refine(0.25).knots == (0, 0.25, 0.5, 1)


def test_subpartition_canonicalization():
    p = Subpartition(((4, 2), (3,)), 5)
    assert p.blocks == ((2, 4), (3,))
    with pytest.raises(ValueError):
        Subpartition(((1, 2), (2, 3)), 3)
    with pytest.raises(ValueError):
        Subpartition(((0,),), 3)


def test_basis_size_bookkeeping():
    b = BasisStructure(Subpartition(((1, 2), (3,)), 3),
                       (Subdivision((0, 0.5, 1)), Subdivision((0, 1)),
                        Subdivision((0, 0.25, 0.5, 1))))
    assert b.size == 3 * 2 + 4
    assert b.block_sizes == (6, 4)
    assert b.block_offsets == (0, 6)


def test_json_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(10):
        b = random_structure(rng)
        b2 = BasisStructure.from_json(b.to_json())
        assert b2 == b
