import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flatbundles import (
    Monodromy,
    complexify,
    direct_sum,
    dual,
    free_abelian,
    hom,
    invariant_subspaces,
    is_completely_reducible,
    is_irreducible,
    tensor,
    torus,
    wedge_power,
)
from flatbundles.errors import AlreadyComplex, FieldMismatch, GroupMismatch, NotInvariant, ValidationError
from flatbundles.flat_rep import FlatSubbundle, conjugation_invariant, quotient
from flatbundles.linalg import invariance_residual, same_span
from flatbundles.oracle import random_commuting

Z1 = free_abelian(1)
Z2 = free_abelian(2)


def test_relations_checked():
    A = np.array([[1.0, 1], [0, 1]])
    B = np.array([[1.0, 0], [1, 1]])
    with pytest.raises(ValidationError):
        Monodromy([A, B], Z2)
    with pytest.raises(ValidationError):
        Monodromy([np.zeros((2, 2))], Z1)
    with pytest.raises(ValidationError):
        Monodromy([np.eye(2)], Z2)


def test_manifold_group():
    m = torus(2, 8)
    v = Monodromy([np.diag([2.0, 3.0]), np.eye(2)], m)
    assert v.rank == 2 and v.field == "R"


def test_dual_involution():
    v = Monodromy([np.array([[2.0, 1], [0.5, 3]])], Z1)
    assert np.abs(dual(dual(v)).mats[0] - v.mats[0]).max() < 1e-12


def test_top_wedge_is_determinant():
    M = np.array([[2.0, 1], [0.5, 3]])
    v = Monodromy([M], Z1)
    assert wedge_power(v, 2).mats[0][0, 0] == pytest.approx(np.linalg.det(M))


def test_tensor_by_hand():
    a = Monodromy([np.diag([2.0, 3.0])], Z1)
    b = Monodromy([np.array([[5.0]])], Z1)
    assert np.allclose(tensor(a, b).mats[0], np.diag([10.0, 15.0]))


def test_rank_arithmetic():
    a = Monodromy([np.diag([2.0, 3.0, 5.0])], Z1)
    b = Monodromy([np.diag([1.0, 7.0])], Z1)
    assert tensor(a, b).rank == 6
    assert hom(a, b).rank == 6
    assert wedge_power(a, 2).rank == 3
    assert direct_sum(a, b).rank == 5
    s = FlatSubbundle(a, np.eye(3)[:, :1])
    assert quotient(a, s).rank == 2


def test_field_and_group_mismatch():
    a = Monodromy([np.diag([2.0, 3.0])], Z1)
    c = Monodromy([np.diag([2.0, 3.0]).astype(complex)], Z1, "C")
    with pytest.raises(FieldMismatch):
        tensor(a, c)
    with pytest.raises(GroupMismatch):
        tensor(a, Monodromy([np.diag([2.0, 3.0])], free_abelian(1)))


def test_quotient_needs_invariant_subspace():
    a = Monodromy([np.array([[1.0, 1], [0, 1]])], Z1)
    with pytest.raises(NotInvariant):
        quotient(a, np.array([[0.0], [1.0]]))


def test_complexify():
    r = Monodromy([np.array([[2.0]])], Z1)
    c = complexify(r)
    assert c.field == "C" and c.mats[0][0, 0] == 2
    with pytest.raises(AlreadyComplex):
        complexify(c)


def test_rotation_eigenlines_swapped_by_conjugation():
    R = np.array([[0.0, -1], [1, 0]])
    c = complexify(Monodromy([R], Z1))
    lines = invariant_subspaces(c, 1).isolated
    assert len(lines) == 2
    for s in lines:
        assert not conjugation_invariant(s.basis)
    assert same_span(lines[0].basis.conj(), lines[1].basis)


def test_real_rotation_irreducible():
    assert is_irreducible(Monodromy([np.array([[0.0, -1], [1, 0]])], Z1))


def test_jordan_block_single_line():
    v = Monodromy([np.array([[1.0, 1], [0, 1]])], Z1)
    fam = invariant_subspaces(v, 1)
    assert len(fam.isolated) == 1 and not fam.families
    assert same_span(fam.isolated[0].basis, np.array([[1.0], [0.0]]))
    assert not is_irreducible(v)
    assert not is_completely_reducible(v)[0]


def test_identity_gives_a_family():
    v = Monodromy([np.eye(2)], Z1)
    fam = invariant_subspaces(v, 1)
    assert fam.families and 1 in fam.families[0].dims
    assert fam.families[0].template.shape[1] == 2


def test_three_coordinate_planes():
    v = Monodromy([np.diag([2.0, 3.0, 5.0])], Z1)
    planes = invariant_subspaces(v, 2).isolated
    assert len(planes) == 3
    for I in ([0, 1], [0, 2], [1, 2]):
        assert any(same_span(s.basis, np.eye(3)[:, I]) for s in planes)


def test_diag_completely_reducible():
    v = Monodromy([np.diag([2.0, 3.0])], Z1)
    ok, parts = is_completely_reducible(v)
    assert ok and len(parts) == 2
    assert is_irreducible(Monodromy([np.array([[4.0]])], Z1))


@given(st.integers(0, 2**31 - 1))
def test_reported_subspaces_are_invariant(seed):
    rng = np.random.default_rng(seed)
    v, _ = random_commuting(rng)
    for B in v.lattice.members:
        assert invariance_residual(v.mats, B) <= 1e-9


@given(st.integers(0, 2**31 - 1), st.integers(2, 4))
def test_distinct_eigenvalues_give_binomial_counts(seed, r):
    rng = np.random.default_rng(seed)
    lam = rng.uniform(0.5, 3.0, r) * np.exp(1j * rng.uniform(0, 2 * np.pi, r))
    G = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    v = Monodromy([G @ np.diag(lam) @ np.linalg.inv(G)], Z1, "C")
    from math import comb

    for k in range(1, r):
        assert len(invariant_subspaces(v, k).isolated) == comb(r, k)


@given(st.integers(0, 2**31 - 1))
def test_constructions_commute_with_complexify(seed):
    rng = np.random.default_rng(seed)
    a = Monodromy([rng.standard_normal((2, 2)) + 3 * np.eye(2)], Z1)
    b = Monodromy([rng.standard_normal((2, 2)) + 3 * np.eye(2)], Z1)
    for op in (lambda x, y: tensor(x, y), lambda x, y: hom(x, y), lambda x, y: wedge_power(x, 2),
               lambda x, y: dual(x)):
        lhs = complexify(op(a, b)).mats[0]
        rhs = op(complexify(a), complexify(b)).mats[0]
        assert np.abs(lhs - rhs).max() < 1e-12


@given(st.integers(0, 2**31 - 1))
def test_quotient_rank_identity(seed):
    rng = np.random.default_rng(seed)
    v, _ = random_commuting(rng)
    for B in v.lattice.members:
        if B.shape[1] < v.rank:
            assert quotient(v, B).rank + B.shape[1] == v.rank
