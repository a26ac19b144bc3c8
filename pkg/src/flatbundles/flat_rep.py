"""Flat bundles as monodromy representations, and their invariant subspaces."""

from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
import scipy.linalg as sla

from .errors import (
    AlreadyComplex,
    FieldMismatch,
    GroupMismatch,
    NotInvariant,
    RankOutOfRange,
    ValidationError,
)
from .linalg import (
    complement,
    compound,
    contains,
    invariance_residual,
    orth,
    real_basis_if_conjugation_invariant,
    same_span,
    span_intersection,
    span_sum,
)

INVARIANCE_TOL = 1e-9
MAX_RANK = 8


class AbstractGroup:
    """A finitely presented group not tied to a manifold (synthetic mode)."""

    def __init__(self, ngens, relators=(), name=None):
        self.ngens = int(ngens)
        self.relators = [list(w) for w in relators]
        self.name = name or f"F{ngens}"

    def __repr__(self):
        return f"AbstractGroup({self.name})"


def free_abelian(k):
    rel = [[i, j, -i, -j] for i in range(1, k + 1) for j in range(i + 1, k + 1)]
    return AbstractGroup(k, rel, name=f"Z^{k}")


def _ngens(group):
    return group.ngens if isinstance(group, AbstractGroup) else len(group.generators)


class Monodromy:
    """A flat bundle encoded by one invertible matrix per group generator.

    Parameters
    ----------
    mats : sequence of (r, r) arrays
        ``ρ(γ_i)`` for the group's generators, in order.
    group : AffineManifold or AbstractGroup
    field : {"R", "C"}, optional
        Inferred from the matrices' dtype when omitted.
    """

    def __init__(self, mats, group, field=None, real_structure=False, validate=True):
        mats = [np.atleast_2d(np.asarray(M)) for M in mats]
        if field is None:
            field = "C" if any(np.iscomplexobj(M) for M in mats) else "R"
        dtype = complex if field == "C" else float
        if field == "R" and any(np.iscomplexobj(M) and np.abs(M.imag).max() > 0 for M in mats):
            raise FieldMismatch("complex entries in a real bundle")
        self.mats = tuple(np.array(M.real if field == "R" else M, dtype=dtype) for M in mats)
        self.group = group
        self.field = field
        # set when obtained by complexifying a real bundle
        self.real_structure = real_structure
        if len(self.mats) != _ngens(group):
            raise ValidationError(
                f"{len(self.mats)} generator matrices for a group with {_ngens(group)} generators"
            )
        if validate:
            self.validate()

    @property
    def rank(self):
        return self.mats[0].shape[0]

    def __repr__(self):
        return f"Monodromy(rank={self.rank}, field={self.field}, group={self.group!r})"

    def word(self, w):
        R = np.eye(self.rank, dtype=self.mats[0].dtype)
        for l in w:
            M = self.mats[abs(l) - 1]
            R = R @ (M if l > 0 else np.linalg.inv(M))
        return R

    def validate(self, tol=1e-10):
        for M in self.mats:
            if M.shape != (self.rank, self.rank):
                raise ValidationError("generator matrices must be square and of equal size")
            if abs(np.linalg.det(M)) <= 1e-12:
                raise ValidationError("generator matrix is not invertible")
        res = self.relation_residual()
        if res > tol:
            raise ValidationError(f"group relations violated (residual {res:.2e})")

    def relation_residual(self):
        out = 0.0
        for w in self.group.relators:
            scale = max(1.0, np.prod([np.linalg.norm(self.mats[abs(l) - 1], 2) for l in w]))
            out = max(out, float(np.abs(self.word(w) - np.eye(self.rank)).max()) / scale)
        return out

    def commuting(self, tol=1e-10):
        for i, A in enumerate(self.mats):
            for B in self.mats[i + 1:]:
                s = max(1.0, np.linalg.norm(A) * np.linalg.norm(B))
                if np.linalg.norm(A @ B - B @ A) > tol * s:
                    return False
        return True

    def is_unitary(self, tol=1e-10):
        return all(
            np.allclose(M.conj().T @ M, np.eye(self.rank), atol=tol) for M in self.mats
        )

    def conjugate(self, G):
        Gi = np.linalg.inv(G)
        field = "C" if np.iscomplexobj(G) else self.field
        return Monodromy([G @ M @ Gi for M in self.mats], self.group, field, self.real_structure)

    @cached_property
    def lattice(self):
        return submodule_lattice(self)


@dataclass(frozen=True)
class FlatSubbundle:
    """A flat subbundle given by an orthonormal basis of its fiber at the basepoint."""

    parent: Monodromy
    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        B = orth(np.asarray(self.basis))
        object.__setattr__(self, "basis", B)
        k = B.shape[1]
        if not 0 < k <= self.parent.rank:
            raise RankOutOfRange(f"subbundle rank {k} outside (0, {self.parent.rank}]")
        res = invariance_residual(self.parent.mats, B)
        if res > INVARIANCE_TOL * 10:
            raise NotInvariant(f"subspace is not ρ-invariant (residual {res:.2e})")

    @property
    def rank(self):
        return self.basis.shape[1]

    def residual(self):
        return invariance_residual(self.parent.mats, self.basis)

    def monodromy(self):
        return restrict(self.parent, self.basis)


def _check_compatible(a, b):
    if a.field != b.field:
        raise FieldMismatch(f"{a.field} vs {b.field}")
    if a.group is not b.group:
        raise GroupMismatch("bundles over different groups")


def tensor(a, b):
    _check_compatible(a, b)
    return Monodromy([np.kron(A, B) for A, B in zip(a.mats, b.mats)], a.group, a.field)


def dual(a):
    return Monodromy([np.linalg.inv(A).T for A in a.mats], a.group, a.field, a.real_structure)


def wedge_power(a, j):
    if not 0 <= j <= a.rank:
        raise RankOutOfRange(f"exterior power {j} of a rank {a.rank} bundle")
    return Monodromy([compound(A, j) for A in a.mats], a.group, a.field, a.real_structure)


def hom(a, b):
    """Hom(a, b) = a* ⊗ b."""
    return tensor(dual(a), b)


def direct_sum(a, b):
    _check_compatible(a, b)
    return Monodromy([sla.block_diag(A, B) for A, B in zip(a.mats, b.mats)], a.group, a.field)


def restrict(a, B):
    B = orth(B)
    return Monodromy([B.conj().T @ M @ B for M in a.mats], a.group, a.field, validate=False)


def quotient(a, s):
    """Induced monodromy on V / F, realized on the orthogonal complement of F."""
    B = s.basis if isinstance(s, FlatSubbundle) else orth(s)
    if invariance_residual(a.mats, B) > INVARIANCE_TOL * 10:
        raise NotInvariant("cannot take the quotient by a non-invariant subspace")
    Q = complement(B)
    return Monodromy([Q.conj().T @ M @ Q for M in a.mats], a.group, a.field, validate=False)


def complexify(a):
    if a.field == "C":
        raise AlreadyComplex("bundle is already complex")
    return Monodromy([M.astype(complex) for M in a.mats], a.group, "C", real_structure=True)


def conjugation_invariant(B, tol=1e-7):
    """Whether span(B) is preserved by the conjugation of V ⊗ C."""
    return contains(B, B.conj(), tol)


# --------------------------------------------------------------------------
# invariant subspaces


@dataclass
class Family:
    """A positive-dimensional family of invariant subspaces.

    Members are spun up from vectors of ``template``; every member in the
    family has one of the dimensions in ``dims``.
    """

    template: np.ndarray
    dims: list
    parent: Monodromy = field(repr=False, default=None)

    def sample(self, rng):
        v = self.template @ (rng.standard_normal(self.template.shape[1]) + 0j)
        return spin(self.parent.mats, v[:, None], real=self.parent.field == "R")


@dataclass
class SubspaceFamily:
    isolated: list
    families: list
    search: str  # "complete" or "heuristic"


@dataclass
class Lattice:
    members: list  # orthonormal bases of invariant subspaces, including V
    families: list
    search: str

    def of_rank(self, k):
        return [B for B in self.members if B.shape[1] == k]


def spin(mats, V, real=False, tol=1e-10):
    """Smallest invariant subspace containing the columns of V."""
    mats = list(mats) + [np.linalg.inv(M) for M in mats]
    B = orth(V, tol)
    while True:
        C = orth(np.hstack([B] + [M @ B for M in mats]), 1e-9)
        if C.shape[1] == B.shape[1]:
            break
        B = C
    if real:
        B = orth(np.hstack([B.real, B.imag]), 1e-9) if np.iscomplexobj(B) else B
    return B


def _key(B):
    P = (B @ B.conj().T).astype(complex)
    return (B.shape[1], (np.round(P, 6) + 0.0).tobytes())


def _algebra_elements(mats, count, rng):
    r = mats[0].shape[0]
    words = [np.eye(r)] + list(mats) + [np.linalg.inv(M) for M in mats]
    words += [A @ B for A in mats for B in mats]
    out = []
    for _ in range(count):
        c = rng.standard_normal(len(words)) + 1j * rng.standard_normal(len(words))
        out.append(sum(ci * W for ci, W in zip(c, words)))
    return out


def _merge_tol(m):
    # a defective eigenvalue of multiplicity m splits by about eps^(1/m)
    return min(0.05, 10 * 1e-12 ** (1.0 / m))


def cluster_eigenvalues(w):
    """Group eigenvalues into [mean, multiplicity] clusters.

    Larger clusters are tried first: m eigenvalues form a cluster when they
    all lie within the multiplicity-m splitting radius of their mean.
    """
    w = list(np.asarray(w, dtype=complex))
    scale = max(1.0, float(np.abs(w).max())) if w else 1.0
    out = []
    while w:
        found = None
        for m in range(len(w), 0, -1):
            rad = _merge_tol(m) * scale
            for c in w:
                near = sorted(range(len(w)), key=lambda i: abs(w[i] - c))[:m]
                mu = np.mean([w[i] for i in near])
                if all(abs(w[i] - mu) < rad for i in near):
                    found = near
                    break
            if found:
                break
        out.append([complex(np.mean([w[i] for i in found])), len(found)])
        w = [x for i, x in enumerate(w) if i not in found]
    return out


def _eig_clusters(T):
    return cluster_eigenvalues(np.linalg.eigvals(T))


def _canonical_vectors(K):
    """A basis of span(K) that does not depend on the basis K is given in:
    the pivot columns of the orthogonal projector."""
    P = K @ K.conj().T
    _, _, piv = sla.qr(P, pivoting=True)
    out = []
    for i in piv[: K.shape[1]]:
        c = P[:, i:i + 1]
        out.append(c / np.linalg.norm(c))
    return out


def _kernel_seeds(T, rng, extra=2):
    """Basis vectors and random members of the kernels of (T - λ)^j."""
    r = T.shape[0]
    basis_seeds, random_seeds = [], []
    for lam, mult in _eig_clusters(T):
        S = T - lam * np.eye(r)
        P = np.eye(r, dtype=complex)
        for j in range(1, mult + 1):
            P = P @ S
            if j == mult:
                # the generalized eigenspace has dimension exactly mult
                K = np.linalg.svd(P)[2].conj().T[:, r - mult:]
            else:
                K = sla.null_space(P, rcond=1e-7)
            if K.shape[1] == 0:
                continue
            basis_seeds.extend(_canonical_vectors(K))
            if K.shape[1] > 1:
                for _ in range(extra):
                    c = rng.standard_normal(K.shape[1]) + 1j * rng.standard_normal(K.shape[1])
                    random_seeds.append((K, (K @ c)[:, None]))
    return basis_seeds, random_seeds


def submodule_lattice(a, seed=0, n_elements=None, max_members=600, rounds=2):
    """Invariant subspaces of a monodromy representation.

    Seeds are vectors in the generalized kernels of random elements of the
    algebra spanned by the generators (and of the dual representation).
    Cyclic subspaces spun from the seeds are closed under sum and
    intersection. Random seeds that spin to subspaces outside that closure
    reveal positive-dimensional families.
    """
    r = a.rank
    if r > MAX_RANK:
        raise RankOutOfRange(f"rank {r} exceeds {MAX_RANK}")
    rng = np.random.default_rng(seed)
    mats = [M.astype(complex) for M in a.mats]
    dmats = [np.linalg.inv(M).conj().T for M in mats]
    commuting = a.commuting()
    if n_elements is None:
        n_elements = 4 if commuting else (64 if r <= 4 else 16)
    search = "complete" if (commuting or r <= 4) else "heuristic"

    found = {}

    def add(B):
        if B.shape[1] == 0:
            return False
        k = _key(B)
        if k in found:
            return False
        found[k] = B
        return True

    add(np.eye(r, dtype=complex))
    fam_seeds = []
    for T, DT in zip(_algebra_elements(mats, n_elements, rng), _algebra_elements(dmats, n_elements, rng)):
        bs, rs = _kernel_seeds(T, rng)
        for v in bs:
            add(spin(mats, v))
        fam_seeds.extend(rs)
        # annihilators of cyclic submodules of the dual
        dbs, _ = _kernel_seeds(DT, rng, extra=0)
        for v in dbs:
            U = spin(dmats, v)
            if U.shape[1] < r:
                add(complement(U))
    if not _close(found, add, max_members, rounds):
        search = "heuristic"

    families = []
    fam_members = []
    for K, v in fam_seeds:
        B = spin(mats, v)
        if _key(B) not in found and not any(same_span(B, F) for F in fam_members):
            fam_members.append(B)
            fam = next((f for f in families if same_span(f.template, K)), None)
            if fam is None:
                families.append(Family(K, [B.shape[1]], a))
            elif B.shape[1] not in fam.dims:
                fam.dims.append(B.shape[1])
    for B in fam_members:
        add(B)

    members = list(found.values())
    if a.field == "R":
        real = []
        for B in members:
            R = real_basis_if_conjugation_invariant(B)
            if R is not None:
                real.append(R)
        uniq = {}
        for R in real:
            uniq.setdefault(_key(R), R)
        members = list(uniq.values())
        families = [f for f in families if real_basis_if_conjugation_invariant(f.template) is not None]
    else:
        members = [B.astype(complex) for B in members]
    members.sort(key=lambda B: B.shape[1])
    return Lattice(members, families, search)


def _close(found, add, max_members, rounds):
    """Close under pairwise sums and intersections for a bounded number of
    rounds. Returns False if the member cap was hit."""
    frontier = list(found.values())
    for _ in range(rounds):
        if not frontier:
            break
        current = list(found.values())
        new = []
        for A in frontier:
            for B in current:
                if contains(A, B) or contains(B, A):
                    continue
                for C in (span_sum(A, B), span_intersection(A, B)):
                    if add(C):
                        new.append(C)
                if len(found) > max_members:
                    return False
        frontier = new
    return True


def invariant_subspaces(a, k, seed=0):
    """Invariant k-dimensional subspaces: isolated ones plus families."""
    if not 1 <= k <= a.rank:
        raise RankOutOfRange(f"k={k} outside [1, {a.rank}]")
    lat = a.lattice if seed == 0 else submodule_lattice(a, seed)
    isolated = [FlatSubbundle(a, B) for B in lat.of_rank(k)]
    families = [f for f in lat.families if k in f.dims]
    fam_templates = [f.template for f in families]
    # drop representatives that belong to a reported family
    if families:
        isolated = [
            s for s in isolated
            if not any(contains(T, s.basis) and s.rank < T.shape[1] for T in fam_templates)
        ] or isolated
    return SubspaceFamily(isolated, families, lat.search)


def minimal_submodules(a):
    lat = a.lattice
    props = lat.members
    return [B for B in props if not any(C.shape[1] < B.shape[1] and contains(B, C) for C in props)]


def is_irreducible(a):
    return a.rank == 1 or all(B.shape[1] == a.rank for B in a.lattice.members)


def is_completely_reducible(a):
    """Return (flag, decomposition) where the decomposition is a list of
    orthonormal bases of irreducible invariant summands when flag is True."""
    parts = []
    total = np.zeros((a.rank, 0), dtype=a.lattice.members[0].dtype)
    for B in minimal_submodules(a):
        if total.shape[1] == 0 or span_sum(total, B).shape[1] == total.shape[1] + B.shape[1]:
            parts.append(B)
            total = span_sum(total, B) if total.shape[1] else B
        if total.shape[1] == a.rank:
            return True, parts
    return False, None


def expected_commuting_count(r, k):
    return comb(r, k)
