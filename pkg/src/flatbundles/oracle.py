"""Independent spectral oracle for commuting monodromy over ℂ.

For commuting generators every invariant subspace splits along the joint
generalized eigenspaces, so with an abstract degree functional the slope of
a subbundle only depends on how much of each joint eigenspace it contains.
The oracle builds the operator ``A = Σ_i w_i log|ρ_i|_ss`` from spectral
projectors; its eigenspaces are the graded pieces of the HN filtration.
None of this touches the invariant-subspace lattice used by the main code.
"""

import numpy as np
import scipy.linalg as sla

from .errors import OracleInfeasible
from .flat_rep import Monodromy, cluster_eigenvalues, free_abelian
from .linalg import orth, span_intersection, span_sum

SLOPE_TOL = 1e-6


def _clusters(w):
    # defective eigenvalues of multiplicity m scatter by about eps^(1/m)
    return [(lam, m) for lam, m in cluster_eigenvalues(w)]


def _gen_eigenspace(M, lam, mult):
    r = M.shape[0]
    S = np.linalg.matrix_power(M - lam * np.eye(r), mult)
    _, _, vh = np.linalg.svd(S)
    return vh.conj().T[:, r - mult:]


def spectral_projectors(M):
    """[(eigenvalue, projector onto its generalized eigenspace along the others)]."""
    out = []
    for lam, mult in _clusters(np.linalg.eigvals(M)):
        V = _gen_eigenspace(M, lam, mult)
        W = _gen_eigenspace(M.conj().T, np.conj(lam), mult)
        out.append((lam, V @ np.linalg.solve(W.conj().T @ V, W.conj().T)))
    return out


def _check(v, weights):
    if v.field != "C" and any(np.iscomplexobj(M) and np.abs(M.imag).max() > 0 for M in v.mats):
        raise OracleInfeasible("real field with complex data")
    if not v.commuting(1e-8):
        raise OracleInfeasible("oracle needs commuting generators")
    if len(weights) != len(v.mats):
        raise OracleInfeasible("weights must align with the generators")


def slope_operator(v, weights):
    r = v.rank
    A = np.zeros((r, r), dtype=complex)
    for w, M in zip(weights, v.mats):
        for lam, P in spectral_projectors(np.asarray(M, dtype=complex)):
            A += w * np.log(abs(lam)) * P
    return A


def oracle_hn(v, weights):
    """(ranks, bases, slopes) of the HN filtration."""
    _check(v, weights)
    A = slope_operator(v, weights)
    s, X = np.linalg.eig(A)
    s = s.real
    levels = []
    for x in sorted(s, reverse=True):
        if not levels or levels[-1] - x > SLOPE_TOL * max(1.0, abs(x)):
            levels.append(x)
    bases, slopes = [], []
    for lev in levels:
        sel = s >= lev - SLOPE_TOL * max(1.0, abs(lev))
        bases.append(orth(X[:, sel], 1e-8))
        slopes.append(float(np.mean(s[np.abs(s - lev) <= SLOPE_TOL * max(1.0, abs(lev))])))
    return [B.shape[1] for B in bases], bases, slopes


def _eigenspace(M, lam, tol=1e-6):
    r = M.shape[0]
    _, sv, vh = np.linalg.svd(M - lam * np.eye(r))
    k = int(np.sum(sv <= tol * max(1.0, sv[0])))
    return vh.conj().T[:, r - k:]


def oracle_socle(v):
    """Span of all joint eigenvectors (the sum of the simple submodules)."""
    if not v.commuting(1e-8):
        raise OracleInfeasible("oracle needs commuting generators")
    r = v.rank
    spaces = [np.eye(r, dtype=complex)]
    for M in v.mats:
        M = np.asarray(M, dtype=complex)
        nxt = []
        for lam, _ in _clusters(np.linalg.eigvals(M)):
            E = _eigenspace(M, lam)
            for S in spaces:
                I = span_intersection(S, E, tol=1e-6)
                if I.shape[1]:
                    nxt.append(I)
        spaces = nxt
    return span_sum(*spaces)


def oracle_classify(v, weights):
    ranks, _, _ = oracle_hn(v, weights)
    if len(ranks) > 1:
        return "Unstable"
    if v.rank == 1:
        return "Stable"
    return "PolystableNotStable" if oracle_socle(v).shape[1] == v.rank else "SemistableNotPolystable"


# --------------------------------------------------------------------------
# random commuting scenarios


def random_commuting(rng, rank=None, ngens=None, levels=(-1.0, 0.0, 1.0, 2.0), unipotent_prob=0.5,
                     cond_max=20.0):
    """Random commuting monodromy over free_abelian(ngens) with ties in slope.

    Blocks of a random partition of the rank carry one character each; a
    block may get a common nilpotent part. The result is conjugated by a
    random matrix of bounded condition number.
    """
    rank = rank or int(rng.integers(1, 5))
    ngens = ngens or int(rng.integers(1, 3))
    sizes = []
    left = rank
    while left:
        s = int(rng.integers(1, left + 1))
        sizes.append(s)
        left -= s
    mats = [[] for _ in range(ngens)]
    for s in sizes:
        Nil = np.eye(s, k=1) if rng.random() < unipotent_prob else np.zeros((s, s))
        for i in range(ngens):
            mod = np.exp(rng.choice(levels))
            lam = mod * np.exp(1j * rng.uniform(0, 2 * np.pi))
            a = rng.standard_normal() if i == 0 else rng.standard_normal() * rng.integers(0, 2)
            mats[i].append(lam * (np.eye(s) + a * Nil + 0.3 * rng.standard_normal() * Nil @ Nil))
    while True:
        G = rng.standard_normal((rank, rank)) + 1j * rng.standard_normal((rank, rank))
        if np.linalg.cond(G) < cond_max:
            break
    Gi = np.linalg.inv(G)
    blocks = [G @ sla.block_diag(*m) @ Gi for m in mats]
    weights = rng.standard_normal(ngens)
    return Monodromy(blocks, free_abelian(ngens), "C"), weights
