"""Small dense linear-algebra helpers used across the package."""

from functools import lru_cache
from itertools import combinations

import numpy as np
import scipy.linalg as sla


@lru_cache(maxsize=None)
def combos(n, p):
    """Strictly increasing multi-indices of length ``p`` drawn from ``range(n)``."""
    return tuple(combinations(range(n), p))


@lru_cache(maxsize=None)
def combo_index(n, p):
    return {c: i for i, c in enumerate(combos(n, p))}


def perm_sign(seq):
    """Sign of the permutation sorting ``seq`` (entries assumed distinct)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def compound(M, p):
    """p-th compound matrix: the action of ``M`` on the p-th exterior power.

    Rows and columns are indexed by ``combos(n, p)``. ``compound(M, 0)`` is
    the 1x1 identity and ``compound(M, n)`` is ``[[det M]]``.
    """
    M = np.asarray(M)
    n = M.shape[0]
    cs = combos(n, p)
    out = np.empty((len(cs), len(cs)), dtype=np.result_type(M, float))
    if p == 0:
        out[0, 0] = 1.0
        return out
    for a, I in enumerate(cs):
        for b, J in enumerate(cs):
            out[a, b] = np.linalg.det(M[np.ix_(I, J)])
    return out


def orth(B, tol=1e-10):
    """Orthonormal basis (columns) for the column span of ``B``."""
    B = np.atleast_2d(np.asarray(B))
    if B.size == 0 or B.shape[1] == 0:
        return np.zeros((B.shape[0], 0), dtype=B.dtype)
    # keep orthonormal input as is so frames stay stable under repeated calls
    if B.shape[1] <= B.shape[0] and np.allclose(B.conj().T @ B, np.eye(B.shape[1]), atol=1e-13, rtol=0):
        return B
    u, s, _ = np.linalg.svd(B, full_matrices=False)
    if s.size == 0:
        return u[:, :0]
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return u[:, :rank]


def projector(B):
    return B @ B.conj().T


def complement(B):
    """Orthonormal basis of the orthogonal complement of span(B)."""
    r = B.shape[0]
    if B.shape[1] == 0:
        return np.eye(r, dtype=B.dtype)
    return sla.null_space(B.conj().T)


def span_sum(*bases):
    bases = [b for b in bases if b.shape[1] > 0]
    if not bases:
        raise ValueError("empty sum")
    return orth(np.hstack(bases))


def span_intersection(A, B, tol=1e-9):
    """Orthonormal basis of span(A) ∩ span(B) for orthonormal A, B."""
    r = A.shape[0]
    if A.shape[1] == 0 or B.shape[1] == 0:
        return np.zeros((r, 0), dtype=np.result_type(A, B))
    # x in both spans iff (I - P_B) x = 0 for x = A c
    PB = projector(B)
    M = (np.eye(r) - PB) @ A
    u, s, vh = np.linalg.svd(M)
    null = vh.conj().T[:, np.concatenate([s, np.zeros(A.shape[1] - s.size)]) < tol]
    return orth(A @ null) if null.shape[1] else np.zeros((r, 0), dtype=A.dtype)


def invariance_residual(mats, B):
    """max_i ||(I - P) M_i P|| for the orthogonal projector P onto span(B)."""
    if B.shape[1] == 0:
        return 0.0
    P = projector(B)
    Q = np.eye(P.shape[0]) - P
    return max(float(np.linalg.norm(Q @ M @ P, 2)) for M in mats) if mats else 0.0


def principal_angles(A, B):
    if A.shape[1] != B.shape[1]:
        return np.array([np.pi / 2])
    if A.shape[1] == 0:
        return np.zeros(0)
    return sla.subspace_angles(A, B)


def same_span(A, B, tol=1e-7):
    return A.shape[1] == B.shape[1] and (
        A.shape[1] == 0 or float(np.max(principal_angles(A, B))) < tol
    )


def contains(A, B, tol=1e-7):
    """True if span(B) ⊂ span(A)."""
    if B.shape[1] == 0:
        return True
    if A.shape[1] < B.shape[1]:
        return False
    return float(np.linalg.norm(B - projector(A) @ B)) < tol


def real_basis_if_conjugation_invariant(B, tol=1e-7):
    """Return a real orthonormal basis of span(B) if the span is closed under
    complex conjugation, else None."""
    Bc = B.conj()
    if not contains(B, Bc, tol):
        return None
    R = orth(np.hstack([B.real, B.imag]))
    if R.shape[1] != B.shape[1]:
        return None
    return R


# batched Hermitian matrix functions ---------------------------------------


def herm(X):
    return 0.5 * (X + np.conj(np.swapaxes(X, -1, -2)))


def hfunc(X, f):
    """Apply a scalar function to a batch of Hermitian matrices."""
    w, V = np.linalg.eigh(X)
    return (V * f(w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def hsqrt(X):
    return hfunc(X, np.sqrt)


def hexp(X):
    return hfunc(X, np.exp)


def hlog(X):
    return hfunc(X, np.log)


def dagger(X):
    return np.conj(np.swapaxes(X, -1, -2))
