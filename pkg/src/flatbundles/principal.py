"""Flat principal bundles for classical matrix groups.

Stability questions are answered through the adjoint bundle ``ad(E_G)``:
semistability and polystability of ``E_G`` are those of ``ad(E_G)``, and
the Harder-Narasimhan and socle reductions are read off as middle terms of
the corresponding filtrations of ``ad(E_G)``. Each middle term comes with
three certificates: monodromy invariance, closure under the bracket, and a
Borel subalgebra found inside it.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlreadyComplex,
    CertificateFail,
    NotConverged,
    NotPolystable,
    NotSemistable,
    OddityViolation,
    RankOutOfRange,
    ValidationError,
)
from .flat_rep import MAX_RANK, Monodromy, complexify, conjugation_invariant
from .linalg import invariance_residual, orth

MEMBERSHIP_TOL = 1e-10
CERT_TOL = 1e-9
COMPLEX_FAMILIES = ("GL", "SL", "SO", "Sp")
REAL_FAMILIES = ("GL", "SL")


def _E(r, i, j):
    M = np.zeros((r, r))
    M[i, j] = 1.0
    return M


def _symplectic_form(r):
    m = r // 2
    J = np.zeros((r, r))
    J[:m, m:] = np.eye(m)
    J[m:, :m] = -np.eye(m)
    return J


def _algebra_basis(family, r):
    up = [_E(r, i, j) for i in range(r) for j in range(i + 1, r)]
    lo = [_E(r, j, i) for i in range(r) for j in range(i + 1, r)]
    if family == "GL":
        return up + [_E(r, i, i) for i in range(r)] + lo
    if family == "SL":
        return up + [_E(r, i, i) - _E(r, i + 1, i + 1) for i in range(r - 1)] + lo
    if family == "SO":
        return [_E(r, i, j) - _E(r, j, i) for i in range(r) for j in range(i + 1, r)]
    # sp(2m): [[A, B], [C, -A^T]] with B, C symmetric
    m = r // 2
    out = []
    for i in range(m):
        for j in range(m):
            X = np.zeros((r, r))
            X[i, j] = 1.0
            X[m + j, m + i] = -1.0
            out.append(X)
    for i in range(m):
        for j in range(i, m):
            X = np.zeros((r, r))
            X[i, m + j] = X[j, m + i] = 1.0
            out.append(X)
            Y = np.zeros((r, r))
            Y[m + i, j] = Y[m + j, i] = 1.0
            out.append(Y)
    return out


def _lie_dim(family, r):
    return {"GL": r * r, "SL": r * r - 1, "SO": r * (r - 1) // 2, "Sp": (r // 2) * (r + 1)}[family]


def _lie_rank(family, r):
    return {"GL": r, "SL": r - 1, "SO": r // 2, "Sp": r // 2}[family]


class ReductiveGroupSpec:
    """A classical group in its defining representation.

    Parameters
    ----------
    family : {"GL", "SL", "SO", "Sp"}
    r : int
        Size of the defining matrices (even for ``Sp``).
    field : {"C", "R"}
        Real families are the split forms GL(r, R) and SL(r, R); their
        complex conjugation is entrywise.
    """

    def __init__(self, family, r, field="C"):
        if family not in COMPLEX_FAMILIES:
            raise ValidationError(f"unknown group family {family!r}")
        if field == "R" and family not in REAL_FAMILIES:
            raise ValidationError(f"real form of {family} is not supported")
        if family == "Sp" and r % 2:
            raise ValidationError("Sp needs an even matrix size")
        if family in ("SL", "SO") and r < 2:
            raise ValidationError(f"{family}({r}) is trivial")
        self.family, self.r, self.field = family, int(r), field
        self.basis = np.array(_algebra_basis(family, self.r))  # (dim, r, r)
        flat = self.basis.reshape(len(self.basis), -1).T
        self._pinv = np.linalg.pinv(flat)
        self.structure_constants = np.array(
            [[self.coords(X @ Y - Y @ X) for Y in self.basis] for X in self.basis]
        ).real  # c[i, j, k]: [X_i, X_j] = Σ_k c_ijk X_k
        self.killing_gram = np.einsum("iab,jba->ij", self.basis, self.basis)

    def __repr__(self):
        f = "C" if self.field == "C" else "R"
        return f"{self.family}({self.r},{f})"

    @property
    def name(self):
        return repr(self)

    @property
    def dim(self):
        return len(self.basis)

    @property
    def lie_rank(self):
        return _lie_rank(self.family, self.r)

    @property
    def borel_dim(self):
        return (self.dim + self.lie_rank) // 2

    def coords(self, X):
        """Coordinates of a matrix X in 𝔤 in the precomputed basis."""
        X = np.asarray(X)
        c = self._pinv @ X.reshape(X.shape[:-2] + (-1,))[..., None] if X.ndim > 2 else self._pinv @ X.ravel()
        return c[..., 0] if X.ndim > 2 else c

    def matrix(self, c):
        return np.tensordot(c, self.basis, axes=(0, 0))

    def bracket_coords(self, a, b):
        return np.einsum("i,j,ijk->k", a, b, self.structure_constants)

    def trace_form_nondegenerate(self, tol=1e-10):
        return float(np.min(np.abs(np.linalg.eigvalsh(self.killing_gram)))) > tol

    def membership_residual(self, M):
        M = np.asarray(M)
        r = self.r
        res = 0.0
        if self.field == "R" and np.iscomplexobj(M):
            res = float(np.abs(M.imag).max())
        det = np.linalg.det(M)
        if self.family == "GL":
            return res if abs(det) > 1e-12 else max(res, 1.0)
        if self.family in ("SL", "SO"):
            res = max(res, abs(det - 1.0))
        if self.family == "SO":
            res = max(res, float(np.abs(M.T @ M - np.eye(r)).max()))
        if self.family == "Sp":
            J = _symplectic_form(r)
            res = max(res, float(np.abs(M.T @ J @ M - J).max()))
        return res

    def complexification(self):
        if self.field == "C":
            raise AlreadyComplex(f"{self} is already complex")
        return ReductiveGroupSpec(self.family, self.r, "C")


class PrincipalBundle:
    """Flat principal bundle given by generator matrices in the defining
    representation."""

    def __init__(self, spec, mats, group):
        self.spec = spec
        mats = [np.atleast_2d(np.asarray(M)) for M in mats]
        for i, M in enumerate(mats):
            if M.shape != (spec.r, spec.r):
                raise ValidationError(f"generator {i + 1} has shape {M.shape}, expected {(spec.r, spec.r)}")
            res = spec.membership_residual(M)
            if res > MEMBERSHIP_TOL:
                raise ValidationError(f"generator {i + 1} is not in {spec} (residual {res:.2e})")
        self.defining = Monodromy(mats, group, spec.field)
        self.group = group

    @property
    def mats(self):
        return self.defining.mats

    def __repr__(self):
        return f"PrincipalBundle({self.spec}, group={self.group!r})"

    def conjugate(self, G):
        Gi = np.linalg.inv(G)
        return PrincipalBundle(self.spec, [G @ M @ Gi for M in self.mats], self.group)


def adjoint_matrix(spec, M):
    """Matrix of X -> M X M^-1 on 𝔤 in the precomputed basis."""
    Mi = np.linalg.inv(M)
    return spec.coords(M @ spec.basis @ Mi).T


def ad_bundle(e):
    """Adjoint bundle: Ad of each generator on 𝔤."""
    mats = [adjoint_matrix(e.spec, M) for M in e.mats]
    if e.spec.field == "R":
        mats = [np.real(A) for A in mats]
    return Monodromy(mats, e.group, e.spec.field, validate=False)


def _ad_checked(e):
    if e.spec.dim > MAX_RANK:
        raise RankOutOfRange(f"dim {e.spec} = {e.spec.dim} exceeds the supported adjoint rank {MAX_RANK}")
    return ad_bundle(e)


def is_semistable_principal(e, d, h=None):
    from .stability import classify

    return classify(_ad_checked(e), d, h).semistable


def is_polystable_principal(e, d, h=None):
    from .stability import classify

    return classify(_ad_checked(e), d, h).polystable


# --------------------------------------------------------------------------
# reductions


def _closure_residual(spec, B):
    """Largest component of [X, Y] outside span(B) for X, Y in span(B)."""
    P = np.eye(spec.dim) - B @ B.conj().T
    res = 0.0
    for a in range(B.shape[1]):
        for b in range(a + 1, B.shape[1]):
            res = max(res, float(np.abs(P @ spec.bracket_coords(B[:, a], B[:, b])).max()))
    return res


def _ad_operator(spec, x):
    # (ad x) y = [x, y] in coordinates
    return np.einsum("i,ijk->kj", x, spec.structure_constants)


def _is_solvable(spec, S, tol=1e-8):
    cur = S
    for _ in range(spec.dim + 1):
        if cur.shape[1] == 0:
            return True
        br = [spec.bracket_coords(cur[:, a], cur[:, b]) for a in range(cur.shape[1]) for b in range(a + 1, cur.shape[1])]
        if not br:
            return True
        nxt = orth(np.array(br).T, tol)
        if nxt.shape[1] >= cur.shape[1]:
            return False
        cur = nxt
    return False


def borel_candidate(spec, B, starts=32, seed=0, angles=72):
    """Search for a Borel subalgebra of 𝔤 inside the subalgebra span(B).

    For a random x in span(B) the eigenspaces of ad x restricted to span(B)
    split into its centralizer and root spaces; a generic half-plane picks a
    positive system. Candidates are kept when solvable of Borel dimension.
    """
    rng = np.random.default_rng(seed)
    B = orth(B.astype(complex))
    for _ in range(starts):
        x = B @ (rng.standard_normal(B.shape[1]) + 1j * rng.standard_normal(B.shape[1]))
        A = B.conj().T @ _ad_operator(spec, x) @ B
        lam, V = np.linalg.eig(A)
        scale = max(1.0, float(np.abs(lam).max()))
        zero = np.abs(lam) <= 1e-8 * scale
        if np.linalg.matrix_rank(V, 1e-8) < B.shape[1]:
            continue
        for th in np.linspace(0, 2 * np.pi, angles, endpoint=False) + rng.uniform(0, 2 * np.pi / angles):
            sel = zero | (np.real(np.exp(1j * th) * lam) > 1e-8 * scale)
            if int(sel.sum()) != spec.borel_dim:
                continue
            S = orth(B @ V[:, sel], 1e-8)
            if S.shape[1] == spec.borel_dim and _closure_residual(spec, S) < 1e-7 and _is_solvable(spec, S):
                return S
    return None


@dataclass
class InvariantSubalgebraReport:
    kind: str
    spec: ReductiveGroupSpec = field(repr=False)
    ranks: list
    slopes: list
    length: int
    middle: np.ndarray = field(repr=False)  # coordinates in the basis of 𝔤, orthonormal columns
    invariance_residual: float
    closure_residual: float
    borel: np.ndarray = field(default=None, repr=False)
    search: str = "complete"

    @property
    def dim(self):
        return self.middle.shape[1]

    @property
    def is_whole_algebra(self):
        return self.dim == self.spec.dim

    def matrices(self):
        """Middle-term basis as matrices in the defining representation."""
        return np.array([self.spec.matrix(c) for c in self.middle.T])

    def to_dict(self):
        def mat(B):
            B = np.asarray(B)
            if np.iscomplexobj(B) and np.abs(B.imag).max(initial=0) > 1e-12:
                return {"re": B.real.tolist(), "im": B.imag.tolist()}
            return np.real(B).tolist()

        return {
            "kind": self.kind,
            "group": self.spec.name,
            "ranks": self.ranks,
            "slopes": [float(s) for s in self.slopes],
            "length": self.length,
            "middle_dim": self.dim,
            "middle_basis": mat(self.middle),
            "certificates": {
                "invariance_residual": self.invariance_residual,
                "closure_residual": self.closure_residual,
                "borel_found": self.borel is not None,
                "borel_dim": None if self.borel is None else int(self.borel.shape[1]),
            },
            "search": self.search,
        }


def _reduction(e, filt, kind):
    ell = filt.length
    if ell % 2 == 0:
        raise OddityViolation(f"{kind} filtration of ad has even length {ell}")
    ad = ad_bundle(e)
    mid = orth(filt.bases[(ell + 1) // 2 - 1])
    inv = invariance_residual(ad.mats, mid)
    clo = _closure_residual(e.spec, mid)
    if inv > CERT_TOL or clo > CERT_TOL:
        raise CertificateFail(f"middle term fails certificates (invariance {inv:.2e}, closure {clo:.2e})")
    bor = borel_candidate(e.spec, mid)
    if bor is None:
        raise CertificateFail("no Borel subalgebra found inside the middle term")
    return InvariantSubalgebraReport(kind, e.spec, filt.ranks, filt.slopes, ell, mid, inv, clo, bor, filt.search)


def hn_reduction(e, d, h=None):
    """Harder-Narasimhan reduction as the middle term of the HN filtration of ad."""
    from .stability import hn_filtration

    return _reduction(e, hn_filtration(_ad_checked(e), d, h), "HarderNarasimhan")


def socle_reduction(e, d, h=None):
    """Socle reduction as the middle term of the socle filtration of ad."""
    from .stability import classify, socle_filtration

    ad = _ad_checked(e)
    if not classify(ad, d, h).semistable:
        raise NotSemistable("socle reduction needs a semistable principal bundle")
    return _reduction(e, socle_filtration(ad, d, h), "Socle")


# --------------------------------------------------------------------------
# real forms


def complexify_principal(e):
    if e.spec.field == "C":
        raise AlreadyComplex("principal bundle is already complex")
    return PrincipalBundle(e.spec.complexification(), [M.astype(complex) for M in e.mats], e.group)


def equivalence_check(e, d):
    """Compare (poly)semistability of a real-form bundle and its complexification.

    Also checks that the maximal destabilizing subbundle of ad ⊗ C is
    preserved by complex conjugation.
    """
    from .stability import classify, max_destabilizing

    ec = complexify_principal(e)
    ad_r, ad_c = _ad_checked(e), complexify(_ad_checked(e))
    vr, vc = classify(ad_r, d), classify(ad_c, d)
    F, _ = max_destabilizing(ad_c, d)
    out = {
        "group": e.spec.name,
        "complexified": ec.spec.name,
        "semistable_real": vr.semistable,
        "semistable_complex": vc.semistable,
        "polystable_real": vr.polystable,
        "polystable_complex": vc.polystable,
        "max_destabilizing_conjugation_invariant": bool(conjugation_invariant(F.basis)),
    }
    out["agree"] = (
        out["semistable_real"] == out["semistable_complex"]
        and out["polystable_real"] == out["polystable_complex"]
        and out["max_destabilizing_conjugation_invariant"]
    )
    return out


# --------------------------------------------------------------------------
# Hermitian-Einstein structures


@dataclass
class HEPrincipalReport:
    ad_flow: object = field(repr=False)
    defining_flow: object = field(repr=False)
    central_residual: float
    bracket_residual: float
    conjugation_residual: float
    lam: float

    @property
    def passed(self):
        return self.central_residual < 1e-6 and self.bracket_residual <= 1e-5 and self.conjugation_residual <= 1e-5

    def to_dict(self):
        out = {
            "ad_flow": self.ad_flow.summary(),
            "central_residual": self.central_residual,
            "bracket_residual": self.bracket_residual,
            "conjugation_residual": self.conjugation_residual,
            "einstein_constant_defining": self.lam,
            "passed": self.passed,
        }
        if self.defining_flow is not None:
            out["defining_flow"] = self.defining_flow.summary()
        return out


def bracket_derivative(spec, A):
    """sup-norm of the covariant derivative of the bracket tensor.

    ``A`` holds connection matrices on 𝔤 (grid + (n, 1, dim, dim)); the
    bracket tensor is constant in the flat frame, so ∇c = A·c - c(A·, ·) - c(·, A·).
    """
    c = spec.structure_constants.astype(complex)
    t1 = np.einsum("...km,ijm->...ijk", A, c)
    t2 = np.einsum("...mi,mjk->...ijk", A, c)
    t3 = np.einsum("...mj,imk->...ijk", A, c)
    return float(np.max(np.abs(t1 - t2 - t3)))


def he_structure_principal(e, d, g, params=None):
    """Hermitian-Einstein structure on a polystable principal bundle via the
    flow on ad (and on the defining representation for GL and SL)."""
    from .he_flow import connection_form, flow_run, lambda_contract, chern_curvature

    if not is_polystable_principal(e, d):
        raise NotPolystable("Hermitian-Einstein structures exist only on polystable bundles")
    ad = ad_bundle(e)
    rep = flow_run(ad, d, g, params=params)
    if not rep.converged:
        raise NotConverged(f"flow on ad ended as {rep.verdict}")
    A = connection_form(rep.metric).coeffs[..., 0, :, :]
    br = bracket_derivative(e.spec, A)
    central = float(np.max(np.abs(lambda_contract(chern_curvature(rep.metric), g))))
    conj = float(np.max(np.abs(A.imag))) if e.spec.field == "R" else 0.0
    drep, lam = None, 0.0
    if e.spec.family in ("GL", "SL"):
        drep = flow_run(e.defining, d, g, params=params)
        if not drep.converged:
            raise NotConverged(f"flow on the defining representation ended as {drep.verdict}")
        lam = drep.lam
        LK = lambda_contract(chern_curvature(drep.metric), g)
        # trace part must be the constant λ, trace-free part zero
        central = max(central, float(np.max(np.abs(LK - lam * np.eye(e.spec.r)))))
        if e.spec.field == "R":
            conj = max(conj, float(np.max(np.abs(connection_form(drep.metric).coeffs.imag))))
    return HEPrincipalReport(rep, drep, central, br, conj, lam)
