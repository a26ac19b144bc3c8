"""Degrees and slopes of flat bundles.

Two channels are provided. ``numeric`` integrates ``c1(h) ∧ ω^(n-1)`` over
the manifold for an admissible Hermitian metric ``h``; ``abstract`` applies a
linear functional to the log-determinant characters of the monodromy,
``deg(F) = Σ_i w_i log|det ρ_F(γ_i)|``.

Normalization: ``c1(h) = -∂∂̄ log det H`` with no 2π and no ½ factors, so all
numeric degrees are defined up to one global positive constant.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import GauduchonFail, InconsistentMode, MissingMetric, NonPositiveMetric, ValidationError
from .flat_rep import AbstractGroup, FlatSubbundle, cluster_eigenvalues, restrict
from .linalg import complement, dagger, herm, hexp, orth
from .manifold import (
    GAUDUCHON_TOL,
    AffineManifold,
    Law,
    check_gauduchon,
    dd_bar,
    function_form,
    integrate_over_nu,
    omega_power,
    wedge,
)

HERMITIAN_TOL = 1e-12
EQUIVARIANCE_TOL = 1e-8


class HermitianMetricField:
    """Positive-definite Hermitian ``H(x)`` on the grid, twisted by the monodromy.

    ``H(γx) = ρ(γ)^-† H(x) ρ(γ)^-1``. ``func`` (optional) evaluates H at
    arbitrary points of shape ``(..., n)`` and is used for equivariance checks.
    """

    def __init__(self, manifold, monodromy, H, func=None):
        self.manifold = manifold
        self.monodromy = monodromy
        self.H = np.asarray(H)
        self.func = func

    @property
    def law(self):
        return Law("metric", self.monodromy.mats)

    @property
    def rank(self):
        return self.monodromy.rank

    def min_eig(self):
        return float(np.min(np.linalg.eigvalsh(herm(self.H))))

    def hermiticity_residual(self):
        return float(np.max(np.abs(self.H - dagger(self.H))))

    def check(self):
        if self.min_eig() <= HERMITIAN_TOL:
            raise NonPositiveMetric(f"metric not positive definite (min eig {self.min_eig():.2e})")

    def equivariance_residual(self, samples=64, seed=0):
        if self.func is None:
            return 0.0
        rng = np.random.default_rng(seed)
        x = rng.random((samples, self.manifold.dim))
        Hx = self.func(x)
        out = 0.0
        for (A, b), R in zip(self.manifold.generators, self.monodromy.mats):
            Ri = np.linalg.inv(R)
            lhs = self.func(x @ A.T + b)
            rhs = Ri.conj().T @ Hx @ Ri
            out = max(out, float(np.max(np.abs(lhs - rhs)) / max(1.0, np.abs(rhs).max())))
        return out

    def validate(self):
        self.check()
        if self.hermiticity_residual() > 1e-10 * max(1.0, np.abs(self.H).max()):
            raise NonPositiveMetric("metric is not Hermitian")
        res = self.equivariance_residual()
        if res > EQUIVARIANCE_TOL:
            raise ValidationError(f"metric violates the twist (residual {res:.2e})")
        return res

    def restricted(self, basis):
        """Induced metric on the flat subbundle spanned by ``basis``."""
        B = orth(basis)
        sub = restrict(self.monodromy, B)
        Bd = B.conj().T
        func = None if self.func is None else (lambda x, f=self.func: Bd @ f(x) @ B)
        return HermitianMetricField(self.manifold, sub, Bd @ self.H @ B, func)

    def quotient(self, basis):
        """Induced metric on V/F realized on the orthogonal complement of F."""
        from .flat_rep import quotient

        B = orth(basis)
        Q = complement(B)
        qm = quotient(self.monodromy, B)
        Qd = Q.conj().T

        def q(H):
            return np.linalg.inv(Qd @ np.linalg.inv(H) @ Q)

        func = None if self.func is None else (lambda x, f=self.func: q(f(x)))
        return HermitianMetricField(self.manifold, qm, q(self.H), func)

    def scaled(self, c):
        func = None if self.func is None else (lambda x, f=self.func: c * f(x))
        return HermitianMetricField(self.manifold, self.monodromy, c * self.H, func)


def _require_manifold(v):
    if isinstance(v.group, AbstractGroup):
        raise MissingMetric("bundle over an abstract group has no metric fields")
    return v.group


def parallel_frame_logs(v):
    """Commuting logarithms ``L_i`` with ``exp(L_i) = ρ(γ_i)`` (torus only)."""
    if not v.commuting():
        raise MissingMetric("parallel-potential synthesis needs commuting monodromy")
    logs = []
    for M in v.mats:
        L = sla.logm(M.astype(complex))
        logs.append(np.real_if_close(L, tol=1e6) if v.field == "R" else L)
    return logs


def _frame(logs, n):
    def P(x):
        x = np.asarray(x, dtype=float)
        S = sum(x[..., i, None, None] * logs[i] for i in range(n))
        return sla.expm(S) if S.ndim > 2 else sla.expm(S)

    return P


def _periodic_hermitian(rank, n, rng, amp, modes=1, complex_entries=True):
    """Random smooth periodic Hermitian matrix field, as a callable."""
    terms = []
    for m in np.ndindex(*(2 * modes + 1,) * n):
        k = np.array(m) - modes
        if not k.any():
            continue
        A = rng.standard_normal((rank, rank))
        B = rng.standard_normal((rank, rank))
        if complex_entries:
            A = A + 1j * rng.standard_normal((rank, rank))
            B = B + 1j * rng.standard_normal((rank, rank))
        terms.append((k, herm(A) * amp, herm(B) * amp))

    def X(x):
        x = np.asarray(x, dtype=float)
        out = 0
        for k, A, B in terms:
            ph = 2 * np.pi * (x @ k)
            out = out + np.cos(ph)[..., None, None] * A + np.sin(ph)[..., None, None] * B
        return out

    return X


def default_metric(v, manifold=None, seed=None, amp=0.0):
    """An admissible metric ``H = P^-† Q P^-1`` with ``P(x) = exp(Σ x^i L_i)``.

    With ``amp = 0`` (default) ``Q = I``; otherwise ``Q = exp(X)`` for a
    random smooth periodic Hermitian ``X`` of size ``amp`` drawn from ``seed``.
    On twisted quotients only unitary monodromy is supported, with a scalar
    conformal factor in place of ``X``.
    """
    m = manifold or _require_manifold(v)
    r, n = v.rank, m.dim
    rng = np.random.default_rng(seed)
    complex_entries = v.field == "C"
    if m.kind == "torus":
        P = _frame(parallel_frame_logs(v), n)
        Xf = _periodic_hermitian(r, n, rng, amp, complex_entries=complex_entries) if amp else None

        def func(x):
            Pi = np.linalg.inv(P(x))
            Q = hexp(Xf(x)) if Xf is not None else np.eye(r)
            H = dagger(Pi) @ Q @ Pi
            return herm(H)

    else:
        if not v.is_unitary():
            raise MissingMetric("metric synthesis on twisted quotients needs unitary monodromy")
        # functions of (x, y) only are invariant under the Heisenberg deck group
        c = rng.standard_normal(4) * amp

        def func(x):
            x = np.asarray(x, dtype=float)
            f = c[0] * np.sin(2 * np.pi * x[..., 0]) + c[1] * np.cos(2 * np.pi * x[..., 1])
            f = f + c[2] * np.sin(2 * np.pi * (x[..., 0] + x[..., 1])) + c[3]
            return np.exp(f)[..., None, None] * np.eye(r)

    H = func(m.points())
    if v.field == "R" and not np.iscomplexobj(H):
        H = H.astype(float)
    return HermitianMetricField(m, v, H, func)


def admissible_metrics(v, count, manifold=None, amp=0.3, seed=0):
    return [default_metric(v, manifold, seed=seed + i, amp=amp) for i in range(count)]


def first_chern_form(h):
    """c1(h) = -∂∂̄ log det H as a (1,1)-form."""
    h.check()
    _, logdet = np.linalg.slogdet(herm(h.H))
    f = function_form(h.manifold, np.real(logdet), Law("logdet", h.monodromy.mats))
    return -1.0 * dd_bar(f)


@dataclass
class DegreeFunctional:
    """Either a numeric degree from (M, g, ν) or an abstract linear functional."""

    mode: str
    weights: tuple = None
    manifold: AffineManifold = None
    metric: object = field(default=None, repr=False)

    @classmethod
    def abstract(cls, weights):
        w = tuple(float(x) for x in weights)
        if not all(np.isfinite(w)):
            raise ValidationError("abstract weights must be finite")
        return cls("abstract", weights=w)

    @classmethod
    def numeric(cls, manifold, metric, check=True):
        d = cls("numeric", manifold=manifold, metric=metric)
        if check:
            res = check_gauduchon(manifold, metric)
            if res > GAUDUCHON_TOL:
                raise GauduchonFail(f"metric is not Gauduchon (residual {res:.2e})")
        return d

    def __post_init__(self):
        self._omega = None

    @property
    def omega_top_minus_one(self):
        if self._omega is None:
            self._omega = omega_power(self.manifold, self.metric, self.manifold.dim - 1)
        return self._omega

    def volume_form_weight(self):
        """∫ det g dx, the normalizing volume for the Einstein constant."""
        return float(np.mean(np.linalg.det(self.metric.g))) * self.manifold.volume


def _numeric_degree(h, d):
    c1 = first_chern_form(h)
    return float(np.real(integrate_over_nu(wedge(c1, d.omega_top_minus_one))))


def degree(v, d, h=None):
    if d.mode == "abstract":
        if len(d.weights) != len(v.mats):
            raise InconsistentMode("weights must align with the generators")
        return subspace_degree(v, np.eye(v.rank), d)
    m = _require_manifold(v)
    if m is not d.manifold:
        raise InconsistentMode("bundle lives over a different manifold than the degree functional")
    if h is None:
        h = default_metric(v, m)
    return _numeric_degree(h, d)


def slope(v, d, h=None):
    return degree(v, d, h) / v.rank


def _cluster_means(v):
    """Eigenvalue cluster means of every generator, cached on ``v``."""
    c = v.__dict__.get("_cluster_means")
    if c is None:
        c = [np.array([lam for lam, _ in cluster_eigenvalues(np.linalg.eigvals(M))]) for M in v.mats]
        v.__dict__["_cluster_means"] = c
    return c


def _snapped_log_det(T, means):
    """log|det T| with each eigenvalue replaced by the nearest parent cluster
    mean; defective eigenvalues scatter by eps^(1/m) but their mean does not."""
    t = np.linalg.eigvals(T)
    idx = np.argmin(np.abs(t[:, None] - means[None, :]), axis=1)
    snap = means[idx]
    far = np.abs(t - snap) > 1e-2 * np.maximum(1.0, np.abs(snap))
    snap = np.where(far, t, snap)
    return float(np.sum(np.log(np.abs(snap))))


def subbundle_degree(s, d, h=None):
    if not isinstance(s, FlatSubbundle):
        s = FlatSubbundle(s[0], s[1])
    if d.mode == "abstract":
        return degree(s.monodromy(), d)
    if h is None:
        h = default_metric(s.parent, _require_manifold(s.parent))
    return _numeric_degree(h.restricted(s.basis), d)


def subspace_degree(v, B, d, h=None):
    """Degree of the flat subbundle with fiber span(B); B need not be validated."""
    if d.mode == "abstract":
        B = orth(B)
        means = _cluster_means(v)
        return float(sum(w * _snapped_log_det(B.conj().T @ M @ B, c) for w, M, c in zip(d.weights, v.mats, means)))
    return subbundle_degree(FlatSubbundle(v, B), d, h)
