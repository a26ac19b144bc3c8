"""Compact special flat affine manifolds and the affine Dolbeault calculus.

Fields live on the uniform grid ``x = k / N`` of the fundamental domain
``[0, 1)^n``. Values outside the domain, needed by the finite-difference
stencils, are pulled back through deck transformations with the
transformation law of the field (a :class:`Law`).

Forms of bidegree ``(p, q)`` are sections of ``Λ^p T*M ⊗ Λ^q T*M``; the
coefficient array has trailing axes ``(C(n, p), C(n, q)) + payload`` where the
two middle axes run over strictly increasing multi-indices. Products are
taken separately in each index group, so that
``wedge(a, b) = (-1)^(p_a p_b + q_a q_b) wedge(b, a)``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

from .errors import (
    DegreeOverflow,
    DimensionTooSmall,
    GridIncompatible,
    NonPositiveMetric,
    NonSpecial,
    RelationViolation,
    ValidationError,
    WrongDegree,
)
from .linalg import combo_index, combos, compound, perm_sign

SPECIAL_TOL = 1e-12


# --------------------------------------------------------------------------
# manifolds


def _word_map(generators, word):
    """Affine map (A, b) of a word; letters are +i / -i for generator i (1-based)."""
    n = generators[0][0].shape[0]
    A = np.eye(n)
    b = np.zeros(n)
    for letter in word:
        Ai, bi = generators[abs(letter) - 1]
        if letter < 0:
            Ai_inv = np.linalg.inv(Ai)
            Ai, bi = Ai_inv, -Ai_inv @ bi
        # (A, b) ∘ (Ai, bi)
        b = A @ bi + b
        A = A @ Ai
    return A, b


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    det_deviations: list
    relation_residuals: list
    error: str | None = None


class AffineManifold:
    """A compact special flat affine manifold ``R^n / Γ``.

    Parameters
    ----------
    generators : list of (A, b)
        Deck transformations ``x -> A x + b``.
    N : int
        Grid points per axis on ``[0, 1)^n``.
    relators : list of words, optional
        Words in the generators that must evaluate to the identity. Letters
        are ``+i`` / ``-i`` for generator ``i`` (1-based). For tori the
        pairwise commutators are used when omitted.
    """

    def __init__(self, generators, N=32, relators=None, name=None):
        self.generators = [
            (np.array(A, dtype=float), np.array(b, dtype=float)) for A, b in generators
        ]
        self.dim = self.generators[0][0].shape[0]
        self.N = int(N)
        n = self.dim
        self.kind = (
            "torus"
            if all(np.allclose(A, np.eye(n), atol=0, rtol=0) for A, _ in self.generators)
            else "twisted"
        )
        if relators is None:
            g = len(self.generators)
            relators = [[i, j, -i, -j] for i in range(1, g + 1) for j in range(i + 1, g + 1)]
        self.relators = [list(w) for w in relators]
        self.name = name or self.kind

    def __repr__(self):
        return f"AffineManifold({self.name}, n={self.dim}, N={self.N})"

    def with_grid(self, N):
        return AffineManifold(self.generators, N, self.relators, self.name)

    @property
    def shape(self):
        return (self.N,) * self.dim

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def volume(self):
        return 1.0

    def word_map(self, word):
        return _word_map(self.generators, word)

    def points(self):
        """Grid coordinates, shape ``grid + (n,)``."""
        idx = np.indices(self.shape, dtype=float)
        return np.moveaxis(idx, 0, -1) / self.N

    @cached_property
    def _words(self):
        """Candidate words (BFS order, length <= 3) in index space."""
        g = len(self.generators)
        letters = [i for i in range(1, g + 1)] + [-i for i in range(1, g + 1)]
        seen = {}
        words = []
        frontier = [[]]
        for _ in range(3):
            nxt = []
            for w in frontier:
                for l in letters:
                    if w and w[-1] == -l:
                        continue
                    word = w + [l]
                    A, b = self.word_map(word)
                    key = (tuple(np.round(A, 9).ravel()), tuple(np.round(b, 9)))
                    if key in seen or (np.allclose(A, np.eye(self.dim)) and np.allclose(b, 0)):
                        continue
                    seen[key] = True
                    Ai = np.linalg.inv(A)
                    shift = self.N * b
                    if not (
                        np.allclose(Ai, np.round(Ai), atol=1e-12)
                        and np.allclose(shift, np.round(shift), atol=1e-9)
                    ):
                        raise GridIncompatible(
                            "deck transformations must map the grid onto itself "
                            "(integer linear parts and translations)"
                        )
                    words.append((tuple(word), A, np.round(Ai).astype(int), np.round(shift).astype(int)))
                    nxt.append(word)
            frontier = nxt
        return words

    @cached_property
    def _ghost_plans(self):
        plans = {}
        for axis in range(self.dim):
            for side in ("low", "high"):
                plans[axis, side] = self._build_plan(axis, side)
        return plans

    def _build_plan(self, axis, side):
        N, n = self.N, self.dim
        lshape = list(self.shape)
        lshape[axis] = 2
        Y = np.moveaxis(np.indices(lshape), 0, -1).reshape(-1, n)
        Y[:, axis] += N if side == "high" else -2
        unassigned = np.ones(len(Y), dtype=bool)
        groups = []
        for word, A, Ai, shift in self._words:
            X = (Y - shift) @ Ai.T
            ok = unassigned & np.all((X >= 0) & (X < N), axis=1)
            if ok.any():
                pos = np.nonzero(ok)[0]
                src = np.ravel_multi_index(tuple(X[pos].T), self.shape)
                groups.append((word, A, pos, src))
                unassigned[pos] = False
        if unassigned.any():
            raise GridIncompatible("could not locate ghost points within word length 3")
        return tuple(lshape), groups

    def ghost_pad(self, values, axis, law, form_pq=(0, 0)):
        """Pad ``values`` (shape ``grid + comp``) with two ghost layers on each
        side of ``axis`` using the transformation ``law``."""
        comp = values.shape[self.dim:]
        flat = values.reshape((-1,) + comp)
        layers = {}
        for side in ("low", "high"):
            lshape, groups = self._ghost_plans[axis, side]
            out = np.empty((int(np.prod(lshape)),) + comp, dtype=np.result_type(values, law.dtype))
            for word, A, pos, src in groups:
                out[pos] = law.apply(word, A, flat[src], self.dim, form_pq)
            layers[side] = out.reshape(lshape + comp)
        return np.concatenate([layers["low"], values, layers["high"]], axis=axis)

    def diff(self, values, axis, law, form_pq=(0, 0)):
        """Fourth-order central difference along ``axis``."""
        P = self.ghost_pad(values, axis, law, form_pq)
        N = self.N

        def sl(a, b):
            s = [slice(None)] * P.ndim
            s[axis] = slice(a, b)
            return P[tuple(s)]

        return (-sl(4, N + 4) + 8 * sl(3, N + 3) - 8 * sl(1, N + 1) + sl(0, N)) * (N / 12.0)


def torus(n, N=32):
    gens = []
    for i in range(n):
        b = np.zeros(n)
        b[i] = 1.0
        gens.append((np.eye(n), b))
    return AffineManifold(gens, N, name=f"T{n}")


def circle(N=64):
    return torus(1, N)


def heisenberg(N=16):
    """Nilmanifold with deck maps (x,y,z) -> (x+p, y+q, z+p*y+r)."""
    a = (np.array([[1, 0, 0], [0, 1, 0], [0, 1, 1]]), np.array([1, 0, 0]))
    b = (np.eye(3), np.array([0, 1, 0]))
    c = (np.eye(3), np.array([0, 0, 1]))
    # [a, b] = c, c central
    rel = [[1, 2, -1, -2, -3], [1, 3, -1, -3], [2, 3, -2, -3]]
    return AffineManifold([a, b, c], N, relators=rel, name="heisenberg")


def validate_manifold(m, raise_on_error=True, tol=SPECIAL_TOL):
    """Check the special-affine condition and the declared group relations."""
    dets = [abs(float(np.linalg.det(A)) - 1.0) for A, _ in m.generators]
    rels = []
    for w in m.relators:
        A, b = m.word_map(w)
        rels.append(float(max(np.abs(A - np.eye(m.dim)).max(), np.abs(b).max())))
    error = None
    if max(dets) > tol:
        error = "NonSpecial"
    elif rels and max(rels) > tol:
        error = "RelationViolation"
    report = ValidationReport(error is None, dets, rels, error)
    if error and raise_on_error:
        exc = NonSpecial if error == "NonSpecial" else RelationViolation
        raise exc(f"{error}: det deviations {dets}, relator residuals {rels}")
    return report


# --------------------------------------------------------------------------
# transformation laws


@dataclass(frozen=True)
class Law:
    """How a field's payload transforms under a deck transformation.

    kind is one of ``scalar`` (invariant), ``section`` (v -> ρ v),
    ``endo`` (X -> ρ X ρ^-1), ``metric`` (H -> ρ^-† H ρ^-1) and ``logdet``
    (f -> f - 2 log|det ρ|, the law of ``log det H``).
    """

    kind: str = "scalar"
    rho: tuple = field(default=None, compare=False)

    @property
    def dtype(self):
        if self.rho is None or self.kind in ("scalar", "logdet"):
            return np.float64
        return np.result_type(*self.rho)

    def rho_word(self, word):
        R = np.eye(self.rho[0].shape[0], dtype=self.dtype)
        for letter in word:
            M = self.rho[abs(letter) - 1]
            R = R @ (M if letter > 0 else np.linalg.inv(M))
        return R

    def apply(self, word, A, vals, n, pq=(0, 0)):
        p, q = pq
        if (p or q) and not np.allclose(A, np.eye(n)):
            Ait = np.linalg.inv(A).T
            Cp, Cq = compound(Ait, p), compound(Ait, q)
            # vals: (m, Cp, Cq, *payload)
            vals = np.einsum("ai,mij...,bj->mab...", Cp, vals, Cq)
        if self.kind == "scalar":
            return vals
        R = self.rho_word(word)
        if self.kind == "section":
            return vals @ R.T
        if self.kind == "endo":
            return R @ vals @ np.linalg.inv(R)
        if self.kind == "metric":
            Ri = np.linalg.inv(R)
            return Ri.conj().T @ vals @ Ri
        if self.kind == "logdet":
            return vals - 2.0 * np.log(abs(np.linalg.det(R)))
        raise ValueError(self.kind)

    def derived(self):
        """Law of the derivative of a field with this law."""
        return Law("scalar") if self.kind == "logdet" else self


SCALAR = Law("scalar")


# --------------------------------------------------------------------------
# forms


@dataclass(frozen=True)
class PQForm:
    """An affine (p, q)-form sampled on a manifold's grid."""

    manifold: AffineManifold
    p: int
    q: int
    coeffs: np.ndarray
    law: Law = SCALAR

    @property
    def payload_shape(self):
        return self.coeffs.shape[self.manifold.dim + 2:]

    def coeff(self, I, J):
        """Coefficient field on multi-indices I, J (sorted or not; sign applied)."""
        n = self.manifold.dim
        I, J = tuple(I), tuple(J)
        if len(set(I)) < len(I) or len(set(J)) < len(J):
            return np.zeros(self.manifold.shape + self.payload_shape, dtype=self.coeffs.dtype)
        s = perm_sign(I) * perm_sign(J)
        a = combo_index(n, self.p)[tuple(sorted(I))]
        b = combo_index(n, self.q)[tuple(sorted(J))]
        return s * self.coeffs[(Ellipsis,) * 0 + (slice(None),) * n + (a, b)]

    def top(self):
        """The single coefficient of an (n, n)-form."""
        n = self.manifold.dim
        if (self.p, self.q) != (n, n):
            raise WrongDegree(f"expected ({n},{n})-form, got ({self.p},{self.q})")
        return self.coeffs[(slice(None),) * n + (0, 0)]

    def __add__(self, other):
        _check_same(self, other)
        return PQForm(self.manifold, self.p, self.q, self.coeffs + other.coeffs, self.law)

    def __sub__(self, other):
        _check_same(self, other)
        return PQForm(self.manifold, self.p, self.q, self.coeffs - other.coeffs, self.law)

    def __mul__(self, c):
        return PQForm(self.manifold, self.p, self.q, self.coeffs * c, self.law)

    __rmul__ = __mul__

    def sup(self):
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


def _check_same(a, b):
    if (a.p, a.q) != (b.p, b.q) or a.manifold is not b.manifold:
        raise ValueError("forms must share manifold and bidegree")


def function_form(m, values, law=SCALAR):
    """(0,0)-form from grid values or from a callable of the coordinates."""
    if callable(values):
        values = values(m.points())
    values = np.asarray(values)
    if values.shape[: m.dim] != m.shape:
        values = np.broadcast_to(values, m.shape + values.shape).copy()
    return PQForm(m, 0, 0, values[(slice(None),) * m.dim + (None, None)], law)


def zero_form(m, p, q, payload=(), dtype=float, law=SCALAR):
    n = m.dim
    shape = m.shape + (len(combos(n, p)), len(combos(n, q))) + tuple(payload)
    return PQForm(m, p, q, np.zeros(shape, dtype=dtype), law)


def _insert_table(n, p):
    """For each (k, I) with k not in I: target index of {k} ∪ I and sign of
    moving k to the front."""
    tab = []
    src = combos(n, p)
    idx = combo_index(n, p + 1)
    for a, I in enumerate(src):
        for k in range(n):
            if k in I:
                continue
            tgt = tuple(sorted((k,) + I))
            tab.append((k, a, idx[tgt], perm_sign((k,) + I)))
    return tab


def dolbeault_d(f):
    """∂: insert the coordinate derivative index into the first group."""
    m, n = f.manifold, f.manifold.dim
    if f.p >= n:
        raise DegreeOverflow(f"∂ of a ({f.p},{f.q})-form on an {n}-manifold")
    law = f.law.derived()
    out = zero_form(m, f.p + 1, f.q, f.payload_shape, np.result_type(f.coeffs, law.dtype), law)
    derivs = [m.diff(f.coeffs, k, f.law, (f.p, f.q)) for k in range(n)]
    sl = (slice(None),) * n
    for k, a, t, s in _insert_table(n, f.p):
        out.coeffs[sl + (t,)] += s * derivs[k][sl + (a,)]
    return out


def dolbeault_dbar(f):
    """∂̄: insert into the second group with the sign (-1)^p."""
    m, n = f.manifold, f.manifold.dim
    if f.q >= n:
        raise DegreeOverflow(f"∂̄ of a ({f.p},{f.q})-form on an {n}-manifold")
    law = f.law.derived()
    out = zero_form(m, f.p, f.q + 1, f.payload_shape, np.result_type(f.coeffs, law.dtype), law)
    derivs = [m.diff(f.coeffs, k, f.law, (f.p, f.q)) for k in range(n)]
    sl = (slice(None),) * n
    sign = (-1) ** f.p
    for k, a, t, s in _insert_table(n, f.q):
        out.coeffs[sl + (slice(None), t)] += sign * s * derivs[k][sl + (slice(None), a)]
    return out


def dd_bar(f):
    return dolbeault_d(dolbeault_dbar(f))


def _mult_table(n, pa, pb):
    tab = []
    ia = combos(n, pa)
    ib = combos(n, pb)
    idx = combo_index(n, pa + pb)
    for a, I in enumerate(ia):
        for b, K in enumerate(ib):
            if set(I) & set(K):
                continue
            tab.append((a, b, idx[tuple(sorted(I + K))], perm_sign(I + K)))
    return tab


def _payload_product(x, y, nx, ny):
    """Product of payloads with ``nx``/``ny`` trailing payload dims (0 or 2)."""
    if nx == 0 and ny == 0:
        return x * y
    if nx == 0:
        return x[..., None, None] * y
    if ny == 0:
        return x * y[..., None, None]
    return x @ y


def wedge(a, b):
    """Exterior product taken separately in each index group."""
    m, n = a.manifold, a.manifold.dim
    if a.p + b.p > n or a.q + b.q > n:
        raise DegreeOverflow("wedge degree exceeds dimension")
    na, nb = len(a.payload_shape), len(b.payload_shape)
    law = a.law if na else b.law
    payload = a.payload_shape if na else b.payload_shape
    out = zero_form(m, a.p + b.p, a.q + b.q, payload, np.result_type(a.coeffs, b.coeffs), law)
    sl = (slice(None),) * n
    P = _mult_table(n, a.p, b.p)
    Q = _mult_table(n, a.q, b.q)
    for (ia, ib, it, sp), (ja, jb, jt, sq) in product(P, Q):
        out.coeffs[sl + (it, jt)] += (sp * sq) * _payload_product(
            a.coeffs[sl + (ia, ja)], b.coeffs[sl + (ib, jb)], na, nb
        )
    return out


def trace_form(f):
    """Trace of an endomorphism-valued form."""
    return PQForm(f.manifold, f.p, f.q, np.trace(f.coeffs, axis1=-2, axis2=-1), SCALAR)


def integrate_over_nu(top):
    """∫_M top / ν with ν = dx^1 ∧ ... ∧ dx^n (midpoint rule)."""
    c = top.top()
    val = np.mean(c, axis=tuple(range(top.manifold.dim))) * top.manifold.volume
    return val.item() if np.ndim(val) == 0 else val


# --------------------------------------------------------------------------
# Riemannian metrics on M


class MetricField:
    """Symmetric positive-definite ``g`` on the grid, optionally from a callable.

    The callable (if any) takes points of shape ``(..., n)`` and returns
    ``(..., n, n)``; it is used to verify equivariance off the grid.
    """

    def __init__(self, manifold, g, func=None, label=None):
        self.manifold = manifold
        self.g = np.asarray(g, dtype=float)
        self.func = func
        self.label = label
        self.constant = func is None

    @classmethod
    def constant_metric(cls, m, G):
        G = np.asarray(G, dtype=float)
        return cls(m, np.broadcast_to(G, m.shape + G.shape).copy(), None, "constant")

    @classmethod
    def from_function(cls, m, func, label=None):
        return cls(m, func(m.points()), func, label)

    def with_grid(self, N):
        m = self.manifold.with_grid(N)
        if self.func is None:
            return MetricField.constant_metric(m, self.g[(0,) * self.manifold.dim])
        return MetricField.from_function(m, self.func, self.label)

    @cached_property
    def omega(self):
        return PQForm(self.manifold, 1, 1, self.g.copy(), SCALAR)

    @cached_property
    def inverse(self):
        return np.linalg.inv(self.g)

    def validate(self, tol=1e-10, samples=64, seed=0):
        sym = float(np.max(np.abs(self.g - np.swapaxes(self.g, -1, -2))))
        mineig = float(np.min(np.linalg.eigvalsh(self.g)))
        equiv = 0.0
        if self.func is not None:
            rng = np.random.default_rng(seed)
            x = rng.random((samples, self.manifold.dim))
            gx = self.func(x)
            for A, b in self.manifold.generators:
                Ai = np.linalg.inv(A)
                lhs = self.func(x @ A.T + b)
                rhs = Ai.T @ gx @ Ai
                equiv = max(equiv, float(np.max(np.abs(lhs - rhs))))
        if sym > tol or mineig <= 0:
            raise NonPositiveMetric(f"metric not SPD (asym {sym:.2e}, min eig {mineig:.2e})")
        if equiv > tol:
            raise ValidationError(f"metric violates equivariance (residual {equiv:.2e})")
        return {"symmetry": sym, "min_eig": mineig, "equivariance": equiv}


def omega_power(m, g, k):
    """ω_g^k by repeated wedge; k = 0 gives the constant function 1."""
    if not 0 <= k <= m.dim:
        raise DegreeOverflow(f"k={k} outside [0, {m.dim}]")
    out = function_form(m, np.ones(m.shape))
    for _ in range(k):
        out = wedge(out, g.omega)
    return out


def check_gauduchon(m, g):
    """Sup-norm of ∂∂̄(ω^(n-1))."""
    if m.dim < 2:
        return 0.0
    return dd_bar(omega_power(m, g, m.dim - 1)).sup()


def check_astheno(m, g):
    """Sup-norm of ∂∂̄(ω^(d-2))."""
    if m.dim < 2:
        raise DimensionTooSmall("astheno-Kähler condition needs d >= 2")
    if m.dim == 2:
        return 0.0
    return dd_bar(omega_power(m, g, m.dim - 2)).sup()


GAUDUCHON_TOL = 1e-6
