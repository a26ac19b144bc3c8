"""Stability classification, Harder-Narasimhan and socle filtrations.

Everything is driven by the invariant-subspace lattice of the monodromy and a
degree functional. Slopes are compared with tolerance
``1e-9 * max(1, |δ0|)``; values inside the tolerance count as equal.
"""

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .degree import _numeric_degree, default_metric, subspace_degree
from .errors import HeuristicSearchIncomplete, NotSemistable
from .flat_rep import FlatSubbundle, Monodromy, spin
from .linalg import complement, contains, orth, span_sum

SLOPE_RTOL = 1e-9


def slope_tol(ref):
    return SLOPE_RTOL * max(1.0, abs(ref))


class Verdict(str, enum.Enum):
    UNSTABLE = "Unstable"
    SEMISTABLE_NOT_POLYSTABLE = "SemistableNotPolystable"
    POLYSTABLE_NOT_STABLE = "PolystableNotStable"
    STABLE = "Stable"

    @property
    def semistable(self):
        return self is not Verdict.UNSTABLE

    @property
    def polystable(self):
        return self in (Verdict.POLYSTABLE_NOT_STABLE, Verdict.STABLE)


class _Context:
    """Slope evaluation on invariant subspaces of one bundle, with caching."""

    def __init__(self, v, d, h=None):
        self.v, self.d = v, d
        self.h = None
        if d.mode == "numeric":
            self.h = h if h is not None else default_metric(v, d.manifold)
        self._cache = {}
        lat = v.lattice
        self.search = lat.search
        if lat.search != "complete":
            warnings.warn(
                "invariant-subspace search is heuristic for this group", HeuristicSearchIncomplete, stacklevel=3
            )
        self.members = lat.members
        rng = np.random.default_rng(0)
        # one representative and the total span for each continuous family
        self.families = []
        for fam in lat.families:
            rep = fam.sample(rng)
            if rep.shape[1] in (0, v.rank):
                continue
            self.families.append((rep, spin(v.mats, fam.template, real=v.field == "R")))

    def slope(self, B):
        key = (B.shape[1], np.round(B @ B.conj().T, 8).astype(complex).tobytes())
        if key not in self._cache:
            k = B.shape[1]
            if self.d.mode == "abstract":
                deg = subspace_degree(self.v, B, self.d)
            else:
                deg = _numeric_degree(self.h.restricted(B), self.d)
            self._cache[key] = deg / k
        return self._cache[key]

    def candidates(self):
        out = [(B, self.slope(B)) for B in self.members]
        out += [(rep, self.slope(rep)) for rep, _ in self.families]
        return out

    def full_slope(self):
        return self.slope(np.eye(self.v.rank, dtype=self.members[-1].dtype))

    def quotient(self, C):
        """Bundle and metric on V/span(C), realized on a fixed complement frame."""
        C = orth(C)
        Q = complement(C)
        Qd = Q.conj().T
        w = Monodromy([Qd @ M @ Q for M in self.v.mats], self.v.group, self.v.field, validate=False)
        hq = None
        if self.h is not None:
            from .degree import HermitianMetricField

            hq = HermitianMetricField(self.h.manifold, w, np.linalg.inv(Qd @ np.linalg.inv(self.h.H) @ Q))
        return Q, w, hq

    def restrict(self, B):
        B = orth(B)
        w = Monodromy([B.conj().T @ M @ B for M in self.v.mats], self.v.group, self.v.field, validate=False)
        hr = None if self.h is None else self.h.restricted(B)
        return w, hr


def _max_destabilizing(ctx):
    cands = ctx.candidates()
    delta0 = max(s for _, s in cands)
    tol = slope_tol(delta0)
    top = [B for B, s in cands if s >= delta0 - tol]
    top += [span for rep, span in ctx.families if ctx.slope(rep) >= delta0 - tol]
    # saturate under joins; a join of slope-δ0 subbundles again has slope δ0
    F = top[0]
    changed = True
    while changed:
        changed = False
        for B in top:
            if not contains(F, B):
                F = span_sum(F, B)
                changed = True
    return F, delta0


def max_destabilizing(v, d, h=None):
    """Maximal flat subbundle of maximal slope, and that slope δ0."""
    ctx = _Context(v, d, h)
    F, delta0 = _max_destabilizing(ctx)
    return FlatSubbundle(v, F), delta0


@dataclass
class Filtration:
    parent: Monodromy = field(repr=False)
    bases: list = field(repr=False)  # orthonormal bases of F_1, ..., F_l = V
    slopes: list  # slopes of the graded pieces F_i / F_{i-1}
    kind: str
    search: str = "complete"
    certified: bool = True

    @property
    def ranks(self):
        return [B.shape[1] for B in self.bases]

    @property
    def length(self):
        return len(self.bases)

    def subbundles(self):
        return [FlatSubbundle(self.parent, B) for B in self.bases]

    def graded(self, i):
        """Monodromy of F_i / F_(i-1), i counted from 0."""
        B = self.bases[i]
        w = Monodromy([B.conj().T @ M @ B for M in self.parent.mats], self.parent.group, self.parent.field,
                      validate=False)
        if i == 0:
            return w
        X = B.conj().T @ self.bases[i - 1]
        Q = complement(orth(X))
        return Monodromy([Q.conj().T @ M @ Q for M in w.mats], w.group, w.field, validate=False)

    def to_dict(self):
        def mat(B):
            B = np.asarray(B)
            if np.iscomplexobj(B) and np.abs(B.imag).max(initial=0) > 0:
                return {"re": B.real.tolist(), "im": B.imag.tolist()}
            return np.real(B).tolist()

        return {
            "kind": self.kind,
            "ranks": self.ranks,
            "slopes": [float(s) for s in self.slopes],
            "bases": [mat(B) for B in self.bases],
            "search": self.search,
            "certified": bool(self.certified),
        }


def _iterate(v, d, h, step, kind):
    r = v.rank
    ctx = _Context(v, d, h)
    search = ctx.search
    F = np.zeros((r, 0), dtype=complex)
    Q = np.eye(r)
    cur = ctx
    bases, slopes = [], []
    while F.shape[1] < r:
        C, mu = step(cur)
        F = orth(np.hstack([F, Q @ C])) if F.shape[1] else orth(Q @ C)
        bases.append(F)
        slopes.append(mu)
        if F.shape[1] >= r:
            break
        Q2, w, hq = cur.quotient(C)
        Q = Q @ Q2
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HeuristicSearchIncomplete)
            cur = _Context(w, d, hq)
        if cur.search != "complete":
            search = cur.search
    if real_field(v):
        bases = [np.real_if_close(B, tol=1e6) for B in bases]
    return Filtration(v, bases, slopes, kind, search)


def real_field(v):
    return v.field == "R"


def _certify_hn(filt, d, h):
    ctx = _Context(filt.parent, d, h)
    ok = all(a > b + slope_tol(a) for a, b in zip(filt.slopes, filt.slopes[1:]))
    prev = None
    for B in filt.bases:
        w, hr = ctx.restrict(B)
        piece = _Context(w, d, hr)
        if prev is not None:
            X = B.conj().T @ prev
            _, w2, hq = piece.quotient(X)
            piece = _Context(w2, d, hq)
        S, _ = _max_destabilizing(piece)
        ok = ok and S.shape[1] == piece.v.rank
        prev = B
    return ok


def hn_filtration(v, d, h=None, certify=True):
    """Harder-Narasimhan filtration by successive maximal destabilizing subbundles."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HeuristicSearchIncomplete)
        filt = _iterate(v, d, h, _max_destabilizing, "HarderNarasimhan")
        if certify:
            filt.certified = _certify_hn(filt, d, h)
    if any(issubclass(w.category, HeuristicSearchIncomplete) for w in caught):
        filt.search = "heuristic"
        warnings.warn("invariant-subspace search is heuristic for this group", HeuristicSearchIncomplete,
                      stacklevel=2)
    return filt


def _socle_step(ctx):
    mu = ctx.full_slope()
    tol = slope_tol(mu)
    F, delta0 = _max_destabilizing(ctx)
    if delta0 > mu + tol:
        raise NotSemistable(f"maximal slope {delta0:.6g} exceeds slope {mu:.6g}")
    cands = [B for B, s in ctx.candidates() if abs(s - mu) <= tol]
    pool = [(B, s) for B, s in ctx.candidates()]

    def is_stable(B):
        return not any(
            C.shape[1] < B.shape[1] and s >= mu - tol and contains(B, C) for C, s in pool
        )

    stable = [B for B in cands if is_stable(B)]
    stable += [span for rep, span in ctx.families if abs(ctx.slope(rep) - mu) <= tol and is_stable(rep)]
    S = stable[0]
    for B in stable[1:]:
        if not contains(S, B):
            S = span_sum(S, B)
    return S, mu


def socle(v, d, h=None):
    """Maximal polystable flat subbundle of slope μ(V) of a semistable bundle."""
    S, _ = _socle_step(_Context(v, d, h))
    return FlatSubbundle(v, S)


def socle_filtration(v, d, h=None):
    return _iterate(v, d, h, _socle_step, "Socle")


def classify(v, d, h=None):
    if v.rank == 1:
        return Verdict.STABLE
    ctx = _Context(v, d, h)
    mu = ctx.full_slope()
    _, delta0 = _max_destabilizing(ctx)
    tol = slope_tol(max(abs(mu), abs(delta0)))
    if delta0 > mu + tol:
        return Verdict.UNSTABLE
    proper = [s for B, s in ctx.candidates() if B.shape[1] < v.rank]
    if all(s < mu - tol for s in proper):
        return Verdict.STABLE
    S, _ = _socle_step(ctx)
    if S.shape[1] == v.rank:
        return Verdict.POLYSTABLE_NOT_STABLE
    return Verdict.SEMISTABLE_NOT_POLYSTABLE


def stability_report(v, d, h=None):
    """JSON-ready summary: verdict, HN filtration and, when semistable, socle filtration."""
    verdict = classify(v, d, h)
    out = {"verdict": verdict.value, "search": v.lattice.search}
    out["hn"] = hn_filtration(v, d, h).to_dict()
    if verdict.semistable:
        out["socle"] = socle_filtration(v, d, h).to_dict()
    return out
