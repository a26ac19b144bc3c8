"""Heat flow towards Hermitian-Einstein metrics on flat bundles.

Conventions: the Chern connection form of ``H`` is ``A = H^-1 ∂H`` and its
curvature is ``R = ∂̄A`` (a (1,1)-form with endomorphism values), so a rank
one metric ``H = e^{-φ}`` has ``R = ∂∂̄φ`` and ``tr R = c1(h)``. The
contraction is ``ΛK = g^{kl} R_kl``.

The flow ``∂_t H = -H (ΛK - λ)`` is integrated with the positivity
preserving update ``H <- H^½ exp(-dt S) H^½``, ``S = H^½ (ΛK - λ) H^-½``.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .degree import HermitianMetricField, default_metric, degree
from .errors import GauduchonFail, InconsistentMode, NoFlatSection, NonPositiveMetric, NotConverged, StepUnstable
from .flat_rep import invariant_subspaces
from .linalg import dagger, herm, hexp, principal_angles
from .manifold import GAUDUCHON_TOL, Law, PQForm, check_gauduchon, dolbeault_d, dolbeault_dbar, function_form

DEFAULTS = dict(dt=None, max_steps=20000, tol=1e-6, cond_limit=1e6, cfl=0.5, record_every=1, scheme="auto",
                adaptive=None, dt_precond=0.05, dt_max=1e6,
                confirm_rtol=1e-3, confirm_time=1.0)

# largest |symbol| of the 4th-order central first difference, times h
_D_SYMBOL = 1.3722


def connection_form(h):
    """A = H^-1 ∂H as an endomorphism-valued (1,0)-form."""
    H = function_form(h.manifold, h.H, Law("metric", h.monodromy.mats))
    dH = dolbeault_d(H)
    Hinv = np.linalg.inv(h.H)
    n = h.manifold.dim
    coeffs = Hinv[(slice(None),) * n + (None, None)] @ dH.coeffs
    return PQForm(h.manifold, 1, 0, coeffs, Law("endo", h.monodromy.mats))


def chern_curvature(h):
    """R = ∂̄(H^-1 ∂H)."""
    h.check()
    return dolbeault_dbar(connection_form(h))


def lambda_contract(R, g):
    """Pointwise g^{kl} R_{kl}."""
    gi = g.inverse
    # R coeffs: grid + (k, l) + (r, r)
    return np.einsum("...kl,...klab->...ab", gi.astype(R.coeffs.dtype) if np.iscomplexobj(R.coeffs) else gi,
                     R.coeffs)


def einstein_constant(v, d, g, h=None):
    """λ with ΛK = λ I for a Hermitian-Einstein metric.

    Integrating the trace gives deg = (n-1)! r λ ∫ det g dx.
    """
    if d.mode == "abstract":
        deg = degree(v, d)
        if abs(deg) > 1e-12:
            raise InconsistentMode("abstract degree functional with nonzero degree has no pointwise Chern form")
        return 0.0
    n = d.manifold.dim
    deg = degree(v, d, h)
    vol = float(np.mean(np.linalg.det(g.g))) * d.manifold.volume
    return deg / (math.factorial(n - 1) * v.rank * vol)


@dataclass
class FlowState:
    H: np.ndarray
    t: float = 0.0
    step: int = 0
    dt: float = None
    history: list = field(default_factory=list)  # rows: step, t, residual, min_eig, max_eig, cond, energy
    confirm: tuple = None  # (t, cond) when the tolerance was first met
    rejected: int = 0
    tail: list = field(default_factory=list, repr=False)  # ΛK at the first grid point per step


@dataclass
class FlowReport:
    verdict: str  # Converged, Diverged or Undecided
    state: FlowState
    metric: HermitianMetricField = field(repr=False)
    residual: float
    cond_growth: float
    cond: float
    destabilizing: np.ndarray = field(default=None, repr=False)
    destabilizing_angle: float = None
    lam: float = 0.0
    rejected_steps: int = 0

    @property
    def converged(self):
        return self.verdict == "Converged"

    def summary(self):
        out = {
            "verdict": self.verdict,
            "steps": self.state.step,
            "t": self.state.t,
            "dt": self.state.dt,
            "residual": self.residual,
            "cond": self.cond,
            "cond_growth": self.cond_growth,
            "einstein_constant": self.lam,
            "rejected_steps": self.rejected_steps,
        }
        if self.destabilizing is not None:
            B = self.destabilizing
            out["destabilizing_rank"] = int(B.shape[1])
            out["destabilizing_basis"] = np.abs(B).tolist() if not np.iscomplexobj(B) else {
                "re": B.real.tolist(), "im": B.imag.tolist()}
            out["destabilizing_angle"] = self.destabilizing_angle
        return out


def cfl_dt(g, N, factor=0.5):
    """Explicit stability bound for the linearized flow, times ``factor``."""
    n = g.manifold.dim
    gmax = float(np.max(np.linalg.eigvalsh(g.inverse)))
    lam_max = n * gmax * (_D_SYMBOL * N) ** 2
    return factor * 2.0 / lam_max


def _cond(w):
    return float(np.max(w[..., -1] / w[..., 0]))


def _destabilizing(v, avg, search_seed=0):
    """Split the averaged ΛK at the basepoint at its largest eigenvalue gap
    and keep the side closest to an invariant subspace."""
    w, V = np.linalg.eig(avg)
    order = np.argsort(w.real)
    w, V = w.real[order], V[:, order]
    if len(w) < 2:
        return None, None
    gaps = np.diff(w)
    cands = []
    # every split at a gap comparable to the largest one; ties are common
    splits = [k + 1 for k in np.flatnonzero(gaps >= 0.5 * gaps.max())]
    for B in [V[:, k:] for k in splits] + [V[:, :k] for k in splits]:
        B = sla.orth(B)
        angs = [float(np.max(principal_angles(B, s.basis))) for s in invariant_subspaces(v, B.shape[1]).isolated]
        cands.append((B, min(angs, default=np.pi / 2)))
    # both sides may be invariant (nested flags); the smaller one is the dominant candidate
    B, ang = min(cands, key=lambda c: (0, c[0].shape[1], c[1]) if c[1] < 1e-3 else (1, c[1], 0))
    return B, ang


def _twists(logs):
    """Joint unitary eigenbasis ``U`` of commuting frame logarithms and the
    rotation rate of every matrix entry in it, shape (n, r, r).

    Entries rotate with the imaginary parts of eigenvalue differences; when
    the logarithms are not jointly unitarily diagonalizable the twist is
    dropped."""
    r = logs[0].shape[0]
    rng = np.random.default_rng(0)
    C = sum(c * np.asarray(L, dtype=complex) for c, L in zip(rng.standard_normal(len(logs)), logs))
    _, U = sla.schur(C, output="complex")
    D = [dagger(U) @ L @ U for L in logs]
    scale = max(1.0, max(float(np.max(np.abs(L))) for L in logs))
    if max(float(np.max(np.abs(X - np.diag(np.diag(X))))) for X in D) > 1e-8 * scale:
        return np.eye(r), np.zeros((len(logs), r, r))
    alpha = np.array([np.diag(X).imag for X in D])
    return U, alpha[:, :, None] - alpha[:, None, :]


def _fd_symbol(m, ginv, twist=None):
    """Symbol of -g^{kl} D_k D_l for the 4th-order first difference, on
    modes ``exp(i(2πk + β)x)`` with entry twists β; shape grid + (r, r)."""
    N, n = m.N, m.dim
    th = 2 * np.pi * np.fft.fftfreq(N)
    if twist is None:
        twist = np.zeros((n, 1, 1))
    grids = np.meshgrid(*([th] * n), indexing="ij")
    s = [N * (8 * np.sin(t[..., None, None] + b / N) - np.sin(2 * (t[..., None, None] + b / N))) / 6
         for t, b in zip(grids, twist)]
    return sum(ginv[k, l] * s[k] * s[l] for k in range(n) for l in range(n))


class _Stepper:
    """One multiplicative step H <- H^½ exp(-dt S) H^½, either in the flat
    frame or, on tori with commuting monodromy, in the parallel frame P where
    every field is periodic and S can be preconditioned by (1 + dt σ)^-1 with
    σ the difference-Laplacian symbol."""

    def __init__(self, v, m, g, lam, scheme):
        self.m, self.g, self.lam, self.r = m, g, lam, v.rank
        if scheme == "auto":
            scheme = "preconditioned" if (m.kind == "torus" and v.commuting()) else "explicit"
        self.scheme = scheme
        if scheme == "preconditioned":
            from .degree import _frame, parallel_frame_logs

            P = _frame(parallel_frame_logs(v), m.dim)(m.points())
            self.P = np.asarray(P, dtype=complex)
            self.Pi = np.linalg.inv(self.P)
            ginv = np.mean(g.inverse.reshape(-1, m.dim, m.dim), axis=0)
            logs = parallel_frame_logs(v)
            self.U, twist = _twists(logs)
            # per matrix entry: grid + (r, r)
            self.sigma = _fd_symbol(m, ginv, twist)
            # exponential filter on the top modes: the odd-even mode of a
            # twisted field is not damped by the central stencil
            eta = np.abs(np.fft.fftfreq(m.N)) * 2
            grids = np.meshgrid(*([eta] * m.dim), indexing="ij")
            self.filt = np.prod([np.exp(-36.0 * e ** 16) for e in grids], axis=0)

    def evaluate(self, h):
        """Residual data at ``h``: (S, half power, ΛK, eigenvalues of H, residual, energy)."""
        LK = lambda_contract(chern_curvature(h), self.g)
        Y = LK - self.lam * np.eye(self.r)
        if self.scheme == "preconditioned":
            Q = herm(dagger(self.P) @ h.H @ self.P)
        else:
            Q = herm(h.H)
        wq, V = np.linalg.eigh(Q)
        if wq.min() <= 0:
            raise NonPositiveMetric("metric lost positivity")
        sq = (V * np.sqrt(wq)[..., None, :]) @ dagger(V)
        isq = (V * (1 / np.sqrt(wq))[..., None, :]) @ dagger(V)
        Yf = self.Pi @ Y @ self.P if self.scheme == "preconditioned" else Y
        S = herm(sq @ Yf @ isq)
        ev = np.linalg.eigvalsh(S)
        res = float(np.max(np.abs(ev)))
        dens = np.sum(ev ** 2, axis=-1) * np.sqrt(np.linalg.det(self.g.g))
        wH = wq if self.scheme == "explicit" else np.linalg.eigvalsh(herm(h.H))
        return S, sq, LK, wH, res, float(np.mean(dens))

    def step(self, S, sq, dt):
        if self.scheme == "preconditioned":
            n = self.m.dim
            ax = tuple(range(n))
            filt = self.filt[(...,) + (None, None)] / (1.0 + dt * self.sigma)
            S = dagger(self.U) @ S @ self.U
            S = np.fft.ifftn(np.fft.fftn(S, axes=ax) * filt, axes=ax)
            S = herm(self.U @ S @ dagger(self.U))
        Qn = herm(sq @ hexp(-dt * S) @ sq)
        if self.scheme == "preconditioned":
            return herm(dagger(self.Pi) @ Qn @ self.Pi)
        return Qn


def flow_run(v, d, g, H0=None, params=None, state=None, callback=None):
    """Run the heat flow from ``H0`` (or resume from ``state``).

    ``params``: dt, max_steps, tol, cond_limit, scheme ("auto", "explicit" or
    "preconditioned"), adaptive (grow dt by 1.25 after accepted steps),
    dt_max, cfl.
    """
    p = dict(DEFAULTS)
    p.update(params or {})
    m = d.manifold
    res_g = check_gauduchon(m, g)
    if res_g > GAUDUCHON_TOL:
        raise GauduchonFail(f"metric is not Gauduchon (residual {res_g:.2e})")
    if H0 is None:
        H0 = default_metric(v, m)
    H0.check()
    lam = einstein_constant(v, d, g, H0)
    r = v.rank
    stepper = _Stepper(v, m, g, lam, p["scheme"])
    adaptive = p["adaptive"] if p["adaptive"] is not None else stepper.scheme == "preconditioned"

    h = HermitianMetricField(m, v, herm(H0.H) if state is None else state.H, H0.func)
    S, sq, LK, w, res, E = stepper.evaluate(h)
    cond0 = _cond(np.linalg.eigvalsh(herm(H0.H)))
    if state is None:
        if p["dt"]:
            dt = p["dt"]
        elif stepper.scheme == "preconditioned":
            # keep the first exponent moderate; large steps seed top-mode noise
            dt = min(p["dt_precond"], 0.5 / (res + 1e-300))
        else:
            dt = min(0.2 / (res + 1.0), cfl_dt(g, m.N, p["cfl"]))
        state = FlowState(h.H, 0.0, 0, dt, [])
    dt = state.dt
    cond = _cond(w)
    if not state.history:
        state.history.append((0, 0.0, res, float(w.min()), float(w.max()), cond, E))
    tail = state.tail
    rejected = state.rejected
    verdict = "Undecided"
    confirm = state.confirm
    stalled = False
    while True:
        if res < p["tol"] and state.step == 0:
            # the initial metric already solves the equation
            verdict = "Converged"
            break
        if res < p["tol"]:
            # certify: the metric must stay put while the time doubles, which
            # separates true limits from the slow degeneration of
            # semistable bundles whose residual also tends to zero
            if confirm is None or cond > confirm[1] * (1 + p["confirm_rtol"]):
                confirm = (state.t, cond)
            elif state.t >= 2 * confirm[0] + p["confirm_time"]:
                verdict = "Converged"
                break
        else:
            confirm = None
        if cond / cond0 > p["cond_limit"]:
            verdict = "Diverged"
            break
        if state.step >= p["max_steps"]:
            break
        # one step, halving dt on blow-up or energy increase
        while True:
            hn = HermitianMetricField(m, v, stepper.step(S, sq, dt))
            try:
                out = stepper.evaluate(hn)
            except NonPositiveMetric:
                out = None
            # energy may only rise by its roundoff level (residual noise ~1e-10)
            if out is not None and out[4] <= 10 * res and (
                out[5] <= E * (1 + 1e-10) + 2e-10 * res + 1e-28 or out[4] < 1e-2 * p["tol"]
            ):
                break
            rejected += 1
            dt *= 0.5
            if dt < 1e-14:
                if confirm is not None:
                    # stuck at the roundoff floor below tol: the metric is stationary
                    stalled = True
                    break
                raise StepUnstable("step size underflow: residual keeps growing")
        if stalled:
            verdict = "Converged"
            break
        h = hn
        S, sq, LK, w, res, E = out
        state.H, state.step, state.t = hn.H, state.step + 1, state.t + dt
        if adaptive:
            dt = min(dt * 1.25, p["dt_max"])
        state.dt, state.rejected, state.confirm = dt, rejected, confirm
        cond = _cond(w)
        if state.step % p["record_every"] == 0:
            state.history.append((state.step, state.t, res, float(w.min()), float(w.max()), cond, E))
        tail.append(LK[(0,) * m.dim])
        if callback is not None:
            callback(state)
    state.dt, state.rejected, state.confirm = dt, rejected, confirm
    if state.history[-1][0] != state.step:
        state.history.append((state.step, state.t, res, float(w.min()), float(w.max()), cond, E))
    rep = FlowReport(verdict, state, h, res, cond / cond0, cond, lam=lam, rejected_steps=rejected)
    rep.scheme = stepper.scheme
    if verdict != "Converged" and r > 1:
        # time average over the last 10% of steps
        k = max(1, len(tail) // 10)
        avg = np.mean(tail[-k:], axis=0) if tail else LK[(0,) * m.dim]
        rep.destabilizing, rep.destabilizing_angle = _destabilizing(v, avg)
    return rep


def connection_distance(ha, hb):
    return float(np.max(np.abs(connection_form(ha).coeffs - connection_form(hb).coeffs)))


def uniqueness_check(v, d, g, H0a, H0b, params=None):
    ra = flow_run(v, d, g, H0a, params)
    rb = flow_run(v, d, g, H0b, params)
    if not (ra.converged and rb.converged):
        raise NotConverged(f"runs ended as {ra.verdict} and {rb.verdict}")
    return connection_distance(ra.metric, rb.metric)


def fixed_vectors(v, tol=1e-10):
    r = v.rank
    M = np.vstack([np.asarray(R) - np.eye(r) for R in v.mats])
    return sla.null_space(M, rcond=tol)


def flat_section_parallel_check(v, h, s=None):
    """sup |∇s| for the constant extension of a ρ-fixed vector ``s``."""
    if s is None:
        K = fixed_vectors(v)
        if K.shape[1] == 0:
            raise NoFlatSection("monodromy has no common fixed vector")
        s = K[:, 0]
    s = np.asarray(s, dtype=complex).ravel()
    s = s / np.linalg.norm(s)
    if max(float(np.max(np.abs(R @ s - s))) for R in v.mats) > 1e-10:
        raise NoFlatSection("vector is not fixed by the monodromy")
    A = connection_form(h).coeffs
    return float(np.max(np.abs(A @ s)))


# --------------------------------------------------------------------------
# trace and checkpoint I/O

TRACE_COLUMNS = ("step", "t", "residual", "min_eig", "max_eig", "cond", "energy")


def write_trace(report_or_state, path):
    st = report_or_state.state if isinstance(report_or_state, FlowReport) else report_or_state
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in st.history:
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def save_checkpoint(state, path, key=""):
    """Write a flow state to ``path`` (npz format, any file name)."""
    confirm = np.array(state.confirm if state.confirm is not None else (np.nan, np.nan))
    tail = np.asarray(state.tail) if state.tail else np.zeros((0,) + state.H.shape[-2:], dtype=state.H.dtype)
    with open(path, "wb") as fh:
        np.savez(fh, H=state.H, t=state.t, step=state.step, dt=state.dt, history=np.asarray(state.history),
                 confirm=confirm, rejected=state.rejected, tail=tail, key=np.array(key))


def load_checkpoint(path, key=None):
    """Read a flow state; None when ``key`` does not match the stored key."""
    with np.load(path, allow_pickle=False) as z:
        if key is not None and str(z["key"]) != key:
            return None
        hist = [tuple(row) for row in z["history"].tolist()]
        hist = [(int(r[0]),) + tuple(r[1:]) for r in hist]
        confirm = tuple(float(x) for x in z["confirm"])
        return FlowState(z["H"], float(z["t"]), int(z["step"]), float(z["dt"]), hist,
                         None if np.isnan(confirm[0]) else confirm, int(z["rejected"]), list(z["tail"]))
