"""Second Chern forms and the Bogomolov-type integral.

With ``R = chern_curvature(h)`` and ``c1 = tr R``,
``c2 = ½(tr R ∧ tr R - tr(R ∧ R))`` and the Bogomolov density is

    2r c2 - (r-1) c1² = c1² - r tr(R ∧ R),

wedged with ``ω^(d-2)``. For Hermitian-Einstein metrics on surfaces it is
pointwise nonnegative (it is a sum of squares of the trace-free curvature).
"""

from dataclasses import dataclass, field

import numpy as np

from .degree import admissible_metrics, default_metric
from .errors import AsthenoFail, DimensionTooSmall, NotSemistable
from .he_flow import chern_curvature
from .manifold import GAUDUCHON_TOL, check_astheno, integrate_over_nu, omega_power, trace_form, wedge

BOGOMOLOV_TOL = 1e-6


def second_chern_form(h):
    if h.manifold.dim < 2:
        raise DimensionTooSmall("c2 needs dimension at least 2")
    R = chern_curvature(h)
    trR = trace_form(R)
    return 0.5 * (wedge(trR, trR) - trace_form(wedge(R, R)))


def _bogomolov_form(h):
    R = chern_curvature(h)
    trR = trace_form(R)
    return wedge(trR, trR) - h.rank * trace_form(wedge(R, R))


def bogomolov_density(h, g):
    """Top coefficient of (2r c2 - (r-1) c1²) ∧ ω^(d-2) on the grid."""
    m = h.manifold
    if m.dim < 2:
        raise DimensionTooSmall("the Bogomolov integral needs dimension at least 2")
    form = _bogomolov_form(h)
    if m.dim > 2:
        form = wedge(form, omega_power(m, g, m.dim - 2))
    return np.real(form.top())


def bogomolov_integral(h, g):
    return float(np.mean(bogomolov_density(h, g)) * h.manifold.volume)


def c1_squared_integral(h, g):
    m = h.manifold
    trR = trace_form(chern_curvature(h))
    form = wedge(trR, trR)
    if m.dim > 2:
        form = wedge(form, omega_power(m, g, m.dim - 2))
    return float(np.real(integrate_over_nu(form)))


def c2_integral(h, g):
    m = h.manifold
    form = second_chern_form(h)
    if m.dim > 2:
        form = wedge(form, omega_power(m, g, m.dim - 2))
    return float(np.real(integrate_over_nu(form)))


@dataclass
class BogomolovReport:
    value: float
    values: list
    spread: float
    astheno_residual: float
    density_min: float
    verdict: str
    graded_sum: float = None
    graded_values: list = field(default=None)
    c1_squared: list = field(default=None)

    def to_dict(self):
        out = {
            "value": self.value,
            "values": list(self.values),
            "spread": self.spread,
            "astheno_residual": self.astheno_residual,
            "density_min": self.density_min,
            "verdict": self.verdict,
        }
        if self.graded_sum is not None:
            out["graded_sum"] = self.graded_sum
            out["graded_values"] = list(self.graded_values)
            out["graded_difference"] = abs(self.graded_sum - self.value)
        if self.c1_squared is not None:
            out["c1_squared"] = list(self.c1_squared)
        return out


def _check_astheno(m, g):
    res = check_astheno(m, g)
    if res > GAUDUCHON_TOL:
        raise AsthenoFail(f"metric is not astheno-Kähler (residual {res:.2e})")
    return res


def _graded_sum(v, d_fun, h, g):
    from .stability import socle_filtration

    filt = socle_filtration(v, d_fun, h if d_fun.mode == "numeric" else None)
    vals = []
    prev = None
    for B in filt.bases:
        piece = h.restricted(B)
        if prev is not None:
            piece = piece.quotient(B.conj().T @ prev)
        vals.append(bogomolov_integral(piece, g))
        prev = B
    return float(sum(vals)), vals


def bogomolov_value(v, g, d_fun, h=None, samples=3, seed=0, amp=0.3, cross_check=True):
    """Evaluate ∫ (2r c2 - (r-1) c1²) ω^(d-2)/ν for a semistable flat bundle."""
    from .stability import classify

    m = g.manifold
    if m.dim < 2:
        raise DimensionTooSmall("the Bogomolov integral needs dimension at least 2")
    ares = _check_astheno(m, g)
    if not classify(v, d_fun).semistable:
        raise NotSemistable("Bogomolov inequality is stated for semistable bundles")
    h = h if h is not None else default_metric(v, m)
    metrics = [h] + admissible_metrics(v, samples, m, amp=amp, seed=seed)
    values = [bogomolov_integral(k, g) for k in metrics]
    value = values[0]
    dmin = float(np.min(bogomolov_density(h, g)))
    spread = float(max(values) - min(values))
    verdict = "pass" if value >= -BOGOMOLOV_TOL and ares <= GAUDUCHON_TOL else "fail"
    rep = BogomolovReport(value, values, spread, ares, dmin, verdict)
    if cross_check:
        rep.graded_sum, rep.graded_values = _graded_sum(v, d_fun, h, g)
    return rep


def bogomolov_ad(e, g, samples=10, seed=0, amp=0.3):
    """∫ c2(ad) ω^(d-2)/ν for a semistable principal bundle, with the
    self-duality check ∫ c1(ad)² ω^(d-2)/ν ≈ 0 over sampled metrics."""
    from .degree import DegreeFunctional
    from .principal import ad_bundle, is_semistable_principal

    m = g.manifold
    if m.dim < 2:
        raise DimensionTooSmall("the Bogomolov integral needs dimension at least 2")
    ares = _check_astheno(m, g)
    if not is_semistable_principal(e, DegreeFunctional.numeric(m, g)):
        raise NotSemistable("principal bundle is not semistable")
    ad = ad_bundle(e)
    metrics = [default_metric(ad, m)] + admissible_metrics(ad, samples - 1, m, amp=amp, seed=seed)
    values = [c2_integral(k, g) for k in metrics]
    c1sq = [c1_squared_integral(k, g) for k in metrics]
    dmin = float(np.min(bogomolov_density(metrics[0], g)))
    ok = values[0] >= -BOGOMOLOV_TOL and max(abs(x) for x in c1sq) <= BOGOMOLOV_TOL and ares <= GAUDUCHON_TOL
    return BogomolovReport(values[0], values, float(max(values) - min(values)), ares, dmin,
                           "pass" if ok else "fail", c1_squared=c1sq)
