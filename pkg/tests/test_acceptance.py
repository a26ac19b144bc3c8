"""Acceptance criteria 1 to 10.

Each test records one pass/fail line; the lines are printed in the pytest
terminal summary, and ``python3 tests/test_acceptance.py`` prints them too.
"""

import time

import numpy as np
import pytest

from flatbundles import (
    DegreeFunctional,
    HermitianMetricField,
    MetricField,
    Monodromy,
    PrincipalBundle,
    ReductiveGroupSpec,
    ad_bundle,
    admissible_metrics,
    bogomolov_ad,
    bogomolov_value,
    check_gauduchon,
    circle,
    classify,
    complexify_principal,
    connection_distance,
    dd_bar,
    default_metric,
    degree,
    dolbeault_d,
    dolbeault_dbar,
    equivalence_check,
    flat_section_parallel_check,
    flow_run,
    free_abelian,
    hn_filtration,
    hn_reduction,
    is_polystable_principal,
    is_semistable_principal,
    socle_reduction,
    tensor,
    torus,
    wedge,
    wedge_power,
)
from flatbundles.he_flow import fixed_vectors
from flatbundles.linalg import combos, principal_angles
from flatbundles.manifold import PQForm, function_form, integrate_over_nu, omega_power
from flatbundles.oracle import oracle_hn, random_commuting
from flatbundles.stability import Verdict

E = np.e
TWO_PI = 2 * np.pi
RESULTS = {}


def record(n, ok, detail, elapsed):
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f} s) {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


def max_angle(A, B):
    return float(np.max(principal_angles(A, B), initial=0.0))


def rot(a):
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def trig_field(m, rng, modes=3):
    x = m.points()
    out = np.zeros(m.shape)
    for _ in range(modes):
        k = rng.integers(-2, 3, size=m.dim)
        out += rng.standard_normal() * np.cos(TWO_PI * x @ k + rng.uniform(0, TWO_PI))
    return out


def random_form(m, p, q, rng):
    c = np.zeros(m.shape + (len(combos(m.dim, p)), len(combos(m.dim, q))))
    for a in range(c.shape[-2]):
        for b in range(c.shape[-1]):
            c[..., a, b] = trig_field(m, rng)
    return PQForm(m, p, q, c)


# --------------------------------------------------------------------------
# 1. calculus identities


def test_criterion_1_calculus_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in (2, 3):
        m = torus(n, 64)
        for p, q in ((0, 0), (1, 0), (0, 1)):
            f = random_form(m, p, q, rng)
            if p + 2 <= n:
                worst = max(worst, dolbeault_d(dolbeault_d(f)).sup())
            if q + 2 <= n:
                worst = max(worst, dolbeault_dbar(dolbeault_dbar(f)).sup())
            worst = max(worst, (dolbeault_d(dolbeault_dbar(f)) + dolbeault_dbar(dolbeault_d(f))).sup())
    errs = []
    for N in (32, 64):
        m = torus(2, N)
        x = m.points()
        f = np.exp(np.sin(TWO_PI * x[..., 0])) * np.cos(TWO_PI * x[..., 1])
        exact = TWO_PI * np.cos(TWO_PI * x[..., 0]) * f
        errs.append(np.abs(dolbeault_dbar(function_form(m, f)).coeffs[..., 0, 0] - exact).max())
    ratio = errs[0] / errs[1]
    el = time.perf_counter() - t0
    record(1, worst <= 1e-6 and ratio >= 8 and el < 10,
           f"max identity residual {worst:.1e} (tol 1e-6), 32->64 error ratio {ratio:.1f} (need >= 8)", el)


# --------------------------------------------------------------------------
# 2. Gauduchon mechanism


def test_criterion_2_gauduchon_mechanism():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    m2, m3 = torus(2, 32), torus(3, 16)

    def g_x(p):
        # a diagonal entry depending only on its own coordinate keeps the metric Gauduchon
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1 + 0.2 * np.sin(TWO_PI * p[..., 0])
        out[..., 1, 1] = 1.0
        return out

    metrics = [
        MetricField.constant_metric(m2, np.array([[1.0, 0.3], [0.3, 2.0]])),
        MetricField.from_function(m2, g_x),
        MetricField.constant_metric(m3, np.array([[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.0]])),
    ]
    worst, used = 0.0, 0
    for g in metrics:
        if check_gauduchon(g.manifold, g) > 1e-8:
            continue
        m = g.manifold
        wp = omega_power(m, g, m.dim - 1)
        for _ in range(20 // len(metrics) + 1):
            phi = function_form(m, trig_field(m, rng))
            worst = max(worst, abs(integrate_over_nu(wedge(dd_bar(phi), wp))))
            used += 1

    def g_bad(p):
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1 + 0.1 * np.sin(TWO_PI * p[..., 0])
        return out

    bad = check_gauduchon(m2, MetricField.from_function(m2, g_bad))
    el = time.perf_counter() - t0
    record(2, worst <= 1e-6 and used >= 20 and bad >= 1,
           f"{used} potentials, max |integral| {worst:.1e} (tol 1e-6), counterexample residual {bad:.2f} (need >= 1)", el)


# --------------------------------------------------------------------------
# 3. degree well-definedness


def test_criterion_3_degree_well_defined():
    t0 = time.perf_counter()
    m = torus(2, 64)
    gs = [MetricField.constant_metric(m, np.eye(2)), MetricField.constant_metric(m, np.array([[1.0, 0.3], [0.3, 2.0]]))]
    rng = np.random.default_rng(3)
    spread, biggest = 0.0, 0.0
    for k in range(10):
        v0, _ = random_commuting(rng, rank=int(rng.integers(1, 4)), ngens=2)
        v = Monodromy(v0.mats, m, "C")
        d = DegreeFunctional.numeric(m, gs[k % 2])
        vals = [degree(v, d, h) for h in admissible_metrics(v, 3, m, seed=10 * k)]
        spread = max(spread, max(vals) - min(vals))
        biggest = max(biggest, max(abs(x) for x in vals))
    el = time.perf_counter() - t0
    record(3, spread <= 1e-6 and biggest <= 1e-6,
           f"10 bundles x 3 metrics: max spread {spread:.1e}, max |deg| {biggest:.1e} (tol 1e-6)", el)


# --------------------------------------------------------------------------
# 4. HN correctness against the oracle


def test_criterion_4_hn_matches_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    bad, worst = 0, 0.0
    for _ in range(200):
        v, w = random_commuting(rng)
        d = DegreeFunctional.abstract(w)
        f = hn_filtration(v, d)
        ranks, bases, slopes = oracle_hn(v, w)
        ok = f.ranks == ranks and np.allclose(f.slopes, slopes, atol=1e-8)
        ok = ok and all(a > b for a, b in zip(f.slopes, f.slopes[1:]))
        if ok:
            ang = max(max_angle(A, B) for A, B in zip(f.bases, bases))
            worst = max(worst, ang)
            ok = ang <= 1e-8
        if ok:
            while True:
                G = rng.standard_normal((v.rank, v.rank)) + 1j * rng.standard_normal((v.rank, v.rank))
                if np.linalg.cond(G) < 30:
                    break
            fc = hn_filtration(v.conjugate(G), d)
            ok = fc.ranks == f.ranks and all(max_angle(G @ A, B) <= 1e-7 for A, B in zip(f.bases, fc.bases))
        bad += not ok
    el = time.perf_counter() - t0
    record(4, bad == 0 and el < 60,
           f"200 scenarios, {bad} mismatches, max principal angle {worst:.1e} (tol 1e-8)", el)


# --------------------------------------------------------------------------
# 5. tensor and exterior powers


def semistable_piece(rng, rank, group, w):
    v, _ = random_commuting(rng, rank=rank, ngens=group.ngens)
    g = hn_filtration(v, DegreeFunctional.abstract(w)).graded(0)
    return Monodromy(g.mats, group, v.field)


def test_criterion_5_tensor_and_exterior():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    unstable = 0
    for _ in range(100):
        group = free_abelian(int(rng.integers(1, 3)))
        w = list(rng.standard_normal(group.ngens))
        d = DegreeFunctional.abstract(w)
        a = semistable_piece(rng, int(rng.integers(1, 4)), group, w)
        b = semistable_piece(rng, int(rng.integers(1, min(3, 8 // a.rank) + 1)), group, w)
        assert classify(a, d).semistable and classify(b, d).semistable
        unstable += classify(tensor(a, b), d) is Verdict.UNSTABLE
    fails = 0
    for _ in range(30):
        r, ngens = int(rng.integers(2, 5)), int(rng.integers(1, 3))
        mod = np.exp(rng.standard_normal(ngens))
        mats = [np.diag(s * np.exp(1j * rng.uniform(0, TWO_PI, r))) for s in mod]
        G = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
        v = Monodromy([G @ M @ np.linalg.inv(G) for M in mats], free_abelian(ngens), "C")
        d = DegreeFunctional.abstract(list(rng.standard_normal(ngens)))
        assert classify(v, d).polystable
        fails += not all(classify(wedge_power(v, j), d).polystable for j in range(1, r + 1))
    el = time.perf_counter() - t0
    record(5, unstable == 0 and fails == 0,
           f"100 tensor pairs, {unstable} unstable; 30 polystable bundles, {fails} with a non-polystable wedge", el)


# --------------------------------------------------------------------------
# 6-8. Hermitian-Einstein flow


def curated_polystable():
    t2, s1 = torus(2, 64), circle(64)
    g2 = MetricField.constant_metric(t2, np.array([[1.0, 0.3], [0.3, 2.0]]))
    g1 = MetricField.constant_metric(s1, np.eye(1))
    d2, d1 = DegreeFunctional.numeric(t2, g2), DegreeFunctional.numeric(s1, g1)
    return [
        ("trivial over T2", Monodromy([np.eye(2), np.eye(2)], t2), d2, g2),
        ("unitary rank 2 over Z2", Monodromy([rot(np.pi / 2).astype(complex), rot(np.pi / 3).astype(complex)], t2, "C"),
         d2, g2),
        ("diag(e, e^2) over S1", Monodromy([np.diag([E, E**2])], s1), d1, g1),
        ("SL2 diag(e, 1/e) over S1", Monodromy([np.diag([E, 1 / E])], s1), d1, g1),
        ("diag(1, e) over S1", Monodromy([np.diag([1.0, E])], s1), d1, g1),
    ]


@pytest.fixture(scope="module")
def he_runs():
    runs = []
    for name, v, d, g in curated_polystable():
        t0 = time.perf_counter()
        a = flow_run(v, d, g, default_metric(v, seed=11, amp=0.3))
        b = flow_run(v, d, g, default_metric(v, seed=12, amp=0.3))
        runs.append((name, v, d, g, a, b, (time.perf_counter() - t0) / 2))
    return runs


def test_criterion_6_he_converse(he_runs):
    t0 = time.perf_counter()
    lines, ok = [], True
    for name, v, d, g, a, b, sec in he_runs[:4]:
        good = a.converged and a.residual < 1e-6 and a.state.step <= 20000 and sec < 300
        ok &= good
        lines.append(f"{name}: {a.verdict} res {a.residual:.1e} in {a.state.step} steps")
    # closed form for diag(e, e^2): H = diag(e^-2x, e^-4x) up to constants per block
    _, v, d, g, a, _, _ = he_runs[2]
    x = g.manifold.points()[..., 0]
    exact = HermitianMetricField(g.manifold, v, np.stack([np.diag([np.exp(-2 * t), np.exp(-4 * t)]) for t in x]))
    dist = connection_distance(a.metric, exact)
    ok &= dist < 1e-5
    el = time.perf_counter() - t0 + sum(r[-1] for r in he_runs[:4])
    record(6, ok, "; ".join(lines) + f"; closed-form connection distance {dist:.1e} (tol 1e-5)", el)


def curated_non_polystable():
    s1 = circle(64)
    g1 = MetricField.constant_metric(s1, np.eye(1))
    d1 = DegreeFunctional.numeric(s1, g1)
    unip = PrincipalBundle(ReductiveGroupSpec("SL", 2), [np.array([[1.0, 1.0], [0.0, 1.0]])], s1)
    return d1, g1, [
        ("Jordan rank 2", Monodromy([np.array([[1.0, 1.0], [0.0, 1.0]])], s1)),
        ("Jordan rank 3", Monodromy([np.eye(3) + np.eye(3, k=1)], s1)),
        ("unipotent SL2 (ad)", ad_bundle(unip)),
    ]


def test_criterion_7_he_forward_guard():
    t0 = time.perf_counter()
    d, g, cases = curated_non_polystable()
    ok, lines = True, []
    for name, v in cases:
        for seed, amp in ((None, 0.0), (3, 0.2)):
            rep = flow_run(v, d, g, default_metric(v, seed=seed, amp=amp))
            e1 = np.eye(v.rank)[:, :1]
            ang = max_angle(rep.destabilizing, e1) if rep.destabilizing is not None else np.inf
            good = not rep.converged and rep.cond_growth >= 1e6 and ang <= 1e-4
            ok &= good
            lines.append(f"{name}: {rep.verdict} cond {rep.cond_growth:.1e} angle {ang:.0e}")
    # the principal bundle itself is rejected before any flow
    e = PrincipalBundle(ReductiveGroupSpec("SL", 2), [np.array([[1.0, 1.0], [0.0, 1.0]])], g.manifold)
    ok &= not is_polystable_principal(e, d)
    el = time.perf_counter() - t0
    record(7, ok, "; ".join(lines[::2]), el)


def test_criterion_8_uniqueness(he_runs):
    t0 = time.perf_counter()
    ok, worst, flat = True, 0.0, []
    for name, v, d, g, a, b, _ in he_runs:
        ok &= a.converged and b.converged
        dist = connection_distance(a.metric, b.metric)
        worst = max(worst, dist)
        if fixed_vectors(v).shape[1]:
            res = flat_section_parallel_check(v, a.metric)
            flat.append(res)
    ok &= worst < 1e-5 and len(flat) >= 2 and max(flat) < 1e-5
    el = time.perf_counter() - t0
    record(8, ok, f"max distance between two random starts {worst:.1e} (tol 1e-5); "
                  f"flat-section residuals {', '.join(f'{r:.1e}' for r in flat)} (tol 1e-5)", el)


# --------------------------------------------------------------------------
# 9. oddity and real forms


def random_principal(rng, field="C"):
    family = str(rng.choice(["SL", "GL"]))
    s = ReductiveGroupSpec(family, 2, field)
    ngens = int(rng.integers(1, 3))
    real = field == "R"
    kind = int(rng.integers(4))
    while True:
        G = rng.standard_normal((2, 2)) + (0 if real else 1j * rng.standard_normal((2, 2)))
        if np.linalg.cond(G) < 20:
            break
    mats = []
    for _ in range(ngens):
        phase = 1.0 if real else np.exp(1j * rng.uniform(0, TWO_PI))
        if kind == 0:
            M = np.diag(np.exp(rng.standard_normal(2)) * (1 if real else np.exp(1j * rng.uniform(0, TWO_PI, 2))))
        elif kind == 1:
            M = np.exp(rng.standard_normal()) * phase * np.array([[1.0, rng.standard_normal()], [0.0, 1.0]])
        elif kind == 2:
            M = np.exp(rng.standard_normal()) * phase * np.eye(2)
        else:
            M = np.exp(rng.standard_normal()) * rot(rng.uniform(0.2, 3.0))
        if family == "SL":
            M = M / np.sqrt(np.linalg.det(M) + 0j)
            if real:
                M = M.real
        mats.append(G @ M @ np.linalg.inv(G))
    if real:
        mats = [np.real(M) for M in mats]
    return PrincipalBundle(s, mats, free_abelian(ngens)), DegreeFunctional.abstract(list(rng.standard_normal(ngens)))


def test_criterion_9_oddity_and_real_forms():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    odd_fail, cert = 0, 0.0
    for _ in range(100):
        e, d = random_principal(rng)
        reps = [hn_reduction(e, d)]
        if is_semistable_principal(e, d):
            reps.append(socle_reduction(e, d))
        odd_fail += any(r.length % 2 == 0 for r in reps)
        cert = max(cert, *(max(r.invariance_residual, r.closure_residual) for r in reps))
    eq_fail = 0
    for _ in range(50):
        e, d = random_principal(rng, "R")
        ec = complexify_principal(e)
        same = (is_semistable_principal(e, d) == is_semistable_principal(ec, d)
                and is_polystable_principal(e, d) == is_polystable_principal(ec, d))
        eq_fail += not (same and equivalence_check(e, d)["agree"])
    el = time.perf_counter() - t0
    record(9, odd_fail == 0 and eq_fail == 0 and cert <= 1e-9,
           f"100 principal scenarios, {odd_fail} even lengths, max certificate residual {cert:.1e}; "
           f"50 real forms, {eq_fail} disagreements", el)


# --------------------------------------------------------------------------
# 10. Bogomolov


def test_criterion_10_bogomolov():
    t0 = time.perf_counter()
    t2 = torus(2, 64)
    g = MetricField.constant_metric(t2, np.array([[1.0, 0.3], [0.3, 2.0]]))
    d = DegreeFunctional.numeric(t2, g)
    cases = [
        Monodromy([np.eye(2), np.eye(2)], t2),
        Monodromy([rot(np.pi / 2).astype(complex), rot(np.pi / 3).astype(complex)], t2, "C"),
        Monodromy([np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2)], t2),
        Monodromy([np.diag([E, 1 / E]), np.diag([2.0, 0.5])], t2),
    ]
    ok, lo, spread, cross = True, np.inf, 0.0, 0.0
    for v in cases:
        rep = bogomolov_value(v, g, d, h=default_metric(v, seed=5, amp=0.3))
        lo, spread = min(lo, rep.value), max(spread, rep.spread)
        cross = max(cross, abs(rep.graded_sum - rep.value))
    c1sq = 0.0
    for mats in ([np.diag([1j, -1j]), np.diag([np.exp(0.5j), np.exp(-0.5j)])],
                 [np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2)]):
        rep = bogomolov_ad(PrincipalBundle(ReductiveGroupSpec("SL", 2), mats, t2), g, samples=5)
        c1sq = max(c1sq, max(abs(c) for c in rep.c1_squared))
    ok = lo >= -1e-6 and spread < 1e-6 and cross <= 1e-5 and c1sq <= 1e-6
    el = time.perf_counter() - t0
    record(10, ok, f"min value {lo:.1e} (>= -1e-6), spread {spread:.1e} (< 1e-6), graded difference {cross:.1e} "
                   f"(<= 1e-5), max |c1(ad)^2| {c1sq:.1e} (<= 1e-6)", el)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
