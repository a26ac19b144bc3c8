"""Command-line front end: ``flatbundles <command> --scenario FILE --out DIR``."""

import argparse
import json
import os
import sys
import time
import warnings

import numpy as np
from filelock import FileLock

from . import he_flow
from .errors import FlatBundleError, HeuristicSearchIncomplete, ParseError, ValidationError
from .scenario import load_scenario

CONVENTIONS = {
    "c1": "c1(h) = -∂∂̄ log det H = tr R, R = ∂̄(H^-1 ∂H); no 2π factors",
    "c2": "c2(h) = ½(tr R ∧ tr R - tr(R ∧ R)); no 2π factors",
    "dbar_sign": "∂̄ of a (p,q)-form inserts the new index first in the second group with sign (-1)^p",
    "contraction": "ΛK = g^{kl} R_kl",
    "einstein_constant": "λ = deg / ((n-1)! r ∫ det g dx)",
    "degree": "deg = ∫ c1(h) ∧ ω^(n-1) / ν; abstract mode: Σ w_i log|det ρ(γ_i)|",
    "slope_tolerance": "1e-9 * max(1, |δ0|)",
}

COMMANDS = {
    "check-manifold": "CheckManifold",
    "degree": "Degree",
    "classify": "Classify",
    "hn": "HN",
    "socle": "Socle",
    "he-solve": "HESolve",
    "bogomolov": "Bogomolov",
    "oracle": "Oracle",
}
PRINCIPAL = {
    "classify": "PrincipalClassify",
    "hn": "PrincipalHN",
    "socle": "PrincipalSocle",
    "he": "PrincipalHE",
    "bogomolov": "PrincipalBogomolov",
    "equivalence": "PrincipalEquivalence",
}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.complexfloating, complex)):
        return {"re": float(x.real), "im": float(x.imag)}
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _mat(B):
    B = np.asarray(B)
    if np.iscomplexobj(B) and np.abs(B.imag).max(initial=0) > 0:
        return {"re": B.real.tolist(), "im": B.imag.tolist()}
    return np.real(B).tolist()


# --------------------------------------------------------------------------
# tasks


def task_check_manifold(sc, ctx):
    from .manifold import check_astheno, check_gauduchon, validate_manifold

    if sc.manifold is None:
        return {"abstract_group": repr(sc.group), "generators": sc.group.ngens}
    rep = validate_manifold(sc.manifold, raise_on_error=False)
    out = {
        "valid": rep.valid,
        "kind": sc.manifold.kind,
        "dim": sc.manifold.dim,
        "det_deviations": rep.det_deviations,
        "relation_residuals": rep.relation_residuals,
        "error": rep.error,
        "gauduchon_residual": check_gauduchon(sc.manifold, sc.metric),
        "metric": sc.metric.validate(),
    }
    if sc.manifold.dim >= 2:
        out["astheno_residual"] = check_astheno(sc.manifold, sc.metric)
    return out


def task_degree(sc, ctx):
    from .degree import admissible_metrics, degree

    v, d = sc.bundle, sc.degree
    out = {"mode": d.mode, "rank": v.rank, "degree": degree(v, d)}
    out["slope"] = out["degree"] / v.rank
    if d.mode == "numeric":
        k = int(sc.params.get("samples", 3))
        vals = [degree(v, d, h) for h in admissible_metrics(v, k, sc.manifold, seed=sc.seed)]
        out["sampled_degrees"] = vals
        out["spread"] = max(vals + [out["degree"]]) - min(vals + [out["degree"]])
        out["tolerance"] = 1e-6
    return out


def task_classify(sc, ctx):
    from .stability import stability_report

    return stability_report(sc.bundle, sc.degree)


def task_hn(sc, ctx):
    from .stability import hn_filtration

    return hn_filtration(sc.bundle, sc.degree).to_dict()


def task_socle(sc, ctx):
    from .stability import socle, socle_filtration

    S = socle(sc.bundle, sc.degree)
    return {"socle_rank": S.rank, "socle_basis": _mat(S.basis),
            "filtration": socle_filtration(sc.bundle, sc.degree).to_dict()}


def _flow_params(sc):
    return {k: v for k, v in sc.params.items() if k in he_flow.DEFAULTS}


def task_he_solve(sc, ctx):
    from .degree import default_metric

    v, d, g = sc.bundle, sc.degree, sc.metric
    H0 = default_metric(v, sc.manifold, seed=sc.seed, amp=float(sc.params.get("amp", 0.0)))
    ckpt = os.path.join(ctx["out"], "checkpoint.bin")
    lock = FileLock(ckpt + ".lock")
    key = sc.resume_key
    state = None
    if ctx["resume"] and os.path.exists(ckpt):
        with lock:
            state = he_flow.load_checkpoint(ckpt, key)
    every = int(sc.params.get("checkpoint_every", 25))

    def save(st):
        with lock:
            he_flow.save_checkpoint(st, ckpt, key)

    def callback(st):
        if st.step % every == 0:
            save(st)

    rep = he_flow.flow_run(v, d, g, H0, _flow_params(sc), state=state, callback=callback)
    save(rep.state)
    he_flow.write_trace(rep, os.path.join(ctx["out"], "trace.csv"))
    out = rep.summary()
    out["resumed"] = state is not None
    out["scheme"] = rep.scheme
    out["tolerance"] = _flow_params(sc).get("tol", he_flow.DEFAULTS["tol"])
    if rep.converged and he_flow.fixed_vectors(v).shape[1]:
        out["flat_section_residual"] = he_flow.flat_section_parallel_check(v, rep.metric)
    ctx["artifacts"] = {"trace": "trace.csv", "checkpoint": "checkpoint.bin"}
    return out


def task_bogomolov(sc, ctx):
    from .chern import bogomolov_value

    rep = bogomolov_value(sc.bundle, sc.metric, sc.degree, samples=int(sc.params.get("samples", 3)),
                          seed=sc.seed)
    out = rep.to_dict()
    out["tolerance"] = 1e-6
    return out


def task_principal_classify(sc, ctx):
    from .principal import ad_bundle
    from .stability import classify

    e = sc.principal
    verdict = classify(ad_bundle(e), sc.degree)
    return {"group": e.spec.name, "ad_rank": e.spec.dim, "ad_verdict": verdict.value,
            "semistable": verdict.semistable, "polystable": verdict.polystable}


def task_principal_hn(sc, ctx):
    from .principal import hn_reduction

    return hn_reduction(sc.principal, sc.degree).to_dict()


def task_principal_socle(sc, ctx):
    from .principal import socle_reduction

    return socle_reduction(sc.principal, sc.degree).to_dict()


def task_principal_he(sc, ctx):
    from .principal import he_structure_principal

    return he_structure_principal(sc.principal, sc.degree, sc.metric, _flow_params(sc)).to_dict()


def task_principal_bogomolov(sc, ctx):
    from .chern import bogomolov_ad

    return bogomolov_ad(sc.principal, sc.metric, seed=sc.seed).to_dict()


def task_principal_equivalence(sc, ctx):
    from .principal import equivalence_check

    return equivalence_check(sc.principal, sc.degree)


def task_oracle(sc, ctx):
    from .linalg import principal_angles
    from .oracle import oracle_classify, oracle_hn, oracle_socle
    from .stability import classify, hn_filtration

    v, w = sc.bundle, sc.weights
    ranks, bases, slopes = oracle_hn(v, w)
    main = hn_filtration(v, sc.degree)
    same = main.ranks == ranks
    angle = max(float(principal_angles(a, b).max()) for a, b in zip(main.bases, bases)) if same else None
    verdict = oracle_classify(v, w)
    out = {
        "oracle": {"ranks": ranks, "slopes": slopes, "bases": [_mat(B) for B in bases], "verdict": verdict},
        "main": {"ranks": main.ranks, "slopes": main.slopes, "verdict": classify(v, sc.degree).value},
        "max_angle": angle,
        "angle_tolerance": 1e-8,
    }
    if verdict != "Unstable":
        out["oracle"]["socle_rank"] = int(oracle_socle(v).shape[1])
    out["agree"] = bool(same and angle <= 1e-8 and out["main"]["verdict"] == verdict)
    return out


TASK_FUNCS = {
    "CheckManifold": task_check_manifold,
    "Degree": task_degree,
    "Classify": task_classify,
    "HN": task_hn,
    "Socle": task_socle,
    "HESolve": task_he_solve,
    "Bogomolov": task_bogomolov,
    "PrincipalClassify": task_principal_classify,
    "PrincipalHN": task_principal_hn,
    "PrincipalSocle": task_principal_socle,
    "PrincipalHE": task_principal_he,
    "PrincipalBogomolov": task_principal_bogomolov,
    "PrincipalEquivalence": task_principal_equivalence,
    "Oracle": task_oracle,
}


def run(scenario_path, out_dir=".", task=None, grid=None, seed=None, resume=False):
    """Run one scenario and write ``report.json`` into ``out_dir``; returns the report."""
    t0 = time.perf_counter()
    sc = load_scenario(scenario_path, grid=grid, seed=seed, task=task)
    os.makedirs(out_dir, exist_ok=True)
    ctx = {"out": out_dir, "resume": resume, "artifacts": {}}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HeuristicSearchIncomplete)
        result = TASK_FUNCS[sc.task](sc, ctx)
    heuristic = any(issubclass(w.category, HeuristicSearchIncomplete) for w in caught)
    report = {
        "scenario_hash": sc.hash,
        "task": sc.task,
        "seed": sc.seed,
        "grid": sc.manifold.N if sc.manifold is not None else None,
        "conventions": CONVENTIONS,
        "certification": {"search": "heuristic" if heuristic else "complete"},
        "result": _jsonable(result),
        "artifacts": {"report": "report.json", **ctx["artifacts"]},
        "timing": {"seconds": time.perf_counter() - t0},
    }
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return report


def _verdict_line(report):
    r = report["result"]
    for k in ("verdict", "ad_verdict"):
        if isinstance(r, dict) and k in r:
            return f"{report['task']}: {r[k]}"
    return f"{report['task']}: done"


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--grid", type=int, help="override the grid size N")
    common.add_argument("--seed", type=int, help="override the random seed")
    common.add_argument("--resume", action="store_true", help="resume a flow from checkpoint.bin")

    p = argparse.ArgumentParser(prog="flatbundles", description="Stability and Hermitian-Einstein metrics of flat bundles")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the task named in the scenario")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    pp = sub.add_parser("principal", help="principal-bundle tasks")
    psub = pp.add_subparsers(dest="sub", required=True)
    for name in PRINCIPAL:
        psub.add_parser(name, parents=[common])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        task = None
    elif args.command == "principal":
        task = PRINCIPAL[args.sub]
    else:
        task = COMMANDS[args.command]
    try:
        report = run(args.scenario, args.out, task, args.grid, args.seed, args.resume)
    except (ParseError, ValidationError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except FlatBundleError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(_verdict_line(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
