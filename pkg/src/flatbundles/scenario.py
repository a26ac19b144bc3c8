"""Scenario files: a single JSON document describing one computation.

Example::

    {
      "task": "HESolve",
      "manifold": {"type": "circle"},
      "grid": 64,
      "bundle": {"field": "R", "generators": [[["exp(1)", 0], [0, "exp(2)"]]]},
      "degree": {"mode": "numeric"},
      "metric": [["1"]],
      "params": {"tol": 1e-6}
    }

Matrix entries are numbers, constant expressions, or ``[re, im]`` pairs.
Metric entries may depend on ``x1 .. xn``. Principal bundles use
``"principal": {"group": "SL", "r": 2, "field": "C", "generators": [...]}``.
"""

import copy
import hashlib
import json
import json.decoder
import json.scanner
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError
from .expr import parse_expression
from .flat_rep import AbstractGroup, Monodromy
from .manifold import AffineManifold, MetricField, circle, heisenberg, torus, validate_manifold

TASKS = (
    "CheckManifold", "Degree", "Classify", "HN", "Socle", "HESolve", "Bogomolov",
    "PrincipalClassify", "PrincipalHN", "PrincipalSocle", "PrincipalHE", "PrincipalBogomolov",
    "PrincipalEquivalence", "Oracle",
)
NUMERIC_TASKS = ("HESolve", "Bogomolov", "PrincipalHE", "PrincipalBogomolov")
# budget parameters do not change the trajectory, so they are left out of resume keys
BUDGET_PARAMS = ("max_steps", "checkpoint_every")


# --------------------------------------------------------------------------
# JSON with source positions


class _Positions:
    def __init__(self, text):
        self.text = text
        self.pos = {}

    def line_col(self, idx):
        line = self.text.count("\n", 0, idx) + 1
        col = idx - (self.text.rfind("\n", 0, idx) + 1) + 1
        return line, col

    def of(self, obj):
        idx = self.pos.get(id(obj))
        return (None, None) if idx is None else self.line_col(idx)


def load_json(text, path=None):
    """Parse JSON and remember where every array and object starts."""
    pos = _Positions(text)
    dec = json.JSONDecoder()
    arr, obj = dec.parse_array, dec.parse_object

    def parse_array(s_end, scan_once):
        val, end = arr(s_end, scan_once)
        pos.pos[id(val)] = s_end[1] - 1
        return val, end

    def parse_object(s_end, *args):
        val, end = obj(s_end, *args)
        pos.pos[id(val)] = s_end[1] - 1
        return val, end

    dec.parse_array, dec.parse_object = parse_array, parse_object
    dec.scan_once = json.scanner.py_make_scanner(dec)
    try:
        doc = dec.decode(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno, path) from None
    return doc, pos


# --------------------------------------------------------------------------


@dataclass
class Scenario:
    doc: dict
    task: str
    manifold: object = None
    group: object = None
    bundle: Monodromy = None
    principal: object = None
    degree: object = None
    metric: MetricField = None
    params: dict = field(default_factory=dict)
    seed: int = 0
    path: str = None

    @property
    def hash(self):
        return scenario_hash(self.doc)

    @property
    def resume_key(self):
        doc = copy.deepcopy(self.doc)
        for k in BUDGET_PARAMS:
            doc.get("params", {}).pop(k, None)
        return scenario_hash(doc)

    @property
    def weights(self):
        return None if self.degree is None or self.degree.mode != "abstract" else list(self.degree.weights)


def scenario_hash(doc):
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


class _Reader:
    def __init__(self, pos, path):
        self.pos, self.path = pos, path

    def fail(self, obj, msg):
        line, col = self.pos.of(obj)
        raise ParseError(msg, line, col, self.path)

    def number(self, x, where, ctx):
        if isinstance(x, bool):
            self.fail(ctx, f"{where}: booleans are not numbers")
        if isinstance(x, (int, float)):
            return complex(x)
        if isinstance(x, str):
            e = parse_expression(x, 0, self.path)
            if not e.constant:
                self.fail(ctx, f"{where}: matrix entries must be constant")
            return complex(e(np.zeros((0,))))
        if isinstance(x, list) and len(x) == 2:
            return complex(self.number(x[0], where, x).real, self.number(x[1], where, x).real)
        self.fail(ctx, f"{where}: entry {x!r} is not a number, expression or [re, im] pair")

    def matrix(self, M, where, size=None):
        if not isinstance(M, list) or not M or not all(isinstance(row, list) for row in M):
            self.fail(M, f"{where}: a matrix is a non-empty list of rows")
        n = len(M)
        for row in M:
            if len(row) != n:
                self.fail(row, f"{where}: matrix is not square ({n} rows, a row of length {len(row)})")
        if size is not None and n != size:
            self.fail(M, f"{where}: expected a {size}x{size} matrix, got {n}x{n}")
        A = np.array([[self.number(x, where, row) for x in row] for row in M])
        return A.real.copy() if np.all(A.imag == 0) else A

    def matrices(self, L, where):
        if not isinstance(L, list) or not L:
            self.fail(L, f"{where}: expected a non-empty list of matrices")
        out = [self.matrix(M, f"{where}[{i}]") for i, M in enumerate(L)]
        if len({A.shape for A in out}) > 1:
            self.fail(L, f"{where}: matrices of different sizes")
        return out


def _manifold(rd, spec, N):
    if not isinstance(spec, dict) or "type" not in spec:
        rd.fail(spec, "manifold: expected an object with a 'type'")
    kind = spec["type"]
    if kind == "torus":
        dim = spec.get("dim", 2)
        if not isinstance(dim, int) or dim < 1:
            rd.fail(spec, "manifold.dim must be a positive integer")
        return torus(dim, N), None
    if kind == "circle":
        return circle(N), None
    if kind == "heisenberg":
        return heisenberg(N), None
    if kind == "affine":
        gens = spec.get("generators")
        if not isinstance(gens, list) or not gens:
            rd.fail(spec, "manifold.generators: expected a list of {A, b}")
        out = []
        for i, gdef in enumerate(gens):
            if not isinstance(gdef, dict) or "A" not in gdef or "b" not in gdef:
                rd.fail(gdef, f"manifold.generators[{i}]: expected keys A and b")
            A = rd.matrix(gdef["A"], f"manifold.generators[{i}].A").real
            b = gdef["b"]
            if not isinstance(b, list) or len(b) != A.shape[0]:
                rd.fail(gdef, f"manifold.generators[{i}].b must have length {A.shape[0]}")
            out.append((A, np.array([rd.number(x, "b", b).real for x in b])))
        m = AffineManifold(out, N, spec.get("relators"), spec.get("name"))
        return m, None
    if kind == "abstract":
        k = spec.get("generators")
        if not isinstance(k, int) or k < 1:
            rd.fail(spec, "manifold.generators must be a positive integer for abstract groups")
        rel = spec.get("relators")
        if rel is None and spec.get("abelian", True):
            rel = [[i, j, -i, -j] for i in range(1, k + 1) for j in range(i + 1, k + 1)]
        return None, AbstractGroup(k, rel or [], spec.get("name"))
    rd.fail(spec, f"manifold: unknown type {kind!r}")


def _metric(rd, spec, m):
    n = m.dim
    if spec is None:
        return MetricField.constant_metric(m, np.eye(n))
    if not isinstance(spec, list) or len(spec) != n or any(not isinstance(r, list) or len(r) != n for r in spec):
        rd.fail(spec, f"metric: expected a {n}x{n} matrix of expressions")
    exprs = [[parse_expression(x if isinstance(x, str) else repr(float(x)), n, rd.path) for x in row] for row in spec]
    if all(e.constant for row in exprs for e in row):
        G = np.array([[e(np.zeros((n,))) for e in row] for row in exprs], dtype=float)
        return MetricField.constant_metric(m, G)

    def func(x):
        return np.stack([np.stack([e(x) for e in row], -1) for row in exprs], -2)

    return MetricField.from_function(m, func, "expression")


def load_scenario(path=None, text=None, grid=None, seed=None, task=None):
    """Parse and validate a scenario file; CLI overrides are folded into the document."""
    from .degree import DegreeFunctional
    from .principal import PrincipalBundle, ReductiveGroupSpec

    if text is None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    doc, pos = load_json(text, path)
    rd = _Reader(pos, path)
    if not isinstance(doc, dict):
        rd.fail(doc, "scenario must be a JSON object")
    if grid is not None:
        doc["grid"] = int(grid)
    if seed is not None:
        doc["seed"] = int(seed)
    if task is not None:
        doc["task"] = task
    t = doc.get("task")
    if t not in TASKS:
        raise ValidationError(f"unknown task {t!r}; expected one of {', '.join(TASKS)}")
    N = doc.get("grid", 64)
    if not isinstance(N, int) or N < 8:
        raise ValidationError("grid must be an integer >= 8")
    params = doc.get("params", {})
    if not isinstance(params, dict):
        rd.fail(params, "params must be an object")
    sc = Scenario(doc, t, params=dict(params), seed=int(doc.get("seed", 0)), path=path)

    if "manifold" not in doc:
        raise ValidationError("scenario needs a 'manifold'")
    sc.manifold, sc.group = _manifold(rd, doc["manifold"], N)
    if sc.manifold is not None:
        validate_manifold(sc.manifold)
        sc.group = sc.manifold
    ngens = len(sc.manifold.generators) if sc.manifold is not None else sc.group.ngens

    if "bundle" in doc:
        b = doc["bundle"]
        if not isinstance(b, dict):
            rd.fail(b, "bundle must be an object")
        mats = rd.matrices(b.get("generators"), "bundle.generators")
        if len(mats) != ngens:
            raise ValidationError(f"bundle has {len(mats)} generators, the manifold has {ngens}")
        fld = b.get("field")
        if fld not in (None, "R", "C"):
            rd.fail(b, "bundle.field must be 'R' or 'C'")
        sc.bundle = Monodromy(mats, sc.group, fld)
    if "principal" in doc:
        p = doc["principal"]
        if not isinstance(p, dict):
            rd.fail(p, "principal must be an object")
        spec = ReductiveGroupSpec(p.get("group"), int(p.get("r", 2)), p.get("field", "C"))
        mats = rd.matrices(p.get("generators"), "principal.generators")
        if len(mats) != ngens:
            raise ValidationError(f"principal bundle has {len(mats)} generators, the manifold has {ngens}")
        sc.principal = PrincipalBundle(spec, mats, sc.group)
    if t.startswith("Principal") and sc.principal is None:
        raise ValidationError(f"task {t} needs a 'principal' section")
    if t not in ("CheckManifold",) and not t.startswith("Principal") and sc.bundle is None:
        raise ValidationError(f"task {t} needs a 'bundle' section")

    if sc.manifold is not None:
        sc.metric = _metric(rd, doc.get("metric"), sc.manifold)
    deg = doc.get("degree", {"mode": "numeric"} if sc.manifold is not None else None)
    if deg is not None:
        if not isinstance(deg, dict) or deg.get("mode") not in ("abstract", "numeric"):
            rd.fail(deg, "degree.mode must be 'abstract' or 'numeric'")
        if deg["mode"] == "abstract":
            w = deg.get("weights")
            if not isinstance(w, list) or len(w) != ngens:
                raise ValidationError(f"degree.weights must list {ngens} numbers")
            sc.degree = DegreeFunctional.abstract([float(x) for x in w])
        else:
            if sc.manifold is None:
                raise ValidationError("numeric degrees need a manifold")
            sc.degree = DegreeFunctional.numeric(sc.manifold, sc.metric)
    if t in NUMERIC_TASKS and (sc.degree is None or sc.degree.mode != "numeric"):
        raise ValidationError(f"task {t} needs a numeric degree functional")
    if t == "Oracle" and (sc.degree is None or sc.degree.mode != "abstract"):
        raise ValidationError("task Oracle needs abstract weights")
    if t != "CheckManifold" and sc.degree is None:
        raise ValidationError(f"task {t} needs a degree functional")
    return sc
