"""Chance-constrained problem containers and their second-order cone form.

A two-sided constraint ``P(a <= x' xi <= b) >= 1 - eps`` with
``xi ~ N(mu, Sigma)`` and ``Sigma = L L'`` holds iff
``(a - mu' x, b - mu' x, ||L' x||)`` lies in the conic hull of ``S(eps)``.
Replacing that hull by the three-cut family ``B`` gives one norm row and
three linear rows per constraint:

    t >= ||L' x||
    a - mu' x <= Phi_inv(eps) t
    b - mu' x >= Phi_inv(1 - eps) t
    a - b     <= 2 Phi_inv(eps / 2) t

which is an outer approximation (risk at most ``1.25 eps``). Building the
same rows at ``eps / 1.25`` gives an inner one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .distrobust import CovFamily, MeanBox
from .errors import DomainError, SchemaError
from .gauss import Phi_inv
from .seps import as_eps, smooth_value_grad

SENSES = ("<=", "=", ">=")


# -- affine expressions ------------------------------------------------------

@dataclass(frozen=True)
class AffineExpr:
    """``constant + sum(coeffs[v] * v)`` over named variables."""

    coeffs: dict = field(default_factory=dict)
    constant: float = 0.0

    def __post_init__(self):
        coeffs = {str(k): float(v) for k, v in self.coeffs.items()}
        if not all(math.isfinite(v) for v in coeffs.values()) or not math.isfinite(self.constant):
            raise DomainError("affine expression entries must be finite")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "constant", float(self.constant))

    @classmethod
    def var(cls, name, coef=1.0):
        return cls({name: coef})

    @classmethod
    def const(cls, value):
        return cls({}, value)

    def __add__(self, other):
        if not isinstance(other, AffineExpr):
            return AffineExpr(self.coeffs, self.constant + float(other))
        coeffs = dict(self.coeffs)
        for k, v in other.coeffs.items():
            coeffs[k] = coeffs.get(k, 0.0) + v
        return AffineExpr(coeffs, self.constant + other.constant)

    __radd__ = __add__

    def __mul__(self, s):
        s = float(s)
        return AffineExpr({k: s * v for k, v in self.coeffs.items()}, s * self.constant)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def variables(self):
        return set(self.coeffs)

    def evaluate(self, point):
        """Value at ``point``, a mapping from variable name to value."""
        return self.constant + sum(v * point[k] for k, v in self.coeffs.items())

    def gradient(self, variables):
        return np.array([self.coeffs.get(v, 0.0) for v in variables])


def combine(weights, exprs):
    """``sum(w * e)`` for scalar weights and affine expressions."""
    out = AffineExpr()
    for w, e in zip(weights, exprs):
        if w != 0.0:
            out = out + e * w
    return out


# -- Gaussian vectors --------------------------------------------------------

CHOL_PIVOT_RTOL = 1e-12


def cholesky(cov):
    """Lower-triangular ``L`` with ``L L' = cov``.

    Raises
    ------
    DomainError
        If a pivot falls below ``1e-12`` times the largest diagonal entry.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    L = np.zeros_like(cov)
    if n == 0:
        return L
    floor = CHOL_PIVOT_RTOL * max(float(np.max(np.diag(cov))), 0.0)
    for j in range(n):
        pivot = cov[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > floor:
            raise DomainError(f"covariance is not positive definite (pivot {j} = {pivot:.3g})")
        L[j, j] = math.sqrt(pivot)
        L[j + 1:, j] = (cov[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


@dataclass(frozen=True, eq=False)
class GaussianVector:
    """``N(mean, cov)`` with a cached Cholesky factor; dimension 0 is allowed."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float).reshape(mean.size, mean.size)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise DomainError("Gaussian parameters must be finite")
        scale = max(1.0, float(np.abs(cov).max())) if cov.size else 1.0
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * scale):
            raise DomainError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", cholesky(cov))

    @classmethod
    def standard(cls, n):
        return cls(np.zeros(n), np.eye(n))

    @property
    def dim(self):
        return self.mean.size

    def __eq__(self, other):
        return (isinstance(other, GaussianVector) and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.cov, other.cov))

    def sample(self, rng, size):
        return self.mean + rng.standard_normal((size, self.dim)) @ self.chol.T


# -- constraints and problems ------------------------------------------------

@dataclass(frozen=True)
class LinearConstraint:
    expr: AffineExpr
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in SENSES:
            raise DomainError(f"unknown sense {self.sense!r}")
        object.__setattr__(self, "rhs", float(self.rhs))

    def residual(self, point):
        """Signed violation (positive when violated)."""
        v = self.expr.evaluate(point) - self.rhs
        if self.sense == "<=":
            return v
        if self.sense == ">=":
            return -v
        return abs(v)


@dataclass(frozen=True)
class RobustSet:
    mean_box: MeanBox
    cov_family: CovFamily


def _coeff_tuple(xi_coeffs):
    return tuple(e if isinstance(e, AffineExpr) else AffineExpr(e) for e in xi_coeffs)


@dataclass(frozen=True)
class TwoSidedCC:
    """``P(lower <= sum_j xi_coeffs[j] * xi_j <= upper) >= 1 - eps``.

    With ``robust`` set, the constraint must hold for every mean in the box
    and every covariance in the family; ``dist`` is then nominal only.
    """

    lower: AffineExpr
    upper: AffineExpr
    xi_coeffs: tuple
    dist: GaussianVector
    eps: float
    robust: RobustSet | None = None

    def __post_init__(self):
        object.__setattr__(self, "xi_coeffs", _coeff_tuple(self.xi_coeffs))
        if len(self.xi_coeffs) != self.dist.dim:
            raise DomainError(
                f"{len(self.xi_coeffs)} coefficients for a {self.dist.dim}-dimensional xi")
        object.__setattr__(self, "eps", as_eps(self.eps, relaxed=True))
        if self.robust is not None and (self.robust.mean_box.dim != self.dist.dim
                                        or self.robust.cov_family.dim != self.dist.dim):
            raise DomainError("robust set dimension differs from xi")

    def variables(self):
        out = self.lower.variables() | self.upper.variables()
        for e in self.xi_coeffs:
            out |= e.variables()
        return out


@dataclass(frozen=True)
class OneSidedCC:
    """``P(sum_j xi_coeffs[j] * xi_j <= upper) >= 1 - eps``."""

    upper: AffineExpr
    xi_coeffs: tuple
    dist: GaussianVector
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "xi_coeffs", _coeff_tuple(self.xi_coeffs))
        if len(self.xi_coeffs) != self.dist.dim:
            raise DomainError(
                f"{len(self.xi_coeffs)} coefficients for a {self.dist.dim}-dimensional xi")
        object.__setattr__(self, "eps", as_eps(self.eps, relaxed=True))

    def variables(self):
        out = set(self.upper.variables())
        for e in self.xi_coeffs:
            out |= e.variables()
        return out


INF = float("inf")


@dataclass(frozen=True)
class ChanceProblem:
    """Minimize ``objective`` subject to linear and chance constraints.

    ``bounds`` maps variable names to ``(lo, hi)``; missing entries are free.
    """

    variables: tuple
    objective: AffineExpr = field(default_factory=AffineExpr)
    linear: tuple = ()
    ccs: tuple = ()
    one_sided: tuple = ()
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("variables", "linear", "ccs", "one_sided"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(set(self.variables)) != len(self.variables):
            raise DomainError("duplicate variable names")
        bounds = {str(k): (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()}
        object.__setattr__(self, "bounds", bounds)
        known = set(self.variables)
        used = set(self.objective.variables()) | set(bounds)
        for c in self.linear:
            used |= c.expr.variables()
        for c in self.ccs + self.one_sided:
            used |= c.variables()
        missing = used - known
        if missing:
            raise DomainError(f"unknown variables {sorted(missing)}")

    def bound(self, name):
        return self.bounds.get(name, (-INF, INF))

    def as_point(self, values):
        return dict(zip(self.variables, (float(v) for v in values)))


# -- standardization ---------------------------------------------------------

def standardize(cc):
    """Shifted bounds ``a - mu' x``, ``b - mu' x`` and coefficients ``L' x``.

    For a one-sided constraint the lower bound is ``None``.
    """
    mu, L = cc.dist.mean, cc.dist.chol
    shift = combine(mu, cc.xi_coeffs)
    y = tuple(combine(L[:, j], cc.xi_coeffs) for j in range(cc.dist.dim))
    lower = getattr(cc, "lower", None)
    a = None if lower is None else lower - shift
    return a, cc.upper - shift, y


def cc_probability(cc, point):
    """True probability of a chance constraint at a numeric point."""
    from .gauss import Phi, interval_mass

    a, b, y = standardize(cc)
    sd = math.sqrt(sum(e.evaluate(point) ** 2 for e in y))
    bv = b.evaluate(point)
    if a is None:
        if sd == 0.0:
            return 1.0 if bv >= 0 else 0.0
        return float(Phi(bv / sd))
    av = a.evaluate(point)
    if sd == 0.0:
        return 1.0 if av <= 0.0 <= bv else 0.0
    return float(interval_mass(av / sd, bv / sd))


# -- SOC formulation ---------------------------------------------------------

@dataclass(frozen=True)
class SocRow:
    """``||vec||_2 <= rhs``."""

    vec: tuple
    rhs: AffineExpr

    def __post_init__(self):
        object.__setattr__(self, "vec", tuple(self.vec))

    def residual(self, point):
        return math.sqrt(sum(e.evaluate(point) ** 2 for e in self.vec)) - self.rhs.evaluate(point)


@dataclass(frozen=True)
class SocFormulation:
    variables: tuple
    objective: AffineExpr
    soc: tuple
    linear: tuple
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("variables", "soc", "linear"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "bounds",
                           {k: (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()})


def soc_rows_for(cc, t_name, eps_used):
    """Norm row and linear rows of a single constraint, auxiliary ``t_name``."""
    a, b, y = standardize(cc)
    t = AffineExpr.var(t_name)
    rows = []
    if a is not None:
        rows.append(LinearConstraint(a - t * Phi_inv(eps_used), "<=", 0.0))
        rows.append(LinearConstraint(b - t * Phi_inv(1.0 - eps_used), ">=", 0.0))
        rows.append(LinearConstraint(a - b - t * (2.0 * Phi_inv(eps_used / 2.0)), "<=", 0.0))
    else:
        rows.append(LinearConstraint(b - t * Phi_inv(1.0 - eps_used), ">=", 0.0))
    return SocRow(y, t), rows


def build_soc(p, mode="outer", factor=1.25):
    """Extended formulation with one auxiliary ``t`` per chance constraint.

    ``outer`` builds the three-cut rows at each constraint's ``eps``;
    ``conservative`` builds them at ``eps / factor``. One-sided constraints
    are represented exactly in both modes.

    Raises
    ------
    DomainError
        If a two-sided constraint has ``eps > 1/2``, carries a robust set, or
        the mode is unknown.
    """
    if mode not in ("outer", "conservative"):
        raise DomainError(f"unknown mode {mode!r}")
    variables = list(p.variables)
    socs, linear = [], list(p.linear)
    bounds = dict(p.bounds)
    for k, cc in enumerate(p.ccs):
        as_eps(cc.eps)
        if cc.robust is not None:
            raise DomainError("robust constraints have no static SOC form; use kelley_solve")
        eps_used = cc.eps / factor if mode == "conservative" else cc.eps
        name = _fresh(f"t_cc{k}", variables)
        variables.append(name)
        bounds[name] = (0.0, INF)
        row, rows = soc_rows_for(cc, name, eps_used)
        socs.append(row)
        linear.extend(rows)
    for k, cc in enumerate(p.one_sided):
        name = _fresh(f"t_os{k}", variables)
        variables.append(name)
        bounds[name] = (0.0, INF)
        row, rows = soc_rows_for(cc, name, cc.eps)
        socs.append(row)
        linear.extend(rows)
    return SocFormulation(tuple(variables), p.objective, tuple(socs), tuple(linear), bounds)


def _fresh(name, taken):
    out = name
    while out in taken:
        out = "_" + out
    return out


# -- smooth evaluators -------------------------------------------------------

@dataclass(frozen=True)
class SmoothConstraint:
    """Concave ``g(v) >= 0`` form of one two-sided constraint.

    Call with a vector ordered like ``variables`` to get ``(value, grad)``.
    """

    cc: TwoSidedCC
    variables: tuple
    form: str = "plain"
    z_min: float = 1e-12

    def __call__(self, values):
        point = dict(zip(self.variables, (float(v) for v in values)))
        a, b, y = standardize(self.cc)
        ys = np.array([e.evaluate(point) for e in y])
        z = float(np.linalg.norm(ys))
        if not z > self.z_min:
            raise DomainError(f"standard deviation {z:.3g} too close to 0 for a smooth evaluation")
        value, g = smooth_value_grad((a.evaluate(point), b.evaluate(point), z), self.cc.eps,
                                     form=self.form)
        grad_z = sum((yj / z) * e.gradient(self.variables) for yj, e in zip(ys, y))
        grad = g[0] * a.gradient(self.variables) + g[1] * b.gradient(self.variables) + g[2] * grad_z
        return value, grad


def smooth_constraints(p, form="plain"):
    out = []
    for cc in p.ccs:
        if form == "plain":
            as_eps(cc.eps)
        out.append(SmoothConstraint(cc, p.variables, form))
    return out


# -- JSON --------------------------------------------------------------------

_AFFINE = {
    "type": "object",
    "properties": {
        "coeffs": {"type": "object", "additionalProperties": {"type": "number"}},
        "const": {"type": "number"},
    },
    "additionalProperties": False,
}
_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_VECTOR = {"type": "array", "items": {"type": "number"}}
_LINEAR = {
    "type": "object",
    "required": ["coeffs", "sense", "rhs"],
    "properties": {
        "coeffs": {"type": "object", "additionalProperties": {"type": "number"}},
        "const": {"type": "number"},
        "sense": {"enum": list(SENSES)},
        "rhs": {"type": "number"},
    },
    "additionalProperties": False,
}
_BOUNDS = {
    "type": "object",
    "additionalProperties": {
        "type": "array", "minItems": 2, "maxItems": 2,
        "items": {"type": ["number", "null"]},
    },
}
_ROBUST = {
    "type": "object",
    "required": ["mean_box", "cov_members"],
    "properties": {
        "mean_box": {
            "type": "object", "required": ["lo", "hi"],
            "properties": {"lo": _VECTOR, "hi": _VECTOR}, "additionalProperties": False,
        },
        "cov_members": {"type": "array", "minItems": 1, "items": _MATRIX},
    },
    "additionalProperties": False,
}
_GAUSS_FIELDS = {
    "xi_coeffs": {"type": "array", "items": _AFFINE},
    "mean": _VECTOR,
    "cov": _MATRIX,
    "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["variables", "objective"],
    "properties": {
        "variables": {"type": "array", "items": {"type": "string"}},
        "objective": _AFFINE,
        "linear": {"type": "array", "items": _LINEAR},
        "ccs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["lower", "upper", "xi_coeffs", "mean", "cov", "eps"],
                "properties": {"lower": _AFFINE, "upper": _AFFINE, "robust": _ROBUST,
                               **_GAUSS_FIELDS},
                "additionalProperties": False,
            },
        },
        "one_sided": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["upper", "xi_coeffs", "mean", "cov", "eps"],
                "properties": {"upper": _AFFINE, **_GAUSS_FIELDS},
                "additionalProperties": False,
            },
        },
        "bounds": _BOUNDS,
    },
    "additionalProperties": False,
}

FORMULATION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["variables", "objective", "linear", "soc"],
    "properties": {
        "variables": {"type": "array", "items": {"type": "string"}},
        "objective": _AFFINE,
        "linear": {"type": "array", "items": _LINEAR},
        "soc": {
            "type": "array",
            "items": {
                "type": "object", "required": ["vec", "rhs"],
                "properties": {"vec": {"type": "array", "items": _AFFINE}, "rhs": _AFFINE},
                "additionalProperties": False,
            },
        },
        "bounds": _BOUNDS,
    },
    "additionalProperties": False,
}


def validate(document, schema):
    """Raise :class:`SchemaError` with a slash path for the first violation."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SchemaError(err.message, "/".join(str(p) for p in err.absolute_path))


def _affine_doc(e):
    return {"coeffs": dict(e.coeffs), "const": e.constant}


def _affine(doc):
    return AffineExpr(doc.get("coeffs", {}), doc.get("const", 0.0))


def _linear_doc(c):
    return {"coeffs": dict(c.expr.coeffs), "const": c.expr.constant,
            "sense": c.sense, "rhs": c.rhs}


def _linear(doc):
    return LinearConstraint(AffineExpr(doc["coeffs"], doc.get("const", 0.0)),
                            doc["sense"], doc["rhs"])


def _bound_doc(bounds):
    return {k: [None if math.isinf(lo) else lo, None if math.isinf(hi) else hi]
            for k, (lo, hi) in bounds.items()}


def _bounds(doc):
    return {k: (-INF if lo is None else lo, INF if hi is None else hi)
            for k, (lo, hi) in doc.items()}


def _gauss_doc(cc):
    return {"xi_coeffs": [_affine_doc(e) for e in cc.xi_coeffs],
            "mean": cc.dist.mean.tolist(), "cov": cc.dist.cov.tolist(), "eps": cc.eps}


def _gauss(doc, path):
    try:
        n = len(doc["mean"])
        cov = np.array(doc["cov"], dtype=float) if n else np.zeros((0, 0))
        if cov.shape != (n, n):
            raise SchemaError(f"cov has shape {cov.shape}, expected {(n, n)}", path + "/cov")
        return GaussianVector(np.array(doc["mean"], dtype=float), cov)
    except DomainError as exc:
        raise SchemaError(str(exc), path + "/cov") from exc


def emit_problem(p):
    doc = {"variables": list(p.variables), "objective": _affine_doc(p.objective),
           "linear": [_linear_doc(c) for c in p.linear], "ccs": [], "one_sided": [],
           "bounds": _bound_doc(p.bounds)}
    for cc in p.ccs:
        entry = {"lower": _affine_doc(cc.lower), "upper": _affine_doc(cc.upper), **_gauss_doc(cc)}
        if cc.robust is not None:
            entry["robust"] = {
                "mean_box": {"lo": cc.robust.mean_box.lo.tolist(),
                             "hi": cc.robust.mean_box.hi.tolist()},
                "cov_members": [m.tolist() for m in cc.robust.cov_family.members]}
        doc["ccs"].append(entry)
    for cc in p.one_sided:
        doc["one_sided"].append({"upper": _affine_doc(cc.upper), **_gauss_doc(cc)})
    return doc


def parse_problem(document):
    """Build a :class:`ChanceProblem` from its JSON document (dict or string).

    Raises
    ------
    SchemaError
        With the path of the first offending element.
    """
    if isinstance(document, (str, bytes)):
        document = json.loads(document)
    validate(document, PROBLEM_SCHEMA)
    ccs, one_sided = [], []
    for i, c in enumerate(document.get("ccs", [])):
        path = f"ccs/{i}"
        dist = _gauss(c, path)
        robust = None
        if "robust" in c:
            try:
                r = c["robust"]
                robust = RobustSet(MeanBox(r["mean_box"]["lo"], r["mean_box"]["hi"]),
                                   CovFamily(tuple(r["cov_members"])))
            except DomainError as exc:
                raise SchemaError(str(exc), path + "/robust") from exc
        try:
            ccs.append(TwoSidedCC(_affine(c["lower"]), _affine(c["upper"]),
                                  tuple(_affine(e) for e in c["xi_coeffs"]), dist, c["eps"],
                                  robust))
        except DomainError as exc:
            raise SchemaError(str(exc), path) from exc
    for i, c in enumerate(document.get("one_sided", [])):
        path = f"one_sided/{i}"
        try:
            one_sided.append(OneSidedCC(_affine(c["upper"]),
                                        tuple(_affine(e) for e in c["xi_coeffs"]),
                                        _gauss(c, path), c["eps"]))
        except DomainError as exc:
            raise SchemaError(str(exc), path) from exc
    try:
        return ChanceProblem(tuple(document["variables"]), _affine(document["objective"]),
                             tuple(_linear(c) for c in document.get("linear", [])),
                             tuple(ccs), tuple(one_sided), _bounds(document.get("bounds", {})))
    except DomainError as exc:
        raise SchemaError(str(exc)) from exc


def emit_json(f):
    """JSON document of a :class:`SocFormulation`."""
    return {"variables": list(f.variables), "objective": _affine_doc(f.objective),
            "linear": [_linear_doc(c) for c in f.linear],
            "soc": [{"vec": [_affine_doc(e) for e in r.vec], "rhs": _affine_doc(r.rhs)}
                    for r in f.soc],
            "bounds": _bound_doc(f.bounds)}


def parse_formulation(document):
    if isinstance(document, (str, bytes)):
        document = json.loads(document)
    validate(document, FORMULATION_SCHEMA)
    return SocFormulation(
        tuple(document["variables"]), _affine(document["objective"]),
        tuple(SocRow(tuple(_affine(e) for e in r["vec"]), _affine(r["rhs"]))
              for r in document["soc"]),
        tuple(_linear(c) for c in document["linear"]), _bounds(document.get("bounds", {})))


def dumps(document):
    """Deterministic JSON text; floats use the shortest round-trip repr."""
    return json.dumps(document, indent=2, sort_keys=True, allow_nan=False)
