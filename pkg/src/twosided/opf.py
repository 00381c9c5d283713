"""Chance-constrained DC optimal power flow.

Generators follow a proportional response: generator ``i`` produces
``p_i - alpha_i * Omega`` where ``Omega`` is the total wind deviation and
``sum(alpha) = 1``, which keeps the system balanced for every realization.
Line flows are affine in the deviations ``omega`` through the PTDF matrix,
so each line limit ``|f| <= fmax`` becomes a two-sided Gaussian chance
constraint in ``(p, alpha)``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .errors import DomainError
from .formulation import (AffineExpr, ChanceProblem, GaussianVector, LinearConstraint,
                          OneSidedCC, TwoSidedCC)
from .gauss import interval_mass
from .seps import as_eps

DATA_DIR = Path(__file__).parent / "data"
FIXTURES = ("two_bus", "three_bus", "five_bus")
MODES = ("two_sided_exact", "two_sided_soc", "split_one_sided")

NETWORK_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["buses", "lines", "gens", "wind_cov"],
    "properties": {
        "name": {"type": "string"},
        "buses": {
            "type": "array", "minItems": 1,
            "items": {"type": "object", "required": ["d", "w"],
                      "properties": {"d": {"type": "number"}, "w": {"type": "number"}},
                      "additionalProperties": False},
        },
        "lines": {
            "type": "array",
            "items": {"type": "object", "required": ["m", "n", "beta", "fmax"],
                      "properties": {"m": {"type": "integer", "minimum": 0},
                                     "n": {"type": "integer", "minimum": 0},
                                     "beta": {"type": "number"},
                                     "fmax": {"type": "number"}},
                      "additionalProperties": False},
        },
        "gens": {
            "type": "array", "minItems": 1,
            "items": {"type": "object", "required": ["bus", "c", "pmin", "pmax"],
                      "properties": {"bus": {"type": "integer", "minimum": 0},
                                     "c": {"type": "number"}, "pmin": {"type": "number"},
                                     "pmax": {"type": "number"}},
                      "additionalProperties": False},
        },
        "wind_cov": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    },
    "additionalProperties": False,
}


class NetworkError(DomainError):
    """Invalid network document; ``errors`` lists every violation found."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True, eq=False)
class Network:
    d: np.ndarray
    w: np.ndarray
    line_from: np.ndarray
    line_to: np.ndarray
    beta: np.ndarray
    fmax: np.ndarray
    gen_bus: np.ndarray
    cost: np.ndarray
    pmin: np.ndarray
    pmax: np.ndarray
    wind_cov: np.ndarray
    name: str = ""

    @property
    def n_bus(self):
        return self.d.size

    @property
    def n_line(self):
        return self.beta.size

    @property
    def n_gen(self):
        return self.cost.size

    def wind_buses(self):
        """Buses whose deviation has positive variance."""
        return np.flatnonzero(np.diag(self.wind_cov) > 0.0)

    def wind(self):
        """Gaussian law of the deviations at :meth:`wind_buses` (zero mean)."""
        R = self.wind_buses()
        return GaussianVector(np.zeros(R.size), self.wind_cov[np.ix_(R, R)])

    def gen_matrix(self):
        """Bus-by-generator incidence."""
        G = np.zeros((self.n_bus, self.n_gen))
        G[self.gen_bus, np.arange(self.n_gen)] = 1.0
        return G


def _connected(n, edges):
    adj = [[] for _ in range(n)]
    for m, k in edges:
        adj[m].append(k)
        adj[k].append(m)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def load_network(document):
    """Validate and build a :class:`Network` from a dict, JSON text or path.

    Raises
    ------
    NetworkError
        Listing every schema or consistency violation.
    """
    if isinstance(document, Path) or (isinstance(document, str)
                                      and not document.lstrip().startswith("{")):
        document = json.loads(Path(document).read_text())
    elif isinstance(document, (str, bytes)):
        document = json.loads(document)
    validator = jsonschema.Draft202012Validator(NETWORK_SCHEMA)
    errors = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
              for e in sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))]
    if errors:
        raise NetworkError(errors)
    buses, lines, gens = document["buses"], document["lines"], document["gens"]
    n = len(buses)
    for i, ln in enumerate(lines):
        for key in ("m", "n"):
            if ln[key] >= n:
                errors.append(f"lines/{i}/{key}: bus {ln[key]} does not exist")
        if ln["m"] == ln["n"]:
            errors.append(f"lines/{i}: self loop")
        if ln["beta"] <= 0:
            errors.append(f"lines/{i}/beta: susceptance must be positive")
        if ln["fmax"] < 0:
            errors.append(f"lines/{i}/fmax: negative capacity")
    for i, g in enumerate(gens):
        if g["bus"] >= n:
            errors.append(f"gens/{i}/bus: bus {g['bus']} does not exist")
        if g["pmin"] > g["pmax"]:
            errors.append(f"gens/{i}: pmin exceeds pmax")
    cov = np.array(document["wind_cov"], dtype=float) if n else np.zeros((0, 0))
    if cov.shape != (n, n):
        errors.append(f"wind_cov: shape {cov.shape}, expected {(n, n)}")
    else:
        scale = max(1.0, float(np.abs(cov).max()))
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * scale):
            errors.append("wind_cov: not symmetric")
        elif np.linalg.eigvalsh(cov).min() < -1e-10 * scale:
            errors.append("wind_cov: not positive semidefinite")
    indices_ok = all(ln["m"] < n and ln["n"] < n for ln in lines)
    if indices_ok and not _connected(n, [(ln["m"], ln["n"]) for ln in lines]):
        errors.append("lines: network is not connected")
    load = sum(b["d"] for b in buses) - sum(b["w"] for b in buses)
    if load > sum(g["pmax"] for g in gens) + 1e-9:
        errors.append("buses: net load exceeds total generator capacity")
    if errors:
        raise NetworkError(errors)
    return Network(
        d=np.array([b["d"] for b in buses], dtype=float),
        w=np.array([b["w"] for b in buses], dtype=float),
        line_from=np.array([ln["m"] for ln in lines], dtype=int),
        line_to=np.array([ln["n"] for ln in lines], dtype=int),
        beta=np.array([ln["beta"] for ln in lines], dtype=float),
        fmax=np.array([ln["fmax"] for ln in lines], dtype=float),
        gen_bus=np.array([g["bus"] for g in gens], dtype=int),
        cost=np.array([g["c"] for g in gens], dtype=float),
        pmin=np.array([g["pmin"] for g in gens], dtype=float),
        pmax=np.array([g["pmax"] for g in gens], dtype=float),
        wind_cov=cov, name=document.get("name", ""))


def load_fixture(name):
    if name not in FIXTURES:
        raise DomainError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    return load_network(DATA_DIR / f"{name}.json")


def incidence(net):
    """Line-by-bus incidence, ``+1`` at the sending and ``-1`` at the receiving end."""
    A = np.zeros((net.n_line, net.n_bus))
    rows = np.arange(net.n_line)
    A[rows, net.line_from] = 1.0
    A[rows, net.line_to] = -1.0
    return A


def ptdf(net, slack=0):
    """Flows per unit injection at each bus, withdrawn at ``slack``.

    Raises
    ------
    DomainError
        If the reduced susceptance matrix is singular.
    """
    A = incidence(net)
    Bl = A.T @ (net.beta[:, None] * A)
    keep = [i for i in range(net.n_bus) if i != slack]
    X = np.zeros((net.n_bus, net.n_bus))
    if keep:
        red = Bl[np.ix_(keep, keep)]
        if np.linalg.matrix_rank(red) < len(keep):
            raise DomainError("reduced susceptance matrix is singular")
        X[np.ix_(keep, keep)] = np.linalg.inv(red)
    return (net.beta[:, None] * A) @ X


@dataclass(frozen=True, eq=False)
class AffineFlowModel:
    """``flow = base_const + base_p @ p + (sens_const + sens_alpha . alpha) @ omega``.

    ``sens`` has shape ``(lines, wind buses)``; ``sens_alpha[l, i, j]`` is the
    coefficient of ``alpha_i`` in the sensitivity of line ``l`` to
    ``omega_j``.
    """

    base_const: np.ndarray
    base_p: np.ndarray
    sens_const: np.ndarray
    sens_alpha: np.ndarray
    wind_buses: np.ndarray

    def base(self, p):
        return self.base_const + self.base_p @ p

    def sensitivity(self, alpha):
        return self.sens_const + np.einsum("lij,i->lj", self.sens_alpha, alpha)


def flow_model(net, slack=0):
    H = ptdf(net, slack)
    R = net.wind_buses()
    HG = H[:, net.gen_bus]
    sens_alpha = -np.repeat(HG[:, :, None], R.size, axis=2)
    return AffineFlowModel(H @ (net.w - net.d), HG, H[:, R], sens_alpha, R)


def p_name(i):
    return f"p{i}"


def alpha_name(i):
    return f"alpha{i}"


def build_cc_opf(net, eps, mode="two_sided_exact", slack=0, split_side_eps=None,
                 alpha_nonneg=True):
    """Chance-constrained DC-OPF in variables ``p_i`` and ``alpha_i``.

    Two-sided modes give one two-sided constraint per line (the SOC variant
    differs only in how it is solved). Split mode replaces each by two
    one-sided constraints at ``split_side_eps`` each, ``eps / 2`` by default
    so that the union bound keeps the split conservative. Generator limits
    are one-sided constraints at ``eps`` per bound.

    Raises
    ------
    DomainError
        If the forecast balance cannot be met within generator limits.
    """
    eps = as_eps(eps)
    if mode not in MODES:
        raise DomainError(f"unknown mode {mode!r}; choose from {MODES}")
    side_eps = eps / 2.0 if split_side_eps is None else as_eps(split_side_eps, relaxed=True)
    net_load = float(net.d.sum() - net.w.sum())
    if not net.pmin.sum() - 1e-9 <= net_load <= net.pmax.sum() + 1e-9:
        raise DomainError(f"net load {net_load:g} outside total generator range")
    G = net.n_gen
    ps = [AffineExpr.var(p_name(i)) for i in range(G)]
    als = [AffineExpr.var(alpha_name(i)) for i in range(G)]
    variables = tuple(p_name(i) for i in range(G)) + tuple(alpha_name(i) for i in range(G))
    objective = AffineExpr({p_name(i): net.cost[i] for i in range(G)})
    linear = [
        LinearConstraint(AffineExpr({p_name(i): 1.0 for i in range(G)}), "=", net_load),
        LinearConstraint(AffineExpr({alpha_name(i): 1.0 for i in range(G)}), "=", 1.0),
    ]
    bounds = {p_name(i): (net.pmin[i], net.pmax[i]) for i in range(G)}
    for i in range(G):
        bounds[alpha_name(i)] = (0.0 if alpha_nonneg else -1.0, 1.0 if alpha_nonneg else 2.0)

    model = flow_model(net, slack)
    dist = net.wind()
    nw = dist.dim
    ccs, one_sided = [], []
    for line in range(net.n_line):
        base = AffineExpr({p_name(i): model.base_p[line, i] for i in range(G)},
                          model.base_const[line])
        sens = tuple(AffineExpr({alpha_name(i): model.sens_alpha[line, i, j] for i in range(G)},
                                model.sens_const[line, j]) for j in range(nw))
        fmax = net.fmax[line]
        if mode == "split_one_sided":
            one_sided.append(OneSidedCC(fmax - base, sens, dist, side_eps))
            one_sided.append(OneSidedCC(fmax + base, tuple(-s for s in sens), dist, side_eps))
        else:
            ccs.append(TwoSidedCC(-fmax - base, fmax - base, sens, dist, eps))
    for i in range(G):
        # production p_i - alpha_i * Omega within [pmin, pmax]
        minus = tuple(-als[i] for _ in range(nw))
        plus = tuple(als[i] for _ in range(nw))
        one_sided.append(OneSidedCC(net.pmax[i] - ps[i], minus, dist, eps))
        one_sided.append(OneSidedCC(ps[i] - net.pmin[i], plus, dist, eps))
    return ChanceProblem(variables, objective, tuple(linear), tuple(ccs), tuple(one_sided),
                         bounds)


def solve_cc_opf(net, eps, mode="two_sided_exact", slack=0, split_side_eps=None, opts=None):
    """Build and solve; the SOC mode uses the three-cut outer formulation."""
    from .solver import kelley_solve, solve_via_soc

    p = build_cc_opf(net, eps, mode, slack, split_side_eps)
    if mode == "two_sided_soc":
        return solve_via_soc(p, "outer", opts), p
    return kelley_solve(p, opts), p


@dataclass
class DispatchEvaluation:
    cost: float
    flow_mean: np.ndarray
    flow_sd: np.ndarray
    line_violation: np.ndarray
    gen_violation: np.ndarray

    def to_dict(self):
        return {"cost": self.cost, "flow_mean": self.flow_mean.tolist(),
                "flow_sd": self.flow_sd.tolist(),
                "line_violation": self.line_violation.tolist(),
                "gen_violation": self.gen_violation.tolist()}


def _outside(mean, sd, lo, hi, rtol=1e-9):
    scale = max([1.0] + [abs(v) for v in (lo, hi) if math.isfinite(v)])
    if sd <= rtol * scale:
        # no resolvable randomness; compare with the same relative slack
        return 0.0 if lo - rtol * scale <= mean <= hi + rtol * scale else 1.0
    return 1.0 - float(interval_mass((lo - mean) / sd, (hi - mean) / sd))


def evaluate_dispatch(net, p, alpha, eps=None, slack=0):
    """Exact violation probabilities of every line and generator limit.

    ``eps`` is accepted for reporting symmetry and is not used in the
    computation.
    """
    p = np.asarray(p, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if abs(alpha.sum() - 1.0) > 1e-8:
        raise DomainError("alpha must sum to 1")
    model = flow_model(net, slack)
    dist = net.wind()
    mean = model.base(p)
    S = model.sensitivity(alpha)
    sd = np.sqrt(np.maximum(np.einsum("lj,jk,lk->l", S, dist.cov, S), 0.0)) if dist.dim \
        else np.zeros(net.n_line)
    line_v = np.array([_outside(mean[l], sd[l], -net.fmax[l], net.fmax[l])
                       for l in range(net.n_line)])
    omega_sd = math.sqrt(float(dist.cov.sum())) if dist.dim else 0.0
    # per bound: (below pmin, above pmax), each held to eps by the model
    gen_v = np.array([(_outside(p[i], abs(alpha[i]) * omega_sd, net.pmin[i], np.inf),
                       _outside(p[i], abs(alpha[i]) * omega_sd, -np.inf, net.pmax[i]))
                      for i in range(net.n_gen)]).reshape(net.n_gen, 2)
    return DispatchEvaluation(float(net.cost @ p), mean, sd, line_v, gen_v)


def dispatch_from_report(net, report):
    values = report.values()
    p = np.array([values[p_name(i)] for i in range(net.n_gen)])
    alpha = np.array([values[alpha_name(i)] for i in range(net.n_gen)])
    return p, alpha


def sample_flows(net, p, alpha, n, seed, slack=0):
    """Monte Carlo line flows from the full DC model (balance by response)."""
    rng = np.random.default_rng(seed)
    dist = net.wind()
    R = net.wind_buses()
    omega = np.zeros((n, net.n_bus))
    if dist.dim:
        omega[:, R] = dist.sample(rng, n)
    Omega = omega.sum(axis=1)
    inj = (net.w - net.d + omega) + (net.gen_matrix() @ (p[:, None] - np.outer(alpha, Omega))).T
    return inj @ ptdf(net, slack).T, inj.sum(axis=1)

