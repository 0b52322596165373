"""Parameter isolation: map derivative estimates to Hamiltonian and dissipator entries.

For a product state ``rho`` that is maximally mixed outside the pair ``(i, j)``
and a Pauli observable ``O`` supported on ``{i, j}``, ``d/dt tr(rho_t O)`` at
``t = 0`` is a linear form in the 33 local parameters of the pair:

* single-qubit fields ``a_x(i) ... a_z(j)`` (6),
* two-qubit couplings ``a_ab(i,j)`` (9),
* per-site dissipator entries: diagonal ``D_aa``, and real/imaginary parts of
  the upper off-diagonals ``D_ab = ReD_ab + i ImD_ab`` (9 per site).

Every other term of the generator drops out because it acts nontrivially on a
maximally mixed qubit.  Rows of that linear map are computed exactly with
Pauli algebra (:func:`derivative_row`); an :class:`IsolationRule` is a sparse
combination of rows that equals one parameter, optionally plus previously
recovered parameters.  Rules are found by an L1-minimal linear program over a
candidate set of (observable, state) pairs and then snapped to small rationals.
"""

from __future__ import annotations

import csv
import functools
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .pauli import (
    AXES,
    PauliAxis,
    PauliString,
    ProductStateSpec,
    all_pauli_strings,
    trace_commutator_term,
    trace_dissipator_term,
)

__all__ = [
    "ParamId",
    "RuleTerm",
    "IsolationRule",
    "RecoveryReport",
    "ParameterResult",
    "local_parameters",
    "derivative_row",
    "analytic_derivative",
    "true_parameters",
    "derive_rule",
    "plan_two_qubit",
    "plan_single_qubit",
    "plan_dissipation",
    "plan_pair",
    "plan_chip",
    "plan_requirements",
    "recover",
    "finite_difference_derivative",
    "chip_parameters",
    "format_plan_table",
    "PlanError",
    "RecoveryError",
]

_X, _Y, _Z = AXES
_ORDER = {"a2": 0, "a1": 1, "Ddiag": 2, "Doff": 3}


class PlanError(ValueError):
    pass


class RecoveryError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ParamId:
    """Local parameter.  ``kind`` is one of ``a1``, ``a2``, ``Ddiag``, ``ReD``, ``ImD``."""

    kind: str
    axes: tuple[PauliAxis, ...]
    sites: tuple[int, ...]

    @property
    def name(self) -> str:
        ax = "".join(a.name.lower() for a in self.axes)
        st = ",".join(str(s) for s in self.sites)
        prefix = {"a1": "a", "a2": "a", "Ddiag": "D", "ReD": "ReD", "ImD": "ImD"}[self.kind]
        return f"{prefix}_{ax}({st})"

    def __str__(self) -> str:
        return self.name

    @property
    def stage(self) -> int:
        return _ORDER["Doff" if self.kind in ("ReD", "ImD") else self.kind]

    @classmethod
    def parse(cls, text: str) -> "ParamId":
        head, _, rest = text.partition("_")
        ax, _, st = rest.partition("(")
        sites = tuple(int(s) for s in st.rstrip(")").split(","))
        axes = tuple(PauliAxis.parse(c) for c in ax)
        if head == "a":
            kind = "a1" if len(axes) == 1 else "a2"
        elif head == "D":
            kind = "Ddiag"
        elif head in ("ReD", "ImD"):
            kind = head
        else:
            raise ValueError(f"unknown parameter {text!r}")
        return cls(kind, axes, sites)


def local_parameters(i: int, j: int) -> list[ParamId]:
    """The 33 local parameters of the pair in dependency order."""
    out = [ParamId("a2", (a, b), (i, j)) for a in AXES for b in AXES]
    out += [ParamId("a1", (a,), (s,)) for s in (i, j) for a in AXES]
    out += [ParamId("Ddiag", (a, a), (s,)) for s in (i, j) for a in AXES]
    for s in (i, j):
        for a, b in itertools.combinations(AXES, 2):
            out.append(ParamId("ReD", (a, b), (s,)))
            out.append(ParamId("ImD", (a, b), (s,)))
    return out


@functools.lru_cache(maxsize=200_000)
def _row_entry(p: ParamId, n: int, rho: ProductStateSpec, O: PauliString) -> float:
    if p.kind in ("a1", "a2"):
        H = PauliString(n, tuple(zip(p.sites, p.axes)))
        return trace_commutator_term(H, rho, O)
    site = p.sites[0]
    a, b = p.axes
    if p.kind == "Ddiag":
        return trace_dissipator_term(a, a, site, rho, O).real
    t_ab = trace_dissipator_term(a, b, site, rho, O)
    t_ba = trace_dissipator_term(b, a, site, rho, O)
    if p.kind == "ReD":
        return (t_ab + t_ba).real
    return -(t_ab - t_ba).imag


def derivative_row(O: PauliString, rho: ProductStateSpec, params: Sequence[ParamId]) -> np.ndarray:
    """Coefficients ``c`` with ``d/dt tr(rho_t O)|_0 = sum_p c_p theta_p`` over ``params``."""
    return np.array([_row_entry(p, O.n_qubits, rho, O) for p in params])


def analytic_derivative(lindbladian, rho: ProductStateSpec, O: PauliString) -> float:
    """``tr(L(rho) O)`` for a :class:`~lindlearn.exact.PauliLindbladian`, via Pauli algebra only.

    Scales to many qubits since no dense matrix is formed.
    """
    total = 0.0
    for c, P in lindbladian.hamiltonian:
        total += c * trace_commutator_term(P, rho, O)
    for site, D in lindbladian.dissipation.items():
        for ia, a in enumerate(AXES):
            for ib, b in enumerate(AXES):
                if D[ia, ib] != 0:
                    total += (D[ia, ib] * trace_dissipator_term(a, b, site, rho, O)).real
    return float(total)


def true_parameters(lindbladian, i: int, j: int) -> dict[str, float]:
    """Planted local parameters of a :class:`~lindlearn.exact.PauliLindbladian`."""
    coef: dict[tuple, float] = {}
    for c, P in lindbladian.hamiltonian:
        key = tuple(sorted(P.support))
        coef[key] = coef.get(key, 0.0) + c * P.sign
    out = {}
    for p in local_parameters(i, j):
        if p.kind in ("a1", "a2"):
            key = tuple(sorted(zip(p.sites, p.axes)))
            out[p.name] = coef.get(key, 0.0)
            continue
        D = lindbladian.dissipation.get(p.sites[0], np.zeros((3, 3)))
        a, b = (int(x) - 1 for x in p.axes)
        if p.kind == "Ddiag":
            out[p.name] = float(D[a, a].real)
        elif p.kind == "ReD":
            out[p.name] = float(D[a, b].real)
        else:
            out[p.name] = float(D[a, b].imag)
    return out


# ---------------------------------------------------------------------------
# rules


@dataclass(frozen=True)
class RuleTerm:
    weight: Fraction | float
    kind: str  # "derivative" | "known_parameter"
    observable: PauliString | None = None
    initial: ProductStateSpec | None = None
    parameter: str | None = None

    def __post_init__(self):
        if self.kind == "derivative" and (self.observable is None or self.initial is None):
            raise ValueError("derivative term needs observable and initial state")
        if self.kind == "known_parameter" and self.parameter is None:
            raise ValueError("known_parameter term needs a parameter name")
        if self.kind not in ("derivative", "known_parameter"):
            raise ValueError(f"unknown term kind {self.kind!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.observable.label(), self.initial.label())


@dataclass(frozen=True)
class IsolationRule:
    target: str
    terms: tuple[RuleTerm, ...]
    equation_tag: str = ""

    def __post_init__(self):
        if not any(t.kind == "derivative" for t in self.terms):
            raise ValueError("rule needs at least one derivative term")

    @property
    def derivative_terms(self) -> list[RuleTerm]:
        return [t for t in self.terms if t.kind == "derivative"]

    @property
    def dependencies(self) -> list[str]:
        return [t.parameter for t in self.terms if t.kind == "known_parameter"]

    def evaluate(self, derivatives: Mapping[tuple[str, str], float], known: Mapping[str, float]) -> float:
        total = 0.0
        for t in self.terms:
            if t.kind == "derivative":
                if t.key not in derivatives:
                    raise RecoveryError(f"missing derivative for {t.key} needed by {self.target}")
                total += float(t.weight) * derivatives[t.key]
            else:
                if t.parameter not in known:
                    raise RecoveryError(f"{self.target} needs {t.parameter} which is not yet recovered")
                total += float(t.weight) * known[t.parameter]
        return total

    def describe(self) -> str:
        parts = []
        for t in self.terms:
            w = str(t.weight)
            if t.kind == "derivative":
                parts.append(f"{w}*d<{t.observable.label()}>[{t.initial.label()}]")
            else:
                parts.append(f"{w}*{t.parameter}")
        return f"{self.target} = " + " + ".join(parts)


def _snap(w: np.ndarray, max_den: int = 240) -> list[Fraction]:
    return [Fraction(float(x)).limit_denominator(max_den) for x in w]


def _candidate_pool(n: int, i: int, j: int) -> list[tuple[PauliString, ProductStateSpec]]:
    """Observables on ``{i, j}`` times + eigenstates with one or both sites fixed."""
    obs = all_pauli_strings(n, (i, j))
    states = [ProductStateSpec(n, ((i, a, 1), (j, b, 1))) for a in AXES for b in AXES]
    states += [ProductStateSpec(n, ((s, a, 1),)) for s in (i, j) for a in AXES]
    return [(O, r) for r in states for O in obs]


def derive_rule(
    target: ParamId,
    candidates: Sequence[tuple[PauliString, ProductStateSpec]],
    unknown: Sequence[ParamId],
    known: Sequence[ParamId] = (),
    tag: str = "",
    tol: float = 1e-9,
) -> IsolationRule | None:
    """Sparsest (L1-minimal) rule isolating ``target`` from ``candidates``, or ``None``.

    ``unknown`` parameters other than the target must cancel exactly; ``known``
    parameters may appear and are moved into ``known_parameter`` terms.
    """
    if target not in unknown:
        raise PlanError(f"target {target} must be among the unknowns")
    params = list(unknown) + list(known)
    A = np.array([derivative_row(O, r, params) for O, r in candidates])  # (r, p)
    nu = len(unknown)
    Au = A[:, :nu]
    e = np.array([1.0 if p == target else 0.0 for p in unknown])
    r = len(candidates)
    # w = wp - wm, minimize sum(wp + wm) s.t. Au^T (wp - wm) = e
    c = np.ones(2 * r)
    A_eq = np.hstack([Au.T, -Au.T])
    res = linprog(c, A_eq=A_eq, b_eq=e, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    w = res.x[:r] - res.x[r:]
    w[np.abs(w) < 1e-10] = 0.0
    snapped = _snap(w)
    ws = np.array([float(x) for x in snapped])
    if np.max(np.abs(Au.T @ ws - e)) > tol:
        ws, snapped = w, [float(x) for x in w]
        if np.max(np.abs(Au.T @ ws - e)) > tol:
            return None
    terms = [
        RuleTerm(snapped[k], "derivative", candidates[k][0], candidates[k][1]) for k in range(r) if ws[k] != 0
    ]
    if known:
        kc = -(A[:, nu:].T @ ws)
        for p, v in zip(known, kc):
            if abs(v) > tol:
                fv = Fraction(float(v)).limit_denominator(240)
                terms.append(RuleTerm(fv if abs(float(fv) - v) < tol else float(v), "known_parameter", parameter=p.name))
    return IsolationRule(target.name, tuple(terms), tag)


# hand-picked candidate pairs per parameter family, as (obs axes (i, j), state axes (i, j));
# ``None`` means identity on that site
def _hint_pairs(p: ParamId, n: int, i: int, j: int):
    def pair(oi, oj, si, sj):
        sup = tuple((s, a) for s, a in ((i, oi), (j, oj)) if a is not None)
        return PauliString(n, sup), ProductStateSpec(n, ((i, si, 1), (j, sj, 1)))

    eta = AXES
    if p.kind == "a2":
        a, b = p.axes
        table = {
            (_X, _X): [(_X, _Y, _Y, _Z), (_Y, _Y, _X, _X)],
            (_Y, _Y): [(_X, _Y, _Z, _Z), (_X, _Y, _Y, _Z), (_Y, _Y, _X, _X)],
            (_Z, _Z): [(_X, _Z, _Y, _X), (_Y, _Y, _Z, _Z)],
            (_X, _Y): [(_Y, _Y, _Z, _Z)],
            (_Y, _Z): [(_Y, _Y, _X, _X)],
            (_X, _Z): [(_X, _Y, _Y, _X), (_Y, _Y, _X, _X)],
        }
        rows = table.get((a, b), []) + table.get((b, a), [])
        return [pair(*r) for r in rows], "hint:" + p.name.split("(")[0]
    if p.kind == "a1":
        (a,) = p.axes
        if p.sites[0] == i:
            spec = {_X: (_Y, _X), _Y: (_X, _Z), _Z: (_X, _Y)}[a]  # (observable axis, state axis on i)
            rows = []
            for e in eta:
                rows += [pair(spec[0], e, spec[1], e), pair(spec[0], None, spec[1], e)]
        else:
            spec = {_X: (_Y, _Z), _Y: (_X, _Z), _Z: (_Y, _X)}[a]  # (observable axis on j, state axis on j)
            rows = []
            for g in eta:
                rows += [pair(g, spec[0], g, spec[1]), pair(None, spec[0], g, spec[1])]
        return rows, "hint:" + p.name.split("(")[0]
    site = p.sites[0]
    if p.kind == "Ddiag":
        rows = []
        for ax in AXES:
            for e in eta:
                if site == i:
                    rows.append(pair(ax, None, ax, e))
                else:
                    rows.append(pair(None, ax, e, ax))
        return rows, "hint:D_diag"
    a, b = p.axes
    rows = []
    for e in eta:
        if site == i:
            rows += [pair(_X, e, _Y, e), pair(_X, e, _Z, e), pair(_Y, e, _Z, e)]
        else:
            rows += [pair(e, _X, e, _Y), pair(e, _X, e, _Z), pair(e, _Y, e, _Z)]
    return rows, "hint:D_offdiag"


def _plan(targets: Sequence[ParamId], family: Sequence[ParamId], n: int, i: int, j: int, use_known: bool = True):
    pool = None
    rules = []
    for t in targets:
        known = [p for p in family if p.stage < t.stage] if use_known else []
        unknown = [p for p in family if p not in known]
        hints, tag = _hint_pairs(t, n, i, j)
        rule = derive_rule(t, hints, unknown, known, tag) if hints else None
        if rule is None:
            if pool is None:
                pool = _candidate_pool(n, i, j)
            rule = derive_rule(t, hints + pool, unknown, known, tag + "+extended")
        if rule is None:
            raise PlanError(f"parameter {t} is not identifiable from the candidate pairs")
        rules.append(rule)
    return rules


def _check_pair(n, i, j):
    if i == j:
        raise PlanError("pair sites must differ")
    if not (0 <= i < n and 0 <= j < n):
        raise PlanError(f"sites {(i, j)} out of range for {n} qubits")


def plan_two_qubit(i: int, j: int, n_qubits: int | None = None) -> list[IsolationRule]:
    """Rules for the nine couplings ``a_ab(i,j)``; robust to any local dissipation."""
    n = n_qubits or max(i, j) + 1
    _check_pair(n, i, j)
    fam = local_parameters(i, j)
    return _plan([p for p in fam if p.kind == "a2"], fam, n, i, j)


def plan_single_qubit(i: int, j: int, n_qubits: int | None = None) -> list[IsolationRule]:
    """Rules for ``a_x, a_y, a_z`` on both sites (may consume recovered couplings)."""
    n = n_qubits or max(i, j) + 1
    _check_pair(n, i, j)
    fam = local_parameters(i, j)
    return _plan([p for p in fam if p.kind == "a1"], fam, n, i, j)


def plan_dissipation(i: int, j: int, n_qubits: int | None = None) -> list[IsolationRule]:
    """Rules for diagonal and off-diagonal (real and imaginary) dissipator entries."""
    n = n_qubits or max(i, j) + 1
    _check_pair(n, i, j)
    fam = local_parameters(i, j)
    return _plan([p for p in fam if p.kind in ("Ddiag", "ReD", "ImD")], fam, n, i, j)


def plan_pair(i: int, j: int, n_qubits: int | None = None) -> list[IsolationRule]:
    return plan_two_qubit(i, j, n_qubits) + plan_single_qubit(i, j, n_qubits) + plan_dissipation(i, j, n_qubits)


def chip_parameters(i: int, j: int) -> list[ParamId]:
    """Parameter family of the chip model for one edge: ``a_z`` fields, ``a_xx``, ``a_yy``, and
    general single-qubit dissipators."""
    fam = [ParamId("a2", (_X, _X), (i, j)), ParamId("a2", (_Y, _Y), (i, j))]
    fam += [ParamId("a1", (_Z,), (s,)) for s in (i, j)]
    fam += [p for p in local_parameters(i, j) if p.kind in ("Ddiag", "ReD", "ImD")]
    return fam


def plan_chip(i: int, j: int, n_qubits: int, targets: Iterable[str] = ("a_xx", "a_yy", "a_z")) -> list[IsolationRule]:
    """Rules restricted to the chip-model family (fewer traces than the general plan).

    Derivative-only rules are used so noisy estimates do not propagate between
    parameters.
    """
    _check_pair(n_qubits, i, j)
    fam = chip_parameters(i, j)
    prefixes = tuple(targets)
    want = [p for p in fam if p.name.split("(")[0] in prefixes]
    return _plan(want, fam, n_qubits, i, j, use_known=False)


def plan_requirements(plan: Sequence[IsolationRule]) -> list[tuple[PauliString, ProductStateSpec]]:
    """Distinct (observable, state) pairs the plan needs, in first-use order."""
    seen = {}
    for rule in plan:
        for t in rule.derivative_terms:
            seen.setdefault(t.key, (t.observable, t.initial))
    return list(seen.values())


def format_plan_table(plan: Sequence[IsolationRule]) -> str:
    """Human-readable table: parameter, weight, observable, state, equation tag."""
    lines = ["parameter\tweight\tobservable\tstate\ttag"]
    for rule in plan:
        for t in rule.terms:
            if t.kind == "derivative":
                lines.append(f"{rule.target}\t{t.weight}\t{t.observable.label()}\t{t.initial.label()}\t{rule.equation_tag}")
            else:
                lines.append(f"{rule.target}\t{t.weight}\t(known {t.parameter})\t-\t{rule.equation_tag}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# recovery


@dataclass
class ParameterResult:
    name: str
    estimate: float
    method: str
    true_value: float | None = None
    derivatives_used: dict = field(default_factory=dict)

    @property
    def error(self) -> float | None:
        return None if self.true_value is None else abs(self.true_value - self.estimate)


@dataclass
class RecoveryReport:
    results: list[ParameterResult] = field(default_factory=list)

    def __len__(self):
        return len(self.results)

    def __getitem__(self, name: str) -> ParameterResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def estimates(self) -> dict[str, float]:
        return {r.name: r.estimate for r in self.results}

    def max_error(self) -> float:
        errs = [r.error for r in self.results if r.error is not None]
        return max(errs) if errs else 0.0

    def write_csv(self, path_or_buf) -> None:
        own = not hasattr(path_or_buf, "write")
        fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("parameter", "method", "estimate", "true_value", "abs_error"))
            for r in self.results:
                w.writerow(
                    (
                        r.name,
                        r.method,
                        repr(float(r.estimate)),
                        "" if r.true_value is None else repr(float(r.true_value)),
                        "" if r.error is None else repr(float(r.error)),
                    )
                )
        finally:
            if own:
                fh.close()


def _order_rules(plan: Sequence[IsolationRule]) -> list[IsolationRule]:
    by_target = {r.target: r for r in plan}
    order, state = [], {}

    def visit(name, stack):
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            raise RecoveryError(f"circular dependency through {' -> '.join(stack + [name])}")
        state[name] = 1
        for dep in by_target[name].dependencies:
            if dep in by_target:
                visit(dep, stack + [name])
        state[name] = 2
        order.append(by_target[name])

    for r in plan:
        visit(r.target, [])
    return order


def recover(
    derivatives: Mapping,
    plan: Sequence[IsolationRule],
    method: str = "interpolation",
    truth: Mapping[str, float] | None = None,
    known: Mapping[str, float] | None = None,
) -> RecoveryReport:
    """Evaluate ``plan`` on derivative estimates keyed by ``(observable label, state label)``.

    Keys may also be ``(label, label, method)`` triples; entries for ``method``
    are then selected.
    """
    derivs = {}
    for k, v in derivatives.items():
        if len(k) == 3:
            if k[2] == method:
                derivs[(k[0], k[1])] = float(v)
        else:
            derivs[tuple(k)] = float(v)
    values = dict(known or {})
    report = RecoveryReport()
    for rule in _order_rules(plan):
        est = rule.evaluate(derivs, values)
        values[rule.target] = est
        used = {t.key: derivs[t.key] for t in rule.derivative_terms}
        tv = None if truth is None else truth.get(rule.target)
        report.results.append(ParameterResult(rule.target, est, method, tv, used))
    return report


def finite_difference_derivative(trace) -> float:
    """Forward difference ``(mean(t0) - f(0)) / t0`` against the trace's reference value."""
    f0, times, means = trace.split_reference()
    if len(times) == 0 or times[0] <= 0:
        raise ValueError("finite difference needs a first sample at t0 > 0")
    return (float(means[0]) - f0) / float(times[0])
