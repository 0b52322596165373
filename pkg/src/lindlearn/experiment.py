"""Experiment orchestration behind the command line: simulate, recover, shadows."""

from __future__ import annotations

import csv
import json
import os
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .exact import ExactPropagator, PauliLindbladian
from .interp import derivative_error_budget, fit_trace
from .isolation import (
    IsolationRule,
    RecoveryReport,
    finite_difference_derivative,
    plan_chip,
    plan_pair,
    plan_requirements,
    recover,
    true_parameters,
)
from .pauli import AXES, PauliString, ProductStateSpec, all_pauli_strings
from .rng import derive_rng
from .shadows import DenseChannel, DepolarizingChannel, IdentityChannel, estimate_overlaps, write_overlaps_csv
from .simulator import (
    LindbladModel,
    TimeTrace,
    apply_measurement_noise,
    evolve_and_measure_many,
    read_traces_csv,
    write_traces_csv,
)

__all__ = [
    "MissingTraceError",
    "sample_times",
    "build_plan",
    "simulate_traces",
    "trace_filename",
    "write_trace_files",
    "read_trace_files",
    "recover_parameters",
    "write_fit_records",
    "run_shadows",
    "shadow_trace_means",
    "write_rows_csv",
]

METHOD_KEYS = {"interp": ("interpolation",), "fd": ("finite_difference",), "both": ("interpolation", "finite_difference")}


class MissingTraceError(KeyError):
    """A plan needs an (observable, state) pair with no trace on disk."""


def sample_times(t0: float, t_max: float, n: int, spacing: str = "chebyshev") -> np.ndarray:
    """Measurement times on ``[t0, t_max]``; Chebyshev spacing includes both ends."""
    if spacing == "uniform":
        return np.linspace(t0, t_max, n)
    # Chebyshev extrema (Lobatto points) so the first sample sits exactly at t0
    u = -np.cos(np.pi * np.arange(n) / (n - 1))
    t = 0.5 * (t0 + t_max) + 0.5 * (t_max - t0) * u
    t[0], t[-1] = t0, t_max
    return t


def build_plan(cfg: ExperimentConfig) -> list[IsolationRule]:
    i, j = cfg.target.pair
    n = cfg.model.n
    if cfg.target.plan == "pair":
        return plan_pair(i, j, n)
    if not cfg.target.parameters:
        return []
    return plan_chip(i, j, n, tuple(cfg.target.parameters))


def _group_by_state(reqs):
    groups: "OrderedDict[str, tuple[ProductStateSpec, list[PauliString]]]" = OrderedDict()
    for O, rho in reqs:
        groups.setdefault(rho.label(), (rho, []))[1].append(O)
    return groups


def simulate_traces(cfg: ExperimentConfig, model: LindbladModel | None = None, plan=None) -> list[TimeTrace]:
    """One trace per (observable, state) the plan needs, from the configured engine."""
    model = model or cfg.model.build(cfg.master_seed)
    plan = build_plan(cfg) if plan is None else plan
    reqs = plan_requirements(plan)
    times = sample_times(cfg.grid.t0, cfg.grid.t_max, cfg.grid.n_points, cfg.grid.spacing)
    sim = cfg.sim.to_sim_config(cfg.master_seed)
    traces = []
    groups = _group_by_state(reqs)
    if cfg.sim.engine == "trajectory":
        for rho, obs in groups.values():
            traces.extend(evolve_and_measure_many(model, rho, obs, times, sim, reference=True))
        return traces
    if cfg.sim.engine == "exact":
        prop = ExactPropagator(model, sim.dephasing_convention, cfg.sim.quadrature_nodes)
        for rho, obs in groups.values():
            vals = prop.expectations(rho, obs, times)
            for O, mean in zip(obs, vals):
                rng = derive_rng(cfg.master_seed, "measurement", rho.label(), O.label())
                noisy = apply_measurement_noise(mean, sim.noise_mode, sim.noise_level, rng)
                # reference row: the prepared state's exact value
                t = np.concatenate([[0.0], times])
                m = np.concatenate([[rho.expectation(O)], noisy])
                traces.append(TimeTrace(O, rho, t, m, np.zeros(len(t)), sim.noise_mode, sim.noise_level, cfg.master_seed))
        return traces
    return shadow_trace_means(cfg, model, reqs, times)


def shadow_trace_means(cfg: ExperimentConfig, model: LindbladModel, reqs, times) -> list[TimeTrace]:
    """Trace means assembled from shadow overlaps, one independent shadow run per time.

    ``tr(O Phi_t(rho)) = sum_R c_R 2^-n tr(O Phi_t(R))`` for ``rho = 2^-n sum_R c_R R``.
    """
    sh = cfg.shadows
    obs = list(OrderedDict((O.label(), O) for O, _ in reqs).values())
    states = list(OrderedDict((r.label(), r) for _, r in reqs).values())
    # the identity input needs no special case: its estimator ignores the preparation
    inputs = list(OrderedDict((R.label(), R) for r in states for _, R in r.expansion()).values())
    means = {(O.label(), r.label()): np.zeros(len(times)) for O, r in reqs}
    for ti, t in enumerate(times):
        chan = DenseChannel.from_lindbladian(model, float(t), cfg.sim.dephasing_convention, cfg.sim.quadrature_nodes)
        rng = derive_rng(cfg.master_seed, "shadow-trace", ti)
        est = {
            (e.P_a.label(), e.P_b.label()): e.value
            for e in estimate_overlaps(chan, obs, inputs, sh.epsilon, sh.delta, rng, sh.omega_cap, 1.0)
        }
        for O, r in reqs:
            means[(O.label(), r.label())][ti] = sum(c * est[(O.label(), R.label())] for c, R in r.expansion())
    return [
        TimeTrace(O, r, times, means[(O.label(), r.label())], np.full(len(times), sh.epsilon), "shadows", sh.epsilon, cfg.master_seed)
        for O, r in reqs
    ]


def trace_filename(trace_or_key) -> str:
    obs, state = trace_or_key.key if isinstance(trace_or_key, TimeTrace) else trace_or_key
    clean = lambda s: s.replace("+", "p").replace("-", "m").replace(" ", "_")  # noqa: E731
    return f"{clean(obs)}__{clean(state)}.csv"


def write_trace_files(traces, directory) -> list[Path]:
    """One CSV per trace in ``directory``; returns the paths in trace order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for tr in traces:
        p = directory / trace_filename(tr)
        write_traces_csv([tr], p)
        paths.append(p)
    return paths


def read_trace_files(directory, n_qubits: int) -> dict[tuple[str, str], TimeTrace]:
    out = {}
    for name in sorted(os.listdir(directory)):
        if name.endswith(".csv"):
            for tr in read_traces_csv(os.path.join(directory, name), n_qubits):
                out[tr.key] = tr
    return out


def _truth(cfg: ExperimentConfig, model: LindbladModel) -> dict[str, float]:
    i, j = cfg.target.pair
    return true_parameters(PauliLindbladian.from_model(model, cfg.sim.dephasing_convention), i, j)


def recover_parameters(
    cfg: ExperimentConfig,
    traces: dict[tuple[str, str], TimeTrace],
    method: str = "both",
    plan=None,
    model: LindbladModel | None = None,
) -> tuple[dict[str, RecoveryReport], list[dict]]:
    """Fit every needed trace and evaluate the plan.  Returns per-method reports and fit records."""
    plan = build_plan(cfg) if plan is None else plan
    model = model or cfg.model.build(cfg.master_seed)
    methods = METHOD_KEYS[method]
    fit_cfg = cfg.fit.to_fit_config()
    derivs: dict = {}
    records = []
    for O, rho in plan_requirements(plan):
        key = (O.label(), rho.label())
        if key not in traces:
            raise MissingTraceError(f"no trace for observable {key[0]!r} on state {key[1]!r}")
        tr = traces[key]
        if "interpolation" in methods:
            fit, d0, scores = fit_trace(tr, fit_cfg)
            derivs[key + ("interpolation",)] = d0
            sigma = tr.noise_level if tr.noise_mode == "gaussian" else 0.0
            _, x, _ = tr.split_reference()
            a, b = float(x[0]), float(x[-1])
            rec = {"observable": key[0], "initial_state": key[1], **fit.to_record(), "derivative_at_zero": d0}
            rec["error_budget"] = derivative_error_budget(a, b, fit.degree, sigma) if sigma else 0.0
            rec["cv_scores"] = {str(k): v for k, v in scores.items()}
            records.append(rec)
        if "finite_difference" in methods:
            derivs[key + ("finite_difference",)] = finite_difference_derivative(tr)
    truth = _truth(cfg, model)
    reports = {m: recover(derivs, plan, m, truth) for m in methods}
    return reports, records


def write_fit_records(records: list[dict], path) -> None:
    """JSON-lines fit report (one record per trace, keys sorted)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _shadow_pairs(cfg: ExperimentConfig, n: int):
    sh = cfg.shadows
    if sh.pairs:
        return [(PauliString.parse(a, n), PauliString.parse(b, n)) for a, b in sh.pairs]
    strings = all_pauli_strings(n, range(n), sh.max_weight)
    strings = [s for s in strings if s.weight > 0]
    return [(a, b) for a in strings for b in strings]


def run_shadows(cfg: ExperimentConfig, path=None):
    """Overlap estimates for the configured channel; optionally written as CSV."""
    sh = cfg.shadows
    if sh.channel == "lindblad":
        model = cfg.model.build(cfg.master_seed)
        n = model.n_qubits
        chan = DenseChannel.from_lindbladian(model, sh.time_us, cfg.sim.dephasing_convention, cfg.sim.quadrature_nodes)
    elif sh.channel == "depolarizing":
        n = sh.n_qubits
        chan = DepolarizingChannel(n, sh.depolarizing_p)
    else:
        n = sh.n_qubits
        chan = IdentityChannel(n)
    pairs = _shadow_pairs(cfg, n)
    pa = list(OrderedDict((a.label(), a) for a, _ in pairs).values())
    pb = list(OrderedDict((b.label(), b) for _, b in pairs).values())
    est = estimate_overlaps(chan, pa, pb, sh.epsilon, sh.delta, derive_rng(cfg.master_seed, "shadows"), sh.omega_cap, sh.normalization, AXES)
    want = {(a.label(), b.label()) for a, b in pairs}
    est = [e for e in est if (e.P_a.label(), e.P_b.label()) in want]
    if path is not None:
        write_overlaps_csv(est, path)
    return est


def write_rows_csv(rows: list[dict], path, columns) -> None:
    """Plain CSV with ``repr`` floats (locale-free, exact)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c] for c in columns])

