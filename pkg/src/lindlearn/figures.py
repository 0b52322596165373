"""Desk-scale reproductions of the three recovery-error figures (data only, no plotting).

All three compare interpolation (anchored robust fit, degree chosen by
cross-validation) with the forward difference ``(y(t0) - f(0)) / t0`` on the
``a_xx`` coupling of one edge.  The noise sweep also reports a fixed-degree
curve, where the approximation bias sits below the finest noise level and the
error is pure noise propagation.  Noise-free base traces come from the exact
engine; Gaussian noise with the figure's ``sigma`` is added afterwards, with
one standard-normal vector per (instance, term) shared across the sigma sweep.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .chip import chip_model, sample_gaussian_lattice
from .config import ExperimentConfig, lattice_shape
from .exact import ExactPropagator, forward_difference_bias
from .experiment import sample_times
from .interp import derivative_at_zero, robust_fit, select_degree
from .isolation import IsolationRule, plan_chip
from .rng import derive_rng
from .simulator import SimConfig, evolve_and_measure_many

__all__ = ["MAX_EXACT_QUBITS", "FigureResult", "coupling_errors", "figure2", "figure3", "figure4", "run_figure"]

# tensor quadrature over quasi-static shifts costs 3^n diagonalizations
MAX_EXACT_QUBITS = 6
FIG3_COLUMNS = ("n_qubits", "sigma", "method", "median", "p25", "p75", "instances")
FIG2_COLUMNS = ("t0", "sigma", "method", "median", "p25", "p75", "instances")
FIG4_COLUMNS = ("edge", "site_i", "site_j", "truth", "method", "median", "p25", "p75", "repetitions")


@dataclass
class FigureResult:
    name: str
    columns: tuple[str, ...]
    rows: list[dict]
    seconds: float


def _base_traces(model, rule: IsolationRule, times, seed_keys, n_trajectories: int, engine=None):
    """``[(weight, f0, base values)]`` per derivative term of ``rule``."""
    out = []
    if model.n_qubits <= MAX_EXACT_QUBITS:
        engine = engine or ExactPropagator(model)
        for t in rule.derivative_terms:
            vals = engine.expectations(t.initial, [t.observable], times)[0]
            out.append((float(t.weight), t.initial.expectation(t.observable), vals))
        return out
    sim = SimConfig(n_trajectories=n_trajectories, noise_mode="none", master_seed=int(derive_rng(*seed_keys).integers(2**31)))
    for t in rule.derivative_terms:
        tr = evolve_and_measure_many(model, t.initial, [t.observable], times, sim, reference=True)[0]
        out.append((float(t.weight), float(tr.means[0]), tr.means[1:]))
    return out


def coupling_errors(base, times, truth: float, sigmas, noise_rng: np.random.Generator, fit_cfg, fixed_degrees=()):
    """``{sigma: (interp error, fd error, *fixed-degree errors)}`` for one instance.

    One noise draw per term is shared by every sigma and every fit.
    """
    z = [noise_rng.normal(size=len(times)) for _ in base]
    domain = (0.0, float(times[-1]))
    out = {}
    for s in sigmas:
        est = np.zeros(2 + len(fixed_degrees))
        for (w, f0, vals), zk in zip(base, z):
            y = vals + s * zk
            fit, _ = select_degree(times, y, fit_cfg, domain=domain, anchor=f0)
            est[0] += w * derivative_at_zero(fit)
            est[1] += w * (y[0] - f0) / times[0]
            for k, d in enumerate(fixed_degrees):
                est[2 + k] += w * derivative_at_zero(robust_fit(times, y, d, fit_cfg, domain, f0))
        out[s] = tuple(float(v) for v in np.abs(est - truth))
    return out


def _stats(values):
    v = np.asarray(values, dtype=float)
    return float(np.median(v)), float(np.percentile(v, 25)), float(np.percentile(v, 75))


def _lattice(cfg: ExperimentConfig, n: int, rng):
    rows, cols = lattice_shape(n)
    m = cfg.model
    return sample_gaussian_lattice(rows, cols, rng, m.coupling_std_khz, m.frequency_std_khz, t2star=m.t2star_us)


def _edge_index(model, i, j):
    for k, e in enumerate(model.edges):
        if set(e) == {i, j}:
            return k
    raise ValueError(f"no edge ({i}, {j})")


def figure3(cfg: ExperimentConfig, qubits=None, progress=None) -> FigureResult:
    """Median coupling error against injected noise sigma at fixed ``t0``.

    Each instance draws a fresh Gaussian lattice (Hamiltonian plus quasi-static
    shifts).  With ``fixed_degree > 0`` rows ``interpolation_d<k>`` give the
    same fit at that degree.  Rows with ``method = taylor_bias`` give the analytic forward
    difference bias ``sum_k t0^(k-1) f^(k)(0) / k!`` of the same rule.
    """
    start = time.perf_counter()
    fig = cfg.figure
    fit_cfg = cfg.fit.to_fit_config()
    rows = []
    for n in qubits or fig.qubits:
        rule = plan_chip(0, 1, n, ("a_xx",))[0]
        times = sample_times(fig.t0, fig.t0 + fig.window_us, fig.n_points)
        fixed = (fig.fixed_degree,) if fig.fixed_degree else ()
        methods = ("interpolation", "finite_difference") + tuple(f"interpolation_d{d}" for d in fixed)
        errs = {s: tuple([] for _ in methods) for s in fig.sigmas}
        bias = []
        for inst in range(fig.instances):
            model = _lattice(cfg, n, derive_rng(cfg.master_seed, "fig3", "model", n, inst))
            truth = model.coupling[_edge_index(model, 0, 1)]
            base = _base_traces(model, rule, times, (cfg.master_seed, "fig3", "traj", n, inst), cfg.sim.n_trajectories)
            if n <= MAX_EXACT_QUBITS:
                bias.append(abs(sum(float(t.weight) * forward_difference_bias(model, t.initial, t.observable, fig.t0) for t in rule.derivative_terms)))
            res = coupling_errors(base, times, truth, fig.sigmas, derive_rng(cfg.master_seed, "fig3", "noise", n, inst), fit_cfg, fixed)
            for s, vals in res.items():
                for store, v in zip(errs[s], vals):
                    store.append(v)
            if progress:
                progress(f"fig3 n={n} instance {inst + 1}/{fig.instances}")
        for s in fig.sigmas:
            for method, vals in zip(methods, errs[s]):
                rows.append(dict(zip(FIG3_COLUMNS, (n, float(s), method, *_stats(vals), fig.instances))))
        if bias:
            rows.append(dict(zip(FIG3_COLUMNS, (n, 0.0, "taylor_bias", *_stats(bias), fig.instances))))
    return FigureResult("fig3", FIG3_COLUMNS, rows, time.perf_counter() - start)


def figure2(cfg: ExperimentConfig, n: int | None = None, progress=None) -> FigureResult:
    """Median coupling error against ``t0`` with ``t0 * S`` fixed, so ``sigma = sqrt(t0 / (t0 S))``."""
    start = time.perf_counter()
    fig = cfg.figure
    n = n or fig.qubits[0]
    fit_cfg = cfg.fit.to_fit_config()
    rule = plan_chip(0, 1, n, ("a_xx",))[0]
    rows = []
    models = [_lattice(cfg, n, derive_rng(cfg.master_seed, "fig2", "model", n, k)) for k in range(fig.instances)]
    engines = [ExactPropagator(m) if n <= MAX_EXACT_QUBITS else None for m in models]
    for ti, t0 in enumerate(fig.t0_values):
        sigma = float(np.sqrt(t0 / fig.total_samples))
        times = sample_times(t0, t0 + fig.window_us, fig.n_points)
        ei, ef = [], []
        for inst, (model, eng) in enumerate(zip(models, engines)):
            truth = model.coupling[_edge_index(model, 0, 1)]
            base = _base_traces(model, rule, times, (cfg.master_seed, "fig2", "traj", n, inst, ti), cfg.sim.n_trajectories, eng)
            res = coupling_errors(base, times, truth, [sigma], derive_rng(cfg.master_seed, "fig2", "noise", n, inst, ti), fit_cfg)
            ei.append(res[sigma][0])
            ef.append(res[sigma][1])
        for method, vals in (("interpolation", ei), ("finite_difference", ef)):
            rows.append(dict(zip(FIG2_COLUMNS, (float(t0), sigma, method, *_stats(vals), fig.instances))))
        if progress:
            progress(f"fig2 t0={t0}")
    return FigureResult("fig2", FIG2_COLUMNS, rows, time.perf_counter() - start)


def figure4(cfg: ExperimentConfig, sites=None, progress=None) -> FigureResult:
    """Per-edge ``a_xx`` error on the tabulated chip with full noise, ``t0 = chip_t0``.

    Each edge gets ``repetitions`` independent noise draws at ``chip_sigma``;
    rows report the median and quartiles over those draws.
    """
    start = time.perf_counter()
    fig = cfg.figure
    fit_cfg = cfg.fit.to_fit_config()
    if sites is None:
        sites = cfg.model.sites if cfg.model.kind == "chip" else [1, 2, 6, 7]
    model, sites = chip_model(tuple(sites), noise=True, include_t2star=True)
    engine = ExactPropagator(model) if model.n_qubits <= MAX_EXACT_QUBITS else None
    times = sample_times(fig.chip_t0, fig.chip_t0 + fig.chip_window_us, fig.n_points)
    rows = []
    for k, (i, j) in enumerate(model.edges):
        rule = plan_chip(i, j, model.n_qubits, ("a_xx",))[0]
        truth = model.coupling[k]
        base = _base_traces(model, rule, times, (cfg.master_seed, "fig4", "traj", k), cfg.sim.n_trajectories, engine)
        ei, ef = [], []
        for r in range(fig.repetitions):
            res = coupling_errors(base, times, truth, [fig.chip_sigma], derive_rng(cfg.master_seed, "fig4", "noise", k, r), fit_cfg)
            ei.append(res[fig.chip_sigma][0])
            ef.append(res[fig.chip_sigma][1])
        label = f"{sites[i]}-{sites[j]}"
        for method, vals in (("interpolation", ei), ("finite_difference", ef)):
            rows.append(dict(zip(FIG4_COLUMNS, (label, sites[i], sites[j], float(truth), method, *_stats(vals), fig.repetitions))))
        if progress:
            progress(f"fig4 edge {label}")
    return FigureResult("fig4", FIG4_COLUMNS, rows, time.perf_counter() - start)


def run_figure(which: str, cfg: ExperimentConfig, progress=None, **kwargs) -> FigureResult:
    funcs = {"fig2": figure2, "fig3": figure3, "fig4": figure4}
    if which not in funcs:
        raise ValueError(f"unknown figure {which!r}")
    return funcs[which](cfg, progress=progress, **kwargs)
