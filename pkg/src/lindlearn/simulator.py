"""Stochastic-trajectory simulator of the noisy qubit-chip model.

Each trajectory is a state vector evolved by a symmetric Suzuki-Trotter step of

    H = sum_edges J_jk (X_j X_k + Y_j Y_k) + 1/2 sum_j (Omega_j + beta_j) Z_j

followed by a random z-rotation (Markovian dephasing, ``T2``) and a quantum-jump
step (amplitude damping towards ``|0>``, ``T1``).  ``beta_j`` is a quasi-static
Gaussian frequency shift drawn once per trajectory (``T2*``).  Maximally mixed
qubits are represented by a normalized complex Gaussian random vector.

Units: time in microseconds, frequencies and couplings in rad/us.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .pauli import PauliAxis, PauliString, ProductStateSpec, eigenstate, pauli_phases
from .rng import derive_rng

__all__ = [
    "KHZ_TO_RAD_PER_US",
    "LindbladModel",
    "NoiseRealization",
    "SimConfig",
    "TimeTrace",
    "sample_initial_state",
    "trotter_step",
    "apply_markovian_dephasing",
    "apply_amplitude_damping",
    "evolve_and_measure",
    "evolve_and_measure_many",
    "evolve_states",
    "trajectory_values",
    "apply_measurement_noise",
    "dephasing_angle_variance",
    "write_traces_csv",
    "read_traces_csv",
]

KHZ_TO_RAD_PER_US = 2 * math.pi * 1e-3
DEPHASING_CONVENTIONS = ("calibrated", "half_angle", "full_angle")


@dataclass(frozen=True)
class LindbladModel:
    """Chip model: exchange graph, qubit frequencies and per-qubit noise times.

    ``coupling[e]`` is ``J`` for ``edges[e]``; noise times may be ``inf`` to
    switch a channel off.  The coherence times are stored as given, no
    ``T2 <= 2 T1`` consistency is imposed.
    """

    n_qubits: int
    edges: tuple[tuple[int, int], ...] = ()
    coupling: tuple[float, ...] = ()
    frequency: tuple[float, ...] = ()
    t1: tuple[float, ...] = ()
    t2: tuple[float, ...] = ()
    t2star: tuple[float, ...] = ()

    def __post_init__(self):
        n = self.n_qubits
        if n < 1:
            raise ValueError("n_qubits must be positive")
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        seen = set()
        for a, b in edges:
            if a == b or not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"invalid edge {(a, b)} for {n} qubits")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
        inf = (math.inf,) * n
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "coupling", tuple(float(x) for x in (self.coupling or (0.0,) * len(edges))))
        object.__setattr__(self, "frequency", tuple(float(x) for x in (self.frequency or (0.0,) * n)))
        for name in ("t1", "t2", "t2star"):
            vals = tuple(float(x) for x in (getattr(self, name) or inf))
            if len(vals) != n:
                raise ValueError(f"{name} needs {n} entries")
            if any(not v > 0 for v in vals):
                raise ValueError(f"{name} entries must be positive")
            object.__setattr__(self, name, vals)
        if len(self.coupling) != len(edges):
            raise ValueError("one coupling per edge required")
        if len(self.frequency) != n:
            raise ValueError(f"frequency needs {n} entries")

    @classmethod
    def from_khz(cls, n_qubits, edges, coupling_khz, frequency_khz, t1=(), t2=(), t2star=()):
        """Build from couplings/frequencies in kHz (converted with 2*pi*1e-3)."""
        return cls(
            n_qubits,
            tuple(edges),
            tuple(KHZ_TO_RAD_PER_US * c for c in coupling_khz),
            tuple(KHZ_TO_RAD_PER_US * f for f in frequency_khz),
            tuple(t1),
            tuple(t2),
            tuple(t2star),
        )

    def without_noise(self) -> "LindbladModel":
        return replace(self, t1=(), t2=(), t2star=())

    def with_noise(self, t1=(), t2=(), t2star=()) -> "LindbladModel":
        return replace(self, t1=tuple(t1), t2=tuple(t2), t2star=tuple(t2star))

    @property
    def static_shift_std(self) -> np.ndarray:
        """Std of the quasi-static shifts, ``sqrt(2)/T2*`` per qubit."""
        return np.sqrt(2.0) / np.asarray(self.t2star)

    def hamiltonian_terms(self) -> list[tuple[float, PauliString]]:
        """Pauli-word expansion ``H = sum a P`` (``a_xx = a_yy = J``, ``a_z = Omega/2``)."""
        n = self.n_qubits
        terms = []
        for (a, b), J in zip(self.edges, self.coupling):
            if J:
                terms.append((J, PauliString(n, ((a, PauliAxis.X), (b, PauliAxis.X)))))
                terms.append((J, PauliString(n, ((a, PauliAxis.Y), (b, PauliAxis.Y)))))
        for j, w in enumerate(self.frequency):
            if w:
                terms.append((0.5 * w, PauliString(n, ((j, PauliAxis.Z),))))
        return terms

    def neighbours(self, site: int) -> list[int]:
        return sorted({b if a == site else a for a, b in self.edges if site in (a, b)})

    def has_edge(self, i: int, j: int) -> bool:
        return any({a, b} == {i, j} for a, b in self.edges)


@dataclass
class NoiseRealization:
    static_shifts: np.ndarray
    rng: np.random.Generator

    @classmethod
    def draw(cls, model: LindbladModel, rng: np.random.Generator) -> "NoiseRealization":
        std = np.where(np.isfinite(model.t2star), model.static_shift_std, 0.0)
        return cls(rng.normal(size=model.n_qubits) * std, rng)


@dataclass(frozen=True)
class SimConfig:
    """Trajectory-simulation settings.

    ``noise_mode`` is ``"gaussian"`` (add N(0, noise_level^2) to each mean),
    ``"shots"`` (replace each mean by the average of ``noise_level`` +/-1
    outcomes) or ``"none"``.  ``dt=None`` picks ``min(T1, T2)/1000`` capped at a
    tenth of the first positive measurement time.
    """

    dt: float | None = None
    n_trajectories: int = 189
    noise_mode: str = "gaussian"
    noise_level: float = 0.0
    master_seed: int = 0
    dephasing_convention: str = "calibrated"
    chunk_size: int | None = None
    n_workers: int = 1

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be positive")
        if self.noise_mode not in ("gaussian", "shots", "none"):
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")
        if self.noise_mode == "shots" and int(self.noise_level) < 1:
            raise ValueError("shots mode needs noise_level >= 1 shots")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")
        if self.dephasing_convention not in DEPHASING_CONVENTIONS:
            raise ValueError(f"unknown dephasing_convention {self.dephasing_convention!r}")

    def resolve_dt(self, model: LindbladModel, times: Sequence[float]) -> float:
        limit = min(min(model.t1), min(model.t2))
        positive = [t for t in times if t > 0]
        if self.dt is not None:
            if math.isfinite(limit) and self.dt > limit / 100:
                raise ValueError(f"dt={self.dt} exceeds min(T1, T2)/100 = {limit / 100}")
            return self.dt
        dt = limit / 1000 if math.isfinite(limit) else math.inf
        if positive:
            dt = min(dt, min(positive) / 10)
        if not math.isfinite(dt):
            dt = 1e-2
        return dt


@dataclass
class TimeTrace:
    """Estimated ``<O>(t)`` on one initial product state."""

    observable: PauliString
    initial: ProductStateSpec
    times: np.ndarray
    means: np.ndarray
    std_errors: np.ndarray
    noise_mode: str = "none"
    noise_level: float = 0.0
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.std_errors = np.asarray(self.std_errors, dtype=float)
        if not (len(self.times) == len(self.means) == len(self.std_errors)):
            raise ValueError("times, means and std_errors must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def key(self) -> tuple[str, str]:
        return (self.observable.label(), self.initial.label())

    @property
    def has_reference(self) -> bool:
        """A row at ``t = 0`` holds the noise-free value of the prepared ensemble."""
        return len(self.times) > 0 and self.times[0] == 0.0

    def split_reference(self) -> tuple[float, np.ndarray, np.ndarray]:
        """``(f(0), times, means)`` with the reference row removed.

        Without a reference row ``f(0)`` is the analytic ``tr(O rho_0)``.
        """
        if self.has_reference:
            return float(self.means[0]), self.times[1:], self.means[1:]
        return self.initial.expectation(self.observable), self.times, self.means

    def __len__(self):
        return len(self.times)


# ---------------------------------------------------------------------------
# state preparation


def sample_initial_state(spec: ProductStateSpec, rng: np.random.Generator) -> np.ndarray:
    """State vector for ``spec``; unfixed qubits get a random Gaussian vector."""
    n = spec.n_qubits
    fixed = {s: (a, e) for s, a, e in spec.fixed}
    free = [s for s in range(n) if s not in fixed]
    if free:
        dim = 2 ** len(free)
        v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        v /= np.linalg.norm(v)
    else:
        v = np.ones(1, dtype=complex)
    # build in order (fixed sites..., free block) then permute axes to site order
    tensors = [eigenstate(*fixed[s]) for s in sorted(fixed)]
    psi = np.ones(1, dtype=complex)
    for t in tensors:
        psi = np.kron(psi, t)
    psi = np.kron(psi, v)
    order = sorted(fixed) + free
    psi = psi.reshape((2,) * n) if n else psi
    psi = np.moveaxis(psi, list(range(n)), order)
    return np.ascontiguousarray(psi).reshape(-1)


# ---------------------------------------------------------------------------
# unitary and noise steps (batched over leading axis)


class _Kernel:
    """Precomputed index/phase tables for one model."""

    def __init__(self, model: LindbladModel):
        n = model.n_qubits
        self.model = model
        self.n = n
        idx = np.arange(2**n)
        self.zsign = (1 - 2 * ((idx[None, :] >> (n - 1 - np.arange(n))[:, None]) & 1)).astype(float)  # (n, 2^n)
        self.xx, self.yy = [], []
        for (a, b), J in zip(model.edges, model.coupling):
            if J == 0:
                continue
            px = pauli_phases(PauliString(n, ((a, PauliAxis.X), (b, PauliAxis.X))))
            py = pauli_phases(PauliString(n, ((a, PauliAxis.Y), (b, PauliAxis.Y))))
            self.xx.append((J, px[0], px[1]))
            self.yy.append((J, py[0], py[1]))
        self.omega = np.asarray(model.frequency)
        self.t1 = np.asarray(model.t1)
        self.t2 = np.asarray(model.t2)
        # amplitude-damping index pairs: (indices with bit j = 0, partner with bit j = 1)
        self.pairs = []
        for j in range(n):
            bit = 1 << (n - 1 - j)
            lo = idx[(idx & bit) == 0]
            self.pairs.append((lo, lo | bit))

    def z_phase(self, angles: np.ndarray) -> np.ndarray:
        """``exp(-i sum_j angles_j Z_j)`` as diagonal phases; angles shape (..., n)."""
        return np.exp(-1j * (angles @ self.zsign))

    def pair_rotation(self, psi, terms, scale):
        for J, perm, phase in terms:
            th = J * scale
            psi = math.cos(th) * psi - 1j * math.sin(th) * (phase * psi[..., perm])
        return psi

    def unitary_step(self, psi, shifts, dt):
        zph = self.z_phase((self.omega + shifts) * (dt / 4.0))
        psi = zph * psi
        psi = self.pair_rotation(psi, self.yy, dt / 2)
        psi = self.pair_rotation(psi, self.xx, dt)
        psi = self.pair_rotation(psi, self.yy, dt / 2)
        return zph * psi


def trotter_step(psi: np.ndarray, model: LindbladModel, realization: NoiseRealization | None, dt: float) -> np.ndarray:
    """One symmetric step ``e^{-iH_Z dt/2} e^{-iH_Y dt/2} e^{-iH_X dt} e^{-iH_Y dt/2} e^{-iH_Z dt/2}``."""
    shifts = np.zeros(model.n_qubits) if realization is None else np.asarray(realization.static_shifts)
    return _Kernel(model).unitary_step(np.asarray(psi, dtype=complex), shifts, dt)


def dephasing_angle_variance(t2, dt, convention: str = "calibrated"):
    """Variance of the per-step random z-rotation angle.

    ``half_angle`` and ``full_angle`` use ``4 dt / T2`` with the rotation
    ``exp(-i g Z / 2)`` and ``exp(-i g Z)`` respectively; ``calibrated`` uses
    ``2 dt / T2`` with ``exp(-i g Z / 2)`` so an isolated qubit's coherence
    decays as ``exp(-t / T2)``.
    """
    t2 = np.asarray(t2, dtype=float)
    k = 2.0 if convention == "calibrated" else 4.0
    return np.where(np.isfinite(t2), k * dt / t2, 0.0)


def _dephasing_angle_factor(convention: str) -> float:
    return 1.0 if convention == "full_angle" else 0.5


def apply_markovian_dephasing(psi, model: LindbladModel, dt: float, rng, convention: str = "calibrated", normals=None):
    """Random z-rotation per qubit with angle variance from :func:`dephasing_angle_variance`."""
    psi = np.asarray(psi, dtype=complex)
    var = dephasing_angle_variance(model.t2, dt, convention)
    if not np.any(var > 0):
        return psi
    batch = psi.shape[:-1]
    if normals is None:
        normals = rng.normal(size=batch + (model.n_qubits,))
    angles = normals * np.sqrt(var) * _dephasing_angle_factor(convention)
    return _Kernel(model).z_phase(angles) * psi


def _damp(psi, kernel: _Kernel, dt: float, uniforms):
    """Jump/no-jump update for every qubit with finite T1; ``uniforms`` shape (batch, n)."""
    for j in range(kernel.n):
        t1 = kernel.t1[j]
        if not math.isfinite(t1):
            continue
        lo, hi = kernel.pairs[j]
        mu2 = -math.expm1(-dt / t1)
        norm2 = np.sum(np.abs(psi) ** 2, axis=-1)
        w1 = np.sum(np.abs(psi[..., hi]) ** 2, axis=-1) / norm2
        jump = uniforms[..., j] < w1 * mu2
        decay = math.exp(-0.5 * dt / t1)
        new_lo = np.where(jump[..., None], math.sqrt(mu2) * psi[..., hi], psi[..., lo])
        new_hi = np.where(jump[..., None], 0.0, decay * psi[..., hi])
        psi = psi.copy()
        psi[..., lo] = new_lo
        psi[..., hi] = new_hi
    return psi / np.linalg.norm(psi, axis=-1, keepdims=True)


def apply_amplitude_damping(psi, model: LindbladModel, dt: float, rng, uniforms=None) -> np.ndarray:
    """Quantum-jump unraveling of amplitude damping, site by site, then renormalize."""
    psi = np.asarray(psi, dtype=complex)
    if not np.any(np.isfinite(model.t1)):
        return psi
    if uniforms is None:
        uniforms = rng.random(size=psi.shape[:-1] + (model.n_qubits,))
    return _damp(psi, _Kernel(model), dt, uniforms)


# ---------------------------------------------------------------------------
# ensemble evolution


def _time_grid(times: np.ndarray, dt: float) -> list[tuple[int, float]]:
    """Segments ``(n_steps, h)`` so each requested time lands on a step boundary."""
    segs = []
    prev = 0.0
    for t in times:
        gap = t - prev
        if gap <= 0:
            segs.append((0, 0.0))
        else:
            k = max(1, math.ceil(gap / dt - 1e-9))
            segs.append((k, gap / k))
        prev = t
    return segs


def _run_chunk(kernel: _Kernel, spec, observables, segs, indices, config: SimConfig, stream):
    """Evolve trajectories ``indices``; returns expectations, or final states if ``observables`` is None.

    ``spec`` may be a single product state or a callable ``traj -> spec``.
    """
    model = kernel.model
    n = model.n_qubits
    total_steps = sum(k for k, _ in segs)
    conv = config.dephasing_convention
    need_deph = bool(np.any(np.isfinite(model.t2)))
    need_damp = bool(np.any(np.isfinite(model.t1)))
    shift_std = np.where(np.isfinite(model.t2star), model.static_shift_std, 0.0)

    states, shifts, normals, uniforms = [], [], [], []
    for traj in indices:
        rng = derive_rng(config.master_seed, "trajectory", *stream, int(traj))
        states.append(sample_initial_state(spec(traj) if callable(spec) else spec, rng))
        shifts.append(rng.normal(size=n) * shift_std)
        normals.append(rng.normal(size=(total_steps, n)) if need_deph else None)
        uniforms.append(rng.random(size=(total_steps, n)) if need_damp else None)
    psi = np.stack(states)
    shifts = np.stack(shifts)
    if need_deph:
        normals = np.stack(normals, axis=1)  # (steps, batch, n)
    if need_damp:
        uniforms = np.stack(uniforms, axis=1)

    tables = [pauli_phases(O) for O in observables or ()]
    out = np.empty((len(tables), len(segs), len(indices)))
    step = 0
    factor = _dephasing_angle_factor(conv)
    for ti, (k, h) in enumerate(segs):
        if k:
            sd = np.sqrt(dephasing_angle_variance(model.t2, h, conv)) * factor if need_deph else None
        for _ in range(k):
            psi = kernel.unitary_step(psi, shifts, h)
            if need_deph:
                psi = kernel.z_phase(normals[step] * sd) * psi
            if need_damp:
                psi = _damp(psi, kernel, h, uniforms[step])
            step += 1
        norm2 = np.sum(np.abs(psi) ** 2, axis=-1)
        for oi, (perm, phase) in enumerate(tables):
            out[oi, ti] = np.real(np.sum(psi.conj() * phase * psi[:, perm], axis=-1)) / norm2
    if observables is None:
        return psi / np.sqrt(norm2)[:, None]
    return out


def _chunks(n_traj: int, dim: int, chunk_size: int | None):
    if chunk_size is None:
        chunk_size = max(1, min(n_traj, (1 << 22) // dim))
    return [range(a, min(a + chunk_size, n_traj)) for a in range(0, n_traj, chunk_size)]


def trajectory_values(model, spec, observables, times, config: SimConfig, stream=()) -> np.ndarray:
    """Per-trajectory exact expectations, shape ``(n_obs, n_times, n_trajectories)``."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or (len(times) and times[0] < 0):
        raise ValueError("times must be non-negative and strictly increasing")
    dt = config.resolve_dt(model, times)
    segs = _time_grid(times, dt)
    kernel = _Kernel(model)
    chunks = _chunks(config.n_trajectories, 2**model.n_qubits, config.chunk_size)
    job = lambda idx: _run_chunk(kernel, spec, observables, segs, idx, config, stream)  # noqa: E731
    if config.n_workers > 1:
        with ThreadPoolExecutor(config.n_workers) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    return np.concatenate(parts, axis=-1)


def evolve_states(model: LindbladModel, initial, t: float, n: int, config: SimConfig, stream: tuple = ()) -> np.ndarray:
    """Final state vectors of ``n`` trajectories at time ``t`` (shape ``(n, 2^n_qubits)``).

    ``initial`` is a product state or a callable giving one per trajectory index.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    times = np.array([t], dtype=float)
    segs = _time_grid(times, config.resolve_dt(model, times))
    kernel = _Kernel(model)
    parts = [
        _run_chunk(kernel, initial, None, segs, idx, config, ("states",) + tuple(stream))
        for idx in _chunks(n, 2**model.n_qubits, config.chunk_size)
    ]
    return np.concatenate(parts, axis=0)


def apply_measurement_noise(means: np.ndarray, mode: str, level: float, rng: np.random.Generator) -> np.ndarray:
    means = np.asarray(means, dtype=float)
    if mode == "none" or (mode == "gaussian" and level == 0):
        return means.copy()
    if mode == "gaussian":
        return means + rng.normal(scale=level, size=means.shape)
    if mode == "shots":
        shots = int(level)
        p = np.clip((1 + means) / 2, 0.0, 1.0)
        return 2.0 * rng.binomial(shots, p) / shots - 1.0
    raise ValueError(f"unknown noise mode {mode!r}")


def _stream_key(spec: ProductStateSpec, extra=()) -> tuple:
    return (spec.label(),) + tuple(extra)


def evolve_and_measure_many(
    model: LindbladModel,
    spec: ProductStateSpec,
    observables: Sequence[PauliString],
    times: Iterable[float],
    config: SimConfig,
    stream: tuple = (),
    reference: bool = False,
) -> list[TimeTrace]:
    """Traces of several observables from one shared trajectory ensemble.

    With ``reference`` a ``t = 0`` row is prepended holding the ensemble mean
    of the sampled initial states, without measurement noise.  For qubits left
    mixed this differs from ``tr(O rho_0)`` by the random-vector sampling error,
    which the trajectories then carry coherently through time.
    """
    times = np.asarray(list(times), dtype=float)
    ref = reference and len(times) > 0 and times[0] > 0
    if ref:
        times = np.concatenate([[0.0], times])
    for O in observables:
        if O.n_qubits != model.n_qubits:
            raise ValueError("observable qubit count mismatch")
    stream = _stream_key(spec, stream)
    vals = trajectory_values(model, spec, observables, times, config, stream)
    M = vals.shape[-1]
    traces = []
    for oi, O in enumerate(observables):
        mean = vals[oi].mean(axis=-1)
        se = vals[oi].std(axis=-1, ddof=1) / math.sqrt(M) if M > 1 else np.zeros_like(mean)
        rng = derive_rng(config.master_seed, "measurement", *stream, O.label())
        noisy = apply_measurement_noise(mean, config.noise_mode, config.noise_level, rng)
        if ref:
            noisy[0] = mean[0]
        traces.append(
            TimeTrace(
                O,
                spec,
                times,
                noisy,
                se,
                config.noise_mode,
                config.noise_level,
                config.master_seed,
                {"n_trajectories": M, "dt": config.resolve_dt(model, times), "adjusted_times": []},
            )
        )
    return traces


def evolve_and_measure(model, spec, O: PauliString, times, config: SimConfig, stream: tuple = ()) -> TimeTrace:
    """Ensemble-averaged ``<O>(t_k)`` with the configured measurement noise."""
    return evolve_and_measure_many(model, spec, [O], times, config, stream)[0]


# ---------------------------------------------------------------------------
# CSV interchange

CSV_COLUMNS = ("observable", "initial_state", "time_us", "mean", "std_error", "shots_or_sigma", "seed")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_traces_csv(traces: Sequence[TimeTrace], path_or_buf) -> None:
    """Write traces as CSV rows; floats use ``repr`` so output is locale-free and exact."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for tr in traces:
            level = f"{tr.noise_mode}:{_fmt(tr.noise_level)}"
            for t, m, s in zip(tr.times, tr.means, tr.std_errors):
                w.writerow((tr.observable.label(), tr.initial.label(), _fmt(t), _fmt(m), _fmt(s), level, tr.seed))
    finally:
        if own:
            fh.close()


def read_traces_csv(path_or_buf, n_qubits: int) -> list[TimeTrace]:
    if isinstance(path_or_buf, str) and "\n" in path_or_buf:
        fh = io.StringIO(path_or_buf)
        own = False
    else:
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, newline="", encoding="utf-8") if own else path_or_buf
    try:
        rows = list(csv.DictReader(fh))
    finally:
        if own:
            fh.close()
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        missing = [c for c in CSV_COLUMNS if c not in r]
        if missing:
            raise ValueError(f"trace CSV missing columns {missing}")
        groups.setdefault((r["observable"], r["initial_state"]), []).append(r)
    out = []
    for (obs, init), rs in groups.items():
        mode, _, level = rs[0]["shots_or_sigma"].partition(":")
        out.append(
            TimeTrace(
                PauliString.parse(obs, n_qubits),
                ProductStateSpec.parse(init, n_qubits),
                [float(r["time_us"]) for r in rs],
                [float(r["mean"]) for r in rs],
                [float(r["std_error"]) for r in rs],
                mode or "none",
                float(level or 0.0),
                int(rs[0]["seed"]),
            )
        )
    return out
