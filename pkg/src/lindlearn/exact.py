"""Dense reference solver for the Pauli-form Lindblad master equation.

    d rho/dt = -i[H, rho] + sum_m sum_{mu,nu} D^(m)_{mu nu} (s_mu rho s_nu - 1/2 {s_nu s_mu, rho})

with single-qubit dissipators ``D^(m)`` (Hermitian 3x3, indices X, Y, Z).
Used as an oracle for the trajectory simulator and to produce noise-free base
traces for the learning experiments.  Dense, so only for a handful of qubits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .pauli import AXES, PauliAxis, PauliString, ProductStateSpec, dense_pauli, dense_state
from .simulator import LindbladModel

__all__ = [
    "PauliLindbladian",
    "dissipator_from_rates",
    "lindblad_rhs",
    "liouvillian",
    "evolve_exact",
    "expectation_exact",
    "exact_expectations",
    "ExactPropagator",
    "time_derivatives_at_zero",
    "forward_difference_bias",
    "MAX_RK4_QUBITS",
]

MAX_RK4_QUBITS = 4


def dissipator_from_rates(gamma1: float = 0.0, gamma_phi: float = 0.0) -> np.ndarray:
    """3x3 ``D`` for amplitude damping (jump ``sigma^- = (X + iY)/2``) plus ``Z`` dephasing."""
    c = np.array([0.5, 0.5j, 0.0])
    D = gamma1 * np.outer(c, c.conj())
    D[2, 2] += gamma_phi
    return D


def dephasing_rate(t2: float, convention: str = "calibrated") -> float:
    """Lindblad ``Z``-dephasing rate equivalent to the simulator's random rotations."""
    if not math.isfinite(t2):
        return 0.0
    return {"calibrated": 0.5, "half_angle": 1.0, "full_angle": 4.0}[convention] / t2


@dataclass
class PauliLindbladian:
    """``H = sum coef * P`` plus a 3x3 dissipator matrix per qubit."""

    n_qubits: int
    hamiltonian: list[tuple[float, PauliString]] = field(default_factory=list)
    dissipation: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for c, P in self.hamiltonian:
            if P.n_qubits != self.n_qubits:
                raise ValueError("Hamiltonian term qubit count mismatch")
        for site, D in list(self.dissipation.items()):
            D = np.asarray(D, dtype=complex)
            if D.shape != (3, 3) or not np.allclose(D, D.conj().T, atol=1e-12):
                raise ValueError(f"dissipator on site {site} must be a Hermitian 3x3 matrix")
            self.dissipation[site] = D

    @classmethod
    def from_model(cls, model: LindbladModel, convention: str = "calibrated", static_shifts=None):
        """Lindblad form of the chip model; quasi-static shifts enter as extra ``Z`` fields."""
        terms = list(model.hamiltonian_terms())
        if static_shifts is not None:
            for j, b in enumerate(static_shifts):
                if b:
                    terms.append((0.5 * float(b), PauliString(model.n_qubits, ((j, PauliAxis.Z),))))
        diss = {}
        for j in range(model.n_qubits):
            g1 = 1.0 / model.t1[j] if math.isfinite(model.t1[j]) else 0.0
            gp = dephasing_rate(model.t2[j], convention)
            if g1 or gp:
                diss[j] = dissipator_from_rates(g1, gp)
        return cls(model.n_qubits, terms, diss)

    def hamiltonian_matrix(self) -> np.ndarray:
        d = 2**self.n_qubits
        H = np.zeros((d, d), dtype=complex)
        for c, P in self.hamiltonian:
            H += c * dense_pauli(P)
        return H

    def dissipator_terms(self):
        """``(D_mu_nu, s_mu, s_nu)`` dense triples with nonzero weight."""
        out = []
        for site, D in self.dissipation.items():
            mats = [dense_pauli(PauliString(self.n_qubits, ((site, a),))) for a in AXES]
            for a in range(3):
                for b in range(3):
                    if D[a, b] != 0:
                        out.append((D[a, b], mats[a], mats[b]))
        return out


def _as_lindbladian(model) -> PauliLindbladian:
    if isinstance(model, PauliLindbladian):
        return model
    if isinstance(model, LindbladModel):
        return PauliLindbladian.from_model(model)
    raise TypeError(f"expected PauliLindbladian or LindbladModel, got {type(model).__name__}")


def lindblad_rhs(rho: np.ndarray, model) -> np.ndarray:
    """Right-hand side of the master equation for a dense ``rho``."""
    lind = _as_lindbladian(model)
    H = lind.hamiltonian_matrix()
    out = -1j * (H @ rho - rho @ H)
    for d, smu, snu in lind.dissipator_terms():
        prod = snu @ smu
        out += d * (smu @ rho @ snu - 0.5 * (prod @ rho + rho @ prod))
    return out


def liouvillian(model) -> np.ndarray:
    """Superoperator on row-major ``vec(rho)``: ``vec(A rho B) = (A kron B^T) vec(rho)``."""
    lind = _as_lindbladian(model)
    d = 2**lind.n_qubits
    eye = np.eye(d)
    H = lind.hamiltonian_matrix()
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for c, smu, snu in lind.dissipator_terms():
        prod = snu @ smu
        L += c * (np.kron(smu, snu.T) - 0.5 * np.kron(prod, eye) - 0.5 * np.kron(eye, prod.T))
    return L


def evolve_exact(rho0: np.ndarray, model, t: float, dt: float = 1e-3) -> np.ndarray:
    """Classical RK4 integration of the master equation up to time ``t``."""
    lind = _as_lindbladian(model)
    if lind.n_qubits > MAX_RK4_QUBITS:
        raise ValueError(f"dense RK4 limited to {MAX_RK4_QUBITS} qubits")
    if t < 0 or dt <= 0:
        raise ValueError("need t >= 0 and dt > 0")
    steps = max(1, math.ceil(t / dt - 1e-12)) if t > 0 else 0
    h = t / steps if steps else 0.0
    H = lind.hamiltonian_matrix()
    terms = [(c, a, b, b @ a) for c, a, b in lind.dissipator_terms()]

    def f(r):
        out = -1j * (H @ r - r @ H)
        for c, a, b, p in terms:
            out += c * (a @ r @ b - 0.5 * (p @ r + r @ p))
        return out

    rho = np.array(rho0, dtype=complex)
    for _ in range(steps):
        k1 = f(rho)
        k2 = f(rho + 0.5 * h * k1)
        k3 = f(rho + 0.5 * h * k2)
        k4 = f(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def expectation_exact(rho: np.ndarray, O: PauliString) -> float:
    return float(np.real(np.trace(rho @ dense_pauli(O))))


MAX_TENSOR_NODES = 81


def _shift_nodes(std: np.ndarray, n_nodes: int, max_tensor: int | None = None):
    """Nodes/weights integrating over independent N(0, std_j^2) shifts.

    Tensor Gauss-Hermite while ``n_nodes^k <= max_tensor`` for ``k`` active
    qubits; beyond that the symmetric degree-3 rule with ``2k`` nodes
    ``+-sqrt(k) std_j e_j``.  Quasi-static shifts are small on the time scales
    used here (``std * t << 1``), so its remainder is ``O((std t)^4)``.
    """
    active = [j for j, s in enumerate(std) if s > 0]
    if not active or n_nodes <= 1:
        return [np.zeros(len(std))], [1.0]
    k = len(active)
    if n_nodes**k > (MAX_TENSOR_NODES if max_tensor is None else max_tensor):
        nodes, weights = [], []
        for j in active:
            for sgn in (1.0, -1.0):
                b = np.zeros(len(std))
                b[j] = sgn * math.sqrt(k) * std[j]
                nodes.append(b)
                weights.append(1.0 / (2 * k))
        return nodes, weights
    x, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    w = w / w.sum()
    nodes, weights = [], []
    for combo in np.ndindex(*(n_nodes,) * k):
        b = np.zeros(len(std))
        wt = 1.0
        for j, c in zip(active, combo):
            b[j] = std[j] * x[c]
            wt *= w[c]
        nodes.append(b)
        weights.append(wt)
    return nodes, weights


class ExactPropagator:
    """Shift-averaged exact expectations with cached per-node spectral data.

    Each quadrature node is diagonalized once (``H`` when there is no
    dissipation, the Liouvillian otherwise) and reused for every initial
    state, observable and time.
    """

    def __init__(self, model, convention: str = "calibrated", n_nodes: int = 3):
        if isinstance(model, LindbladModel):
            std = np.where(np.isfinite(model.t2star), model.static_shift_std, 0.0)
            nodes, weights = _shift_nodes(std, n_nodes)
            self.lindbladians = [PauliLindbladian.from_model(model, convention, b) for b in nodes]
        else:
            self.lindbladians, weights = [_as_lindbladian(model)], [1.0]
        self.weights = list(weights)
        self.n_qubits = self.lindbladians[0].n_qubits
        self._spectra: dict[int, tuple] = {}

    def _spectrum(self, k: int):
        if k not in self._spectra:
            lind = self.lindbladians[k]
            if not lind.dissipation:
                evals, U = np.linalg.eigh(lind.hamiltonian_matrix())
                self._spectra[k] = ("unitary", evals, U)
            else:
                L = liouvillian(lind)
                evals, V = np.linalg.eig(L)
                if np.linalg.cond(V) < 1e8:
                    self._spectra[k] = ("eig", evals, V, np.linalg.inv(V))
                else:
                    self._spectra[k] = ("expm", L)
        return self._spectra[k]

    def expectations(self, initial: ProductStateSpec, observables: Sequence[PauliString], times) -> np.ndarray:
        """``(n_obs, n_times)`` array of averaged ``<O>(t)``."""
        times = np.asarray(times, dtype=float)
        rho0 = dense_state(initial)
        obs = [dense_pauli(O) for O in observables]
        out = np.zeros((len(obs), len(times)))
        for k, wt in enumerate(self.weights):
            out += wt * self._node(k, rho0, obs, times)
        return out

    def _node(self, k, rho0, obs, times):
        spec = self._spectrum(k)
        if spec[0] == "unitary":
            _, evals, U = spec
            r = U.conj().T @ rho0 @ U
            # tr(O rho(t)) = sum_jk r_jk o_kj exp(-i (l_j - l_k) t)
            diff = (evals[:, None] - evals[None, :]).ravel()
            M = np.array([(r * (U.conj().T @ o @ U).T).ravel() for o in obs])
            return np.real(M @ np.exp(-1j * np.outer(diff, times)))
        # row-major vec: tr(O rho) = vec(O^T) . vec(rho)
        W = np.array([o.T.reshape(-1) for o in obs])
        v0 = rho0.reshape(-1)
        if spec[0] == "eig":
            _, evals, V, Vinv = spec
            return np.real(((W @ V) * (Vinv @ v0)[None, :]) @ np.exp(np.outer(evals, times)))
        L = spec[1]
        out = np.zeros((len(obs), len(times)))
        for ti, t in enumerate(times):
            out[:, ti] = np.real(W @ (expm(L * t) @ v0))
        return out


def exact_expectations(
    model,
    initial: ProductStateSpec,
    observables: Sequence[PauliString],
    times: Sequence[float],
    convention: str = "calibrated",
    n_nodes: int = 3,
) -> np.ndarray:
    """Exact ``<O>(t)`` (shape ``(n_obs, n_times)``), averaged over quasi-static shifts.

    Quasi-static shifts are integrated with tensor Gauss-Hermite quadrature.
    For repeated calls on one model use :class:`ExactPropagator` directly.
    """
    return ExactPropagator(model, convention, n_nodes).expectations(initial, observables, times)


def time_derivatives_at_zero(
    model, initial: ProductStateSpec, O: PauliString, convention: str = "calibrated", n_nodes: int = 3, order: int = 2
) -> tuple[float, ...]:
    """``(f'(0), ..., f^(order)(0))`` of ``f(t) = <O>(t)``, averaged over quasi-static shifts."""
    rho0 = dense_state(initial)
    if isinstance(model, LindbladModel):
        std = np.where(np.isfinite(model.t2star), model.static_shift_std, 0.0)
        nodes, weights = _shift_nodes(std, n_nodes)
        linds = [PauliLindbladian.from_model(model, convention, b) for b in nodes]
    else:
        linds, weights = [_as_lindbladian(model)], [1.0]
    o = dense_pauli(O)
    out = np.zeros(order)
    for lind, wt in zip(linds, weights):
        r = rho0
        for k in range(order):
            r = lindblad_rhs(r, lind)
            out[k] += wt * float(np.real(np.trace(r @ o)))
    return tuple(float(v) for v in out)


def forward_difference_bias(
    model, initial: ProductStateSpec, O: PauliString, t0: float, order: int = 4, convention: str = "calibrated", n_nodes: int = 3
) -> float:
    """Taylor prediction of ``(f(t0) - f(0)) / t0 - f'(0)``: ``sum_{k=2..order} t0^(k-1) f^(k)(0) / k!``."""
    ders = time_derivatives_at_zero(model, initial, O, convention, n_nodes, order)
    return float(sum(t0 ** (k - 1) * ders[k - 1] / math.factorial(k) for k in range(2, order + 1)))
