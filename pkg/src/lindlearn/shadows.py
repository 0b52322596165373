"""Shadow process tomography for Pauli overlaps ``2^-n tr(P_a Phi(P_b))``.

Each round prepares a random product of Pauli eigenstates (bases ``S``, signs
``E``), applies the channel and measures every qubit in a random Pauli basis
``B`` (outcomes ``M``).  The per-round estimator

    X_ab = c * q^(w_a + w_b) * prod_{supp P_a} M * prod_{supp P_b} E

when ``B`` matches ``P_a`` on its support and ``S`` matches ``P_b`` on its
support (and ``0`` otherwise) has mean ``c * 2^-n tr(P_a Phi(P_b))``, where ``q``
is the number of allowed bases (3 by default).  ``c = 1`` gives an unbiased
estimator; ``c = 1/2`` reproduces the halved scale some write-ups use.
Estimates are aggregated by median of means.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .pauli import AXES, PauliAxis, PauliString
from .rng import derive_rng

__all__ = [
    "ShadowRecord",
    "OverlapEstimate",
    "IdentityChannel",
    "DepolarizingChannel",
    "DenseChannel",
    "TrajectoryChannel",
    "run_round",
    "run_rounds",
    "estimator_value",
    "estimator_values",
    "median_of_means",
    "sample_counts",
    "estimate_overlaps",
    "write_overlaps_csv",
    "exact_overlap",
]


@dataclass(frozen=True)
class ShadowRecord:
    """One round: measurement bases ``B``, preparation bases ``S``, signs ``E``, outcomes ``M``."""

    B: tuple[int, ...]
    S: tuple[int, ...]
    E: tuple[int, ...]
    M: tuple[int, ...]

    def __post_init__(self):
        n = len(self.B)
        if not (len(self.S) == len(self.E) == len(self.M) == n):
            raise ValueError("B, S, E, M must have equal length")


@dataclass
class OverlapEstimate:
    P_a: PauliString
    P_b: PauliString
    value: float
    epsilon: float
    delta: float
    samples_used: int


# ---------------------------------------------------------------------------
# channels: sample(S, E, B, rng) -> M for batches of rounds (arrays of shape (R, n))


class IdentityChannel:
    def __init__(self, n_qubits: int):
        self.n_qubits = n_qubits

    def sample(self, S, E, B, rng):
        rand = rng.choice(np.array([-1, 1], dtype=np.int8), size=S.shape)
        return np.where(S == B, E, rand).astype(np.int8)


class DepolarizingChannel:
    """Independent single-qubit depolarizing with probability ``p`` (``p = 1``: fully depolarizing)."""

    def __init__(self, n_qubits: int, p: float = 1.0):
        if not 0 <= p <= 1:
            raise ValueError("p must be in [0, 1]")
        self.n_qubits = n_qubits
        self.p = p

    def sample(self, S, E, B, rng):
        keep = rng.random(S.shape) >= self.p
        rand = rng.choice(np.array([-1, 1], dtype=np.int8), size=S.shape)
        return np.where(keep & (S == B), E, rand).astype(np.int8)


_H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
_SDG = np.diag([1, -1j])
# rotations U with U sigma U^dagger = Z
_BASIS_ROT = {1: _H, 2: _H @ _SDG, 3: np.eye(2)}
_EIG = {
    (1, 1): np.array([1, 1]) / np.sqrt(2),
    (1, -1): np.array([1, -1]) / np.sqrt(2),
    (2, 1): np.array([1, 1j]) / np.sqrt(2),
    (2, -1): np.array([1, -1j]) / np.sqrt(2),
    (3, 1): np.array([1, 0]),
    (3, -1): np.array([0, 1]),
}


def _kron_all(mats):
    out = np.array([[1.0 + 0j]]) if mats[0].ndim == 2 else np.array([1.0 + 0j])
    for m in mats:
        out = np.kron(out, m)
    return out


def _outcome_signs(n):
    idx = np.arange(2**n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return (1 - 2 * bits).astype(np.int8)  # (2^n, n)


class DenseChannel:
    """Channel given by a superoperator on row-major ``vec(rho)`` (small ``n`` only).

    Outcome distributions for all ``6^n`` inputs and ``3^n`` bases are tabulated
    on first use.
    """

    def __init__(self, n_qubits: int, superop: np.ndarray):
        d = 2**n_qubits
        if superop.shape != (d * d, d * d):
            raise ValueError("superoperator shape mismatch")
        if n_qubits > 4:
            raise ValueError("DenseChannel tabulates 6^n x 3^n distributions; n <= 4 only")
        self.n_qubits = n_qubits
        self.superop = superop
        self._table = None
        self._signs = _outcome_signs(n_qubits)

    @classmethod
    def from_lindbladian(cls, model, t: float, convention: str = "calibrated", n_nodes: int = 3):
        """``exp(t L)`` for a :class:`PauliLindbladian` or chip model (averaged over quasi-static shifts)."""
        from .exact import PauliLindbladian, _shift_nodes, liouvillian
        from .simulator import LindbladModel

        if isinstance(model, LindbladModel):
            std = np.where(np.isfinite(model.t2star), model.static_shift_std, 0.0)
            nodes, weights = _shift_nodes(std, n_nodes)
            sup = sum(w * expm(liouvillian(PauliLindbladian.from_model(model, convention, b)) * t) for b, w in zip(nodes, weights))
            return cls(model.n_qubits, sup)
        return cls(model.n_qubits, expm(liouvillian(model) * t))

    def _build(self):
        n = self.n_qubits
        d = 2**n
        prep = list(np.ndindex(*(6,) * n))
        bases = list(np.ndindex(*(3,) * n))
        table = np.empty((len(prep), len(bases), d))
        rots = [_kron_all([_BASIS_ROT[b + 1] for b in basis]) for basis in bases]
        for pi, code in enumerate(prep):
            vec = _kron_all([_EIG[(c // 2 + 1, 1 - 2 * (c % 2))] for c in code])
            rho = np.outer(vec, vec.conj())
            out = (self.superop @ rho.reshape(-1)).reshape(d, d)
            for bi, U in enumerate(rots):
                p = np.real(np.einsum("ij,jk,ik->i", U, out, U.conj()))
                p = np.clip(p, 0, None)
                table[pi, bi] = p / p.sum()
        self._table = np.cumsum(table, axis=-1)

    def sample(self, S, E, B, rng):
        if self._table is None:
            self._build()
        n = self.n_qubits
        pw6 = 6 ** np.arange(n - 1, -1, -1)
        pw3 = 3 ** np.arange(n - 1, -1, -1)
        pcode = ((2 * (S.astype(int) - 1) + (E < 0)) * pw6).sum(axis=1)
        bcode = ((B.astype(int) - 1) * pw3).sum(axis=1)
        cdf = self._table[pcode, bcode]
        u = rng.random(len(S))[:, None]
        k = np.minimum((cdf < u).sum(axis=1), cdf.shape[1] - 1)
        return self._signs[k]


class TrajectoryChannel:
    """Channel realised by one stochastic trajectory of the chip simulator per round."""

    def __init__(self, model, t: float, config, stream: tuple = ()):
        self.model = model
        self.n_qubits = model.n_qubits
        self.t = float(t)
        self.config = config
        self.stream = tuple(stream)
        self._calls = 0
        self._signs = _outcome_signs(model.n_qubits)

    def sample(self, S, E, B, rng):
        from .pauli import ProductStateSpec
        from .simulator import evolve_states

        n = self.n_qubits
        R = len(S)
        specs = [ProductStateSpec(n, tuple((j, int(S[r, j]), int(E[r, j])) for j in range(n))) for r in range(R)]
        psi = evolve_states(self.model, lambda k: specs[k], self.t, R, self.config, self.stream + (self._calls,))
        self._calls += 1
        out = np.empty((R, n), dtype=np.int8)
        for r in range(R):
            U = _kron_all([_BASIS_ROT[int(b)] for b in B[r]])
            p = np.abs(U @ psi[r]) ** 2
            k = min(int(np.searchsorted(np.cumsum(p / p.sum()), rng.random())), len(p) - 1)
            out[r] = self._signs[k]
        return out


# ---------------------------------------------------------------------------
# protocol


def _draw_settings(n, R, rng, axes):
    axes = np.asarray([int(a) for a in axes], dtype=np.int8)
    B = axes[rng.integers(0, len(axes), size=(R, n))]
    S = axes[rng.integers(0, len(axes), size=(R, n))]
    E = np.where(rng.random((R, n)) < 0.5, 1, -1).astype(np.int8)
    return B, S, E


def run_rounds(channel, R: int, rng, axes: Sequence[PauliAxis] = AXES):
    """``R`` rounds as arrays ``(B, S, E, M)``, each of shape ``(R, n)``."""
    B, S, E = _draw_settings(channel.n_qubits, R, rng, axes)
    M = channel.sample(S, E, B, rng)
    return B, S, E, M


def run_round(channel, rng, axes: Sequence[PauliAxis] = AXES) -> ShadowRecord:
    B, S, E, M = run_rounds(channel, 1, rng, axes)
    return ShadowRecord(tuple(B[0].tolist()), tuple(S[0].tolist()), tuple(E[0].tolist()), tuple(M[0].tolist()))


def _support_arrays(P: PauliString):
    sites = np.array([s for s, _ in P.support], dtype=int)
    axes = np.array([int(a) for _, a in P.support], dtype=np.int8)
    return sites, axes


def estimator_values(B, S, E, M, P_a: PauliString, P_b: PauliString, normalization: float = 1.0, n_axes: int = 3):
    """Vectorised :func:`estimator_value` over rounds (arrays of shape ``(R, n)``)."""
    sa, aa = _support_arrays(P_a)
    sb, ab = _support_arrays(P_b)
    ok = np.all(B[:, sa] == aa, axis=1) & np.all(S[:, sb] == ab, axis=1)
    par = np.prod(M[:, sa], axis=1, dtype=np.int64) * np.prod(E[:, sb], axis=1, dtype=np.int64)
    scale = normalization * float(n_axes) ** (P_a.weight + P_b.weight) * P_a.sign * P_b.sign
    return np.where(ok, scale * par, 0.0)


def estimator_value(rec: ShadowRecord, P_a: PauliString, P_b: PauliString, normalization: float = 1.0, n_axes: int = 3) -> float:
    """Single-round estimator ``X_ab`` (0 when the bases miss either support)."""
    arr = [np.asarray([v], dtype=np.int8) for v in (rec.B, rec.S, rec.E, rec.M)]
    return float(estimator_values(*arr, P_a, P_b, normalization, n_axes)[0])


def median_of_means(values, K: int) -> float:
    """Median of ``K`` consecutive group means (remainder dropped)."""
    values = np.asarray(values, dtype=float)
    if K < 1 or K > len(values):
        raise ValueError("need 1 <= K <= len(values)")
    size = len(values) // K
    means = values[: K * size].reshape(K, size).mean(axis=1)
    return float(np.median(means))


def sample_counts(omega: int, epsilon: float, delta: float, K1: int, K2: int, n_axes: int = 3) -> tuple[int, int]:
    """``(B, K)``: group size ``ceil(4 q^omega / eps^2)`` and ``ceil(2 ln(K1 K2 / delta))`` groups."""
    if not (epsilon > 0 and 0 < delta < 1):
        raise ValueError("need epsilon > 0 and 0 < delta < 1")
    B = math.ceil(4 * n_axes**omega / epsilon**2)
    K = max(1, math.ceil(2 * math.log(K1 * K2 / delta)))
    return B, K


def estimate_overlaps(
    channel,
    paulis_a: Sequence[PauliString],
    paulis_b: Sequence[PauliString],
    epsilon: float,
    delta: float,
    rng: np.random.Generator | int = 0,
    omega_cap: int = 4,
    normalization: float = 1.0,
    axes: Sequence[PauliAxis] = AXES,
    batch: int = 50_000,
) -> list[OverlapEstimate]:
    """Median-of-means estimates of all ``2^-n tr(P_a Phi(P_b))``, reusing every round for every pair.

    Rounds are generated group by group and only the ``K x K1 x K2`` group means
    are retained.
    """
    if isinstance(rng, (int, np.integer)):
        rng = derive_rng(int(rng), "shadows")
    allowed = {int(a) for a in axes}
    for P in list(paulis_a) + list(paulis_b):
        if any(int(a) not in allowed for _, a in P.support):
            raise ValueError(f"{P.label()} uses an axis outside the allowed bases")
    omega = max(a.weight for a in paulis_a) + max(b.weight for b in paulis_b)
    if omega > omega_cap:
        raise ValueError(f"combined weight {omega} exceeds cap {omega_cap}")
    B_size, K = sample_counts(omega, epsilon, delta, len(paulis_a), len(paulis_b), len(axes))
    means = np.zeros((K, len(paulis_a), len(paulis_b)))
    for g in range(K):
        done = 0
        while done < B_size:
            r = min(batch, B_size - done)
            Bm, S, E, M = run_rounds(channel, r, rng, axes)
            for ia, Pa in enumerate(paulis_a):
                for ib, Pb in enumerate(paulis_b):
                    means[g, ia, ib] += estimator_values(Bm, S, E, M, Pa, Pb, normalization, len(axes)).sum()
            done += r
    means /= B_size
    med = np.median(means, axis=0)
    return [
        OverlapEstimate(Pa, Pb, float(med[ia, ib]), epsilon, delta, K * B_size)
        for ia, Pa in enumerate(paulis_a)
        for ib, Pb in enumerate(paulis_b)
    ]


def exact_overlap(superop: np.ndarray, P_a: PauliString, P_b: PauliString) -> float:
    """``2^-n tr(P_a Phi(P_b))`` from a dense superoperator."""
    from .pauli import dense_pauli

    d = 2**P_a.n_qubits
    out = (superop @ dense_pauli(P_b).reshape(-1)).reshape(d, d)
    return float(np.real(np.trace(dense_pauli(P_a) @ out)) / d)


def write_overlaps_csv(estimates: Sequence[OverlapEstimate], path_or_buf) -> None:
    own = not hasattr(path_or_buf, "write")
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("pa", "pb", "estimate", "epsilon", "delta", "samples"))
        for e in estimates:
            w.writerow((e.P_a.label(), e.P_b.label(), repr(e.value), repr(e.epsilon), repr(e.delta), e.samples_used))
    finally:
        if own:
            fh.close()
