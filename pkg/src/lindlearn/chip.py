"""Superconducting-chip parameter sets: the sampled 16-qubit grid and Gaussian lattices."""

from __future__ import annotations

import numpy as np

from .simulator import KHZ_TO_RAD_PER_US, LindbladModel

__all__ = ["CHIP_COUPLINGS_KHZ", "CHIP_SITES", "chip_model", "grid_edges", "sample_gaussian_lattice"]

# edge (1-based sites) -> a_xx = a_yy in kHz
CHIP_COUPLINGS_KHZ: dict[tuple[int, int], float] = {
    (1, 2): 1.28112,
    (2, 3): -0.716875,
    (3, 4): -0.956949,
    (4, 5): -0.819328,
    (1, 6): -1.1682,
    (2, 7): -0.213057,
    (3, 8): -0.563789,
    (4, 9): 1.74022,
    (5, 10): 1.68348,
    (6, 7): -1.51535,
    (7, 8): -0.729672,
    (8, 9): 1.6622,
    (9, 10): -0.314438,
    (11, 12): -0.475787,
    (6, 11): 1.3663,
    (7, 12): -2.03531,
    (12, 13): -1.22632,
    (13, 8): -0.717182,
    (13, 14): -0.546421,
    (14, 9): 1.90836,
    (14, 15): -0.781306,
    (11, 16): -0.358714,
}

# site (1-based) -> (a_z kHz, T1 us, T2 us, T2* us)
CHIP_SITES: dict[int, tuple[float, float, float, float]] = {
    1: (1.73807, 58.5227, 65.9752, 151.515),
    2: (-0.816877, 60.0269, 65.1704, 166.667),
    3: (-1.0602, 59.2424, 64.6375, 163.934),
    4: (-0.913223, 61.0255, 65.7397, 149.254),
    5: (-1.23118, 59.0545, 66.0886, 147.059),
    6: (-0.654699, 60.0915, 66.1118, 151.515),
    7: (-0.514756, 59.8856, 65.1432, 153.846),
    8: (2.0817, 61.0389, 64.8252, 158.73),
    9: (-0.568581, 60.5375, 66.2155, 158.73),
    10: (-0.710498, 61.5036, 65.389, 149.254),
    11: (1.86153, 59.8949, 65.825, 147.059),
    12: (-2.03725, 60.3777, 65.1203, 153.846),
    13: (-1.31695, 57.5781, 65.6052, 156.25),
    14: (-0.902159, 59.1881, 65.8892, 158.73),
    15: (-0.202118, 60.0283, 66.2967, 144.928),
    16: (0.136975, 58.9397, 66.0541, 149.254),
}


def chip_model(sites=(1, 2, 6, 7), noise: bool = True, include_t2star: bool = True) -> tuple[LindbladModel, list[int]]:
    """Sub-lattice of the tabulated chip on the given 1-based ``sites``.

    Qubit ``k`` of the returned model is ``sites[k]``.  Only edges with both
    ends inside ``sites`` are kept.  ``a_z`` is half the qubit frequency, so
    ``Omega = 2 a_z``.
    """
    sites = list(sites)
    index = {s: k for k, s in enumerate(sites)}
    edges, coup = [], []
    for (a, b), v in CHIP_COUPLINGS_KHZ.items():
        if a in index and b in index:
            edges.append((index[a], index[b]))
            coup.append(v)
    freq = [2 * CHIP_SITES[s][0] for s in sites]
    n = len(sites)
    t1 = [CHIP_SITES[s][1] for s in sites] if noise else ()
    t2 = [CHIP_SITES[s][2] for s in sites] if noise else ()
    t2s = [CHIP_SITES[s][3] for s in sites] if include_t2star else ()
    return LindbladModel.from_khz(n, edges, coup, freq, t1, t2, t2s), sites


def grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    """Nearest-neighbour edges of a ``rows x cols`` grid, row-major site order."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                edges.append((k, k + 1))
            if r + 1 < rows:
                edges.append((k, k + cols))
    return edges


def sample_gaussian_lattice(
    rows: int,
    cols: int,
    rng: np.random.Generator,
    coupling_std_khz: float = 100.0,
    frequency_std_khz: float = 100.0,
    t1: float = float("inf"),
    t2: float = float("inf"),
    t2star: float = float("inf"),
) -> LindbladModel:
    """Grid with couplings and frequencies drawn from zero-mean Gaussians (std in kHz)."""
    edges = grid_edges(rows, cols)
    n = rows * cols
    coup = rng.normal(size=len(edges)) * coupling_std_khz * KHZ_TO_RAD_PER_US
    freq = rng.normal(size=n) * frequency_std_khz * KHZ_TO_RAD_PER_US
    return LindbladModel(n, tuple(edges), tuple(coup), tuple(freq), (t1,) * n, (t2,) * n, (t2star,) * n)
