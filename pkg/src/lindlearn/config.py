"""Experiment configuration: TOML in, dataclasses out, and back.

A config file has top-level ``master_seed``, ``output_dir`` and ``methods``
plus the tables ``[model]``, ``[target]``, ``[sim]``, ``[fit]``, ``[grid]``,
``[shadows]`` and ``[figure]``.  Every table is optional; missing keys take the
dataclass defaults below.  See ``configs/`` for worked examples.
"""

from __future__ import annotations

import dataclasses
import math
import re
import typing
from dataclasses import dataclass, field

import tomli
import tomlkit

from .chip import chip_model, sample_gaussian_lattice
from .interp import FitConfig
from .rng import derive_rng
from .simulator import LindbladModel, SimConfig

__all__ = [
    "ConfigError",
    "ModelSpec",
    "TargetSpec",
    "SimSpec",
    "FitSpec",
    "GridSpec",
    "ShadowSpec",
    "FigureSpec",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "dump_config",
    "lattice_shape",
    "CHIP_SITE_ORDER",
]

INF = math.inf
METHODS = ("interpolation", "finite_difference", "shadows")
# connected growth order over the chip grid, used when a qubit count is forced
CHIP_SITE_ORDER = (1, 2, 6, 7, 3, 8, 11, 12, 4, 9, 13, 5, 10, 14, 15, 16)


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based source line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def lattice_shape(n: int) -> tuple[int, int]:
    """Most square ``rows x cols`` grid with ``rows * cols = n``."""
    rows = max(r for r in range(1, int(math.isqrt(n)) + 1) if n % r == 0)
    return rows, n // rows


@dataclass
class ModelSpec:
    """``kind`` is ``gaussian_lattice``, ``chip`` or ``explicit``.  Rates in kHz, times in us."""

    kind: str = "gaussian_lattice"
    rows: int = 2
    cols: int = 2
    coupling_std_khz: float = 100.0
    frequency_std_khz: float = 100.0
    t1_us: float = INF
    t2_us: float = INF
    t2star_us: float = 150.0
    sites: list[int] = field(default_factory=lambda: [1, 2, 6, 7])
    noise: bool = True
    include_t2star: bool = True
    n_qubits: int = 2
    edges: list[list[int]] = field(default_factory=lambda: [[0, 1]])
    coupling_khz: list[float] = field(default_factory=lambda: [100.0])
    frequency_khz: list[float] = field(default_factory=lambda: [100.0, -100.0])
    t1_list_us: list[float] = field(default_factory=list)
    t2_list_us: list[float] = field(default_factory=list)
    t2star_list_us: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("gaussian_lattice", "chip", "explicit"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")
        for name in ("t1_us", "t2_us", "t2star_us"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n(self) -> int:
        if self.kind == "gaussian_lattice":
            return self.rows * self.cols
        if self.kind == "chip":
            return len(self.sites)
        return self.n_qubits

    def build(self, master_seed: int, instance: int = 0) -> LindbladModel:
        """Concrete model; Gaussian lattices are drawn from ``(master_seed, "model", instance)``."""
        if self.kind == "gaussian_lattice":
            rng = derive_rng(master_seed, "model", instance)
            return sample_gaussian_lattice(
                self.rows,
                self.cols,
                rng,
                self.coupling_std_khz,
                self.frequency_std_khz,
                self.t1_us,
                self.t2_us,
                self.t2star_us,
            )
        if self.kind == "chip":
            return chip_model(tuple(self.sites), self.noise, self.include_t2star)[0]
        edges = [tuple(e) for e in self.edges]
        return LindbladModel.from_khz(
            self.n_qubits,
            edges,
            self.coupling_khz,
            self.frequency_khz,
            self.t1_list_us,
            self.t2_list_us,
            self.t2star_list_us,
        )

    def with_qubits(self, n: int) -> "ModelSpec":
        if n < 2:
            raise ValueError("need at least 2 qubits")
        if self.kind == "gaussian_lattice":
            rows, cols = lattice_shape(n)
            return dataclasses.replace(self, rows=rows, cols=cols)
        if self.kind == "chip":
            if n > len(CHIP_SITE_ORDER):
                raise ValueError("the chip has 16 qubits")
            return dataclasses.replace(self, sites=sorted(CHIP_SITE_ORDER[:n]))
        raise ValueError("--qubits cannot resize an explicit model")


@dataclass
class TargetSpec:
    """``plan`` is ``chip`` (derivative-only rules for ``parameters``) or ``pair`` (all local parameters)."""

    pair: list[int] = field(default_factory=lambda: [0, 1])
    plan: str = "chip"
    parameters: list[str] = field(default_factory=lambda: ["a_xx", "a_yy", "a_z"])

    def __post_init__(self):
        if len(self.pair) != 2 or self.pair[0] == self.pair[1]:
            raise ValueError("pair must list two distinct sites")
        if self.plan not in ("chip", "pair"):
            raise ValueError(f"unknown plan {self.plan!r}")
        bad = [p for p in self.parameters if p not in ("a_xx", "a_yy", "a_z")]
        if bad:
            raise ValueError(f"unsupported chip parameters {bad}")


@dataclass
class SimSpec:
    """``engine``: ``trajectory`` (stochastic simulator), ``exact`` (dense oracle) or ``shadows``."""

    engine: str = "trajectory"
    dt: float = 0.0  # 0 -> automatic
    n_trajectories: int = 189
    noise_mode: str = "gaussian"
    noise_level: float = 0.0
    dephasing_convention: str = "calibrated"
    quadrature_nodes: int = 3

    def __post_init__(self):
        if self.engine not in ("trajectory", "exact", "shadows"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.dt < 0:
            raise ValueError("dt must be >= 0")
        if self.quadrature_nodes < 1:
            raise ValueError("quadrature_nodes must be positive")
        self.to_sim_config(0)

    def to_sim_config(self, master_seed: int) -> SimConfig:
        return SimConfig(
            dt=self.dt or None,
            n_trajectories=self.n_trajectories,
            noise_mode=self.noise_mode,
            noise_level=self.noise_level,
            master_seed=master_seed,
            dephasing_convention=self.dephasing_convention,
        )


@dataclass
class FitSpec:
    degrees: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5, 6, 7])
    partitions: int = 0  # 0 -> degree + 1
    linf_iterations: int = 0  # 0 -> ceil(log2 d) + 1
    cv_folds: int = 5
    cv_seed: int = 0
    anchor: bool = True
    min_points_factor: float = 4.0

    def __post_init__(self):
        if self.partitions < 0 or self.linf_iterations < 0:
            raise ValueError("partitions and linf_iterations must be >= 0")
        self.to_fit_config()

    def to_fit_config(self) -> FitConfig:
        return FitConfig(
            degrees_to_try=tuple(self.degrees),
            linf_iterations=self.linf_iterations or None,
            partitions=self.partitions or None,
            cv_folds=self.cv_folds,
            cv_seed=self.cv_seed,
            min_points_factor=self.min_points_factor,
            anchor=self.anchor,
        )


@dataclass
class GridSpec:
    t0: float = 0.03
    t_max: float = 0.53
    n_points: int = 200
    spacing: str = "chebyshev"

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if not self.t_max > self.t0:
            raise ValueError("t_max must exceed t0")
        if self.spacing not in ("chebyshev", "uniform"):
            raise ValueError(f"unknown spacing {self.spacing!r}")
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")


@dataclass
class ShadowSpec:
    """``channel``: ``identity``, ``depolarizing`` or ``lindblad`` (model evolved for ``time_us``)."""

    channel: str = "identity"
    n_qubits: int = 2
    depolarizing_p: float = 0.1
    time_us: float = 1.0
    epsilon: float = 0.1
    delta: float = 0.05
    omega_cap: int = 4
    normalization: float = 1.0
    max_weight: int = 1
    pairs: list[list[str]] = field(default_factory=list)  # empty -> all strings up to max_weight

    def __post_init__(self):
        if self.channel not in ("identity", "depolarizing", "lindblad"):
            raise ValueError(f"unknown shadow channel {self.channel!r}")
        if not (self.epsilon > 0 and 0 < self.delta < 1):
            raise ValueError("need epsilon > 0 and 0 < delta < 1")
        if not 0 <= self.depolarizing_p <= 1:
            raise ValueError("depolarizing_p must lie in [0, 1]")
        if any(len(p) != 2 for p in self.pairs):
            raise ValueError("each shadow pair is [P_a, P_b]")


@dataclass
class FigureSpec:
    instances: int = 100
    qubits: list[int] = field(default_factory=lambda: [4, 5, 6])
    sigmas: list[float] = field(default_factory=lambda: [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    t0: float = 0.03
    window_us: float = 0.25
    fixed_degree: int = 7  # extra fig3 curve at this degree; 0 disables it
    n_points: int = 200
    t0_values: list[float] = field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1, 0.2, 0.5])
    total_samples: float = 1e7
    chip_t0: float = 0.1
    chip_window_us: float = 10.0
    chip_sigma: float = 1e-4
    repetitions: int = 20

    def __post_init__(self):
        if self.instances < 1 or self.repetitions < 1:
            raise ValueError("instances and repetitions must be positive")
        if self.fixed_degree < 0:
            raise ValueError("fixed_degree must be >= 0")
        if any(s < 0 for s in self.sigmas):
            raise ValueError("sigmas must be non-negative")
        if any(not t > 0 for t in self.t0_values + [self.t0, self.chip_t0]):
            raise ValueError("initial times must be positive")


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    output_dir: str = "out"
    methods: list[str] = field(default_factory=lambda: ["interpolation", "finite_difference"])
    model: ModelSpec = field(default_factory=ModelSpec)
    target: TargetSpec = field(default_factory=TargetSpec)
    sim: SimSpec = field(default_factory=SimSpec)
    fit: FitSpec = field(default_factory=FitSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    shadows: ShadowSpec = field(default_factory=ShadowSpec)
    figure: FigureSpec = field(default_factory=FigureSpec)

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        i, j = self.target.pair
        if max(i, j) >= self.model.n or min(i, j) < 0:
            raise ValueError(f"target pair {self.target.pair} outside a {self.model.n}-qubit model")
        if self.grid.n_points < max(self.fit.degrees) + 1:
            raise ValueError("grid.n_points must be at least max degree + 1")


_SECTIONS = {
    "model": ModelSpec,
    "target": TargetSpec,
    "sim": SimSpec,
    "fit": FitSpec,
    "grid": GridSpec,
    "shadows": ShadowSpec,
    "figure": FigureSpec,
}
_TOP = ("master_seed", "output_dir", "methods")


def _line_of(text: str, section: str | None, key: str | None) -> int | None:
    """Best-effort source line of ``key`` inside ``[section]`` (or of the header)."""
    lines = text.splitlines()
    current = None
    header = None
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if current == section:
                header = no
            continue
        if current == section and key and re.match(rf"^{re.escape(key)}\s*=", s):
            return no
    return header


def _coerce(value, tp, where: str):
    origin = typing.get_origin(tp)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return int(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be an array")
        (inner,) = typing.get_args(tp)
        return [_coerce(v, inner, where) for v in value]
    raise TypeError(f"unsupported field type {tp}")


def _build(cls, table: dict, section: str | None, text: str):
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls) if f.name not in _SECTIONS]
    kwargs = {}
    for key, value in table.items():
        if section is None and key in _SECTIONS:
            continue
        if key not in names:
            where = f"[{section}]" if section else "top level"
            raise ConfigError(f"unknown key {key!r} in {where}", _line_of(text, section, key))
        label = f"{section}.{key}" if section else key
        try:
            kwargs[key] = _coerce(value, hints[key], label)
        except ConfigError as exc:
            raise ConfigError(str(exc), _line_of(text, section, key)) from None
    return kwargs


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse TOML ``text``.  ``overrides`` maps ``"section.key"`` (or top-level key) to values."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", int(m.group(1)) if m else None) from None
    for key, value in (overrides or {}).items():
        sec, _, name = key.rpartition(".")
        (data.setdefault(sec, {}) if sec else data)[name] = value
    for key, value in data.items():
        if key in _SECTIONS and not isinstance(value, dict):
            raise ConfigError(f"{key} must be a table", _line_of(text, None, key))
        if key not in _SECTIONS and key not in _TOP:
            raise ConfigError(f"unknown key {key!r} at top level", _line_of(text, None, key) or _line_of(text, key, None))
    parts = {}
    for sec, cls in _SECTIONS.items():
        kwargs = _build(cls, data.get(sec, {}), sec, text)
        try:
            parts[sec] = cls(**kwargs)
        except ValueError as exc:
            bad = next((k for k in kwargs if k in str(exc)), None)
            raise ConfigError(f"[{sec}] {exc}", _line_of(text, sec, bad)) from None
    top = _build(ExperimentConfig, data, None, text)
    try:
        return ExperimentConfig(**top, **parts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize to TOML; ``parse_config(dump_config(c)) == c``."""
    doc = tomlkit.document()
    for key in _TOP:
        doc[key] = getattr(cfg, key)
    for sec in _SECTIONS:
        tbl = tomlkit.table()
        for f in dataclasses.fields(getattr(cfg, sec)):
            tbl[f.name] = getattr(getattr(cfg, sec), f.name)
        doc[sec] = tbl
    return tomlkit.dumps(doc)
