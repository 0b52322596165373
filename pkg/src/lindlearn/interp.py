"""Robust polynomial interpolation and derivative-at-zero extraction.

The fit follows the l1 / iterated l_inf scheme over Chebyshev partitions:

1. l1 regression: minimise ``sum_j |I_j| mean_{x_i in I_j} |y_i - p(x_i)|``;
2. repeat ``ceil(log2 d) + 1`` times: fit the residuals in the l_inf sense on
   per-partition medians and add the correction.

Polynomials are stored in the monomial basis of the rescaled variable
``u = (2x - a - b) / (b - a)`` on ``[-1, 1]``.  Both regressions are linear
programs solved with HiGHS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

__all__ = [
    "PolynomialFit",
    "FitConfig",
    "FitError",
    "chebyshev_sample",
    "chebyshev_nodes",
    "chebyshev_partition_edges",
    "l1_regression",
    "linf_regression",
    "robust_fit",
    "derivative_at_zero",
    "markov_constant",
    "error_amplification",
    "derivative_error_budget",
    "choose_time_grid",
    "degree_heuristic",
    "select_degree",
    "fit_trace",
    "RobustPolynomialRegressor",
]

MAX_CONDITION = 1e8


class FitError(RuntimeError):
    """Degenerate input or linear-program failure."""


@dataclass
class PolynomialFit:
    degree: int
    coefficients: np.ndarray  # monomial coefficients in u, lowest order first
    domain: tuple[float, float]
    residual_sup: float = 0.0

    def __post_init__(self):
        a, b = (float(v) for v in self.domain)
        if not b > a:
            raise ValueError("domain needs b > a")
        self.domain = (a, b)
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if len(self.coefficients) != self.degree + 1:
            raise ValueError("need degree + 1 coefficients")

    def to_unit(self, x):
        a, b = self.domain
        return (2.0 * np.asarray(x, dtype=float) - a - b) / (b - a)

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(self.to_unit(x), self.coefficients)

    def derivative(self, x, order: int = 1):
        a, b = self.domain
        dc = np.polynomial.polynomial.polyder(self.coefficients, order)
        return np.polynomial.polynomial.polyval(self.to_unit(x), dc) * (2.0 / (b - a)) ** order

    def __add__(self, other: "PolynomialFit") -> "PolynomialFit":
        if self.domain != other.domain:
            raise ValueError("domains differ")
        d = max(self.degree, other.degree)
        c = np.zeros(d + 1)
        c[: self.degree + 1] += self.coefficients
        c[: other.degree + 1] += other.coefficients
        return PolynomialFit(d, c, self.domain)

    def to_record(self) -> dict:
        return {
            "degree": self.degree,
            "coefficients": [float(c) for c in self.coefficients],
            "domain": list(self.domain),
            "residual_sup": float(self.residual_sup),
        }


@dataclass(frozen=True)
class FitConfig:
    degrees_to_try: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7)
    outlier_fraction_budget: float = 0.4
    linf_iterations: int | None = None  # None -> ceil(log2 d) + 1
    partitions: int | None = None  # None -> d + 1
    node_distribution: str = "chebyshev"
    cv_folds: int = 5
    cv_seed: int = 0
    min_points_factor: float = 4.0
    anchor: bool = True  # pin p(0) to the known initial expectation when fitting traces

    def __post_init__(self):
        if not self.degrees_to_try or min(self.degrees_to_try) < 1:
            raise ValueError("degrees_to_try must be non-empty with degrees >= 1")
        if not 0 <= self.outlier_fraction_budget < 0.5:
            raise ValueError("outlier_fraction_budget must be in [0, 1/2)")
        if self.node_distribution not in ("chebyshev", "uniform", "explicit"):
            raise ValueError(f"unknown node_distribution {self.node_distribution!r}")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")

    def iterations(self, d: int) -> int:
        if self.linf_iterations is not None:
            return self.linf_iterations
        return math.ceil(math.log2(d)) + 1 if d > 1 else 1

    def n_partitions(self, d: int) -> int:
        return self.partitions or d + 1


# ---------------------------------------------------------------------------
# sampling and partitions


def _check_interval(a, b):
    if not b > a:
        raise ValueError(f"need b > a, got a={a}, b={b}")


def chebyshev_sample(m: int, a: float, b: float, rng: np.random.Generator) -> np.ndarray:
    """``m`` i.i.d. draws from the Chebyshev (arcsine) measure on ``[a, b]``, sorted."""
    if m < 1:
        raise ValueError("m must be >= 1")
    _check_interval(a, b)
    u = np.cos(np.pi * rng.random(m))
    return np.sort(0.5 * (a + b) + 0.5 * (b - a) * u)


def chebyshev_nodes(m: int, a: float, b: float) -> np.ndarray:
    """Deterministic Chebyshev points ``cos(pi (k + 1/2) / m)`` mapped to ``[a, b]``, ascending."""
    if m < 1:
        raise ValueError("m must be >= 1")
    _check_interval(a, b)
    u = np.cos(np.pi * (np.arange(m)[::-1] + 0.5) / m)
    return 0.5 * (a + b) + 0.5 * (b - a) * u


def chebyshev_partition_edges(m: int) -> np.ndarray:
    """Ascending edges of the size-``m`` Chebyshev partition of ``[-1, 1]``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return np.cos(np.pi * np.arange(m, -1, -1) / m)


def _assign(u: np.ndarray, m: int) -> np.ndarray:
    edges = chebyshev_partition_edges(m)
    idx = np.searchsorted(edges, u, side="right") - 1
    return np.clip(idx, 0, m - 1)


# ---------------------------------------------------------------------------
# regressions


def _prepare(x, y, domain):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input")
    if domain is None:
        domain = (float(x.min()), float(x.max()))
    a, b = domain
    _check_interval(a, b)
    u = (2.0 * x - a - b) / (b - a)
    if np.any(np.abs(u) > 1 + 1e-9):
        raise ValueError("points lie outside the fit domain")
    return np.clip(u, -1.0, 1.0), y, (float(a), float(b))


def _vander(u, d):
    V = np.vander(u, d + 1, increasing=True)
    return V


def _check_conditioning(d):
    cond = np.linalg.cond(_vander(np.cos(np.pi * (np.arange(d + 1) + 0.5) / (d + 1)), d))
    if cond > MAX_CONDITION:
        raise FitError(f"monomial basis too ill-conditioned for degree {d} (cond {cond:.2e})")


_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
# tight tolerances occasionally stall HiGHS; retry with its defaults, then interior point
_LP_ATTEMPTS = (("highs", _LP_OPTIONS), ("highs", {}), ("highs-ipm", {}))


def _linprog(c, **kw):
    for method, opts in _LP_ATTEMPTS:
        res = linprog(c, method=method, options=opts, **kw)
        if res.status == 0:
            return res
    raise FitError(f"linear program failed: {res.message}")


def _scale(y):
    s = float(np.max(np.abs(y))) if len(y) else 0.0
    return s if s > 0 else 1.0


def _solve(c, A_ub, b_ub, nvar_free, anchor_row=None, anchor_value=0.0):
    bounds = [(None, None)] * nvar_free + [(0, None)] * (len(c) - nvar_free)
    A_eq = b_eq = None
    if anchor_row is not None:
        A_eq = np.zeros((1, len(c)))
        A_eq[0, : len(anchor_row)] = anchor_row
        b_eq = [anchor_value]
    return _linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds).x


def _l1_dual(V, y, w, anchor_row=None, anchor_value=0.0):
    """Coefficients of ``argmin_c sum w_i |y_i - V_i c|`` (optionally with ``anchor_row . c = anchor_value``).

    Solved through the dual ``max y.l + v mu  s.t.  V^T l + a mu = 0, |l_i| <= w_i``;
    the primal coefficients are minus the multipliers of the equality rows.
    """
    n, k = V.shape
    if anchor_row is None:
        c = -y
        A = V.T
        bounds = [(-wi, wi) for wi in w]
    else:
        c = -np.concatenate([y, [anchor_value]])
        A = np.hstack([V.T, np.asarray(anchor_row, dtype=float)[:, None]])
        bounds = [(-wi, wi) for wi in w] + [(None, None)]
    res = _linprog(c, A_eq=A, b_eq=np.zeros(k), bounds=bounds)
    return -np.asarray(res.eqlin.marginals, dtype=float)


def l1_regression(x, y, d: int, m_partitions: int, domain=None, anchor: float | None = None) -> PolynomialFit:
    """Partition-weighted l1 regression of degree ``d``.

    ``anchor`` pins ``p(a)`` at the left end of the domain to a known value.
    """
    u, y, dom = _prepare(x, y, domain)
    if len(np.unique(u)) < d + 1:
        raise FitError(f"need at least {d + 1} distinct nodes for degree {d}")
    _check_conditioning(d)
    part = _assign(u, m_partitions)
    widths = np.diff(chebyshev_partition_edges(m_partitions))
    counts = np.bincount(part, minlength=m_partitions)
    w = widths[part] / counts[part]
    V = _vander(u, d)
    ys = _scale(y)
    row = None if anchor is None else (-1.0) ** np.arange(d + 1)
    coef = _l1_dual(V, y / ys, w, row, 0.0 if anchor is None else anchor / ys) * ys
    return PolynomialFit(d, coef, dom, float(np.max(np.abs(y - V @ coef))))


def _partition_medians(u, y, m):
    part = _assign(u, m)
    xs, ys = [], []
    for j in range(m):
        sel = part == j
        if np.any(sel):
            xs.append(float(np.median(u[sel])))
            ys.append(float(np.median(y[sel])))
    return np.array(xs), np.array(ys)


def linf_regression(x, y, d: int, m_partitions: int, domain=None, anchor: float | None = None) -> PolynomialFit:
    """Minimax fit through per-partition medians placed at the median node of each partition."""
    u, y, dom = _prepare(x, y, domain)
    xt, yt = _partition_medians(u, y, m_partitions)
    if len(xt) == 0:
        raise FitError("all partitions are empty")
    deg = min(d, len(xt) - (anchor is None))
    _check_conditioning(deg)
    V = _vander(xt, deg)
    if anchor is not None:
        V = np.vstack([(-1.0) ** np.arange(deg + 1), V])
        yt = np.concatenate([[anchor], yt])
    coef = np.zeros(d + 1)
    if len(yt) <= deg + 1:
        # an exact interpolant exists; its sup residual is zero
        coef[: deg + 1] = np.linalg.lstsq(V, yt, rcond=None)[0]
        return PolynomialFit(d, coef, dom, 0.0)
    ys = _scale(yt)
    Vd, yd = (V, yt) if anchor is None else (V[1:], yt[1:])
    c = np.concatenate([np.zeros(deg + 1), [1.0]])
    one = np.ones((len(yd), 1))
    A = np.vstack([np.hstack([Vd, -one]), np.hstack([-Vd, -one])])
    b = np.concatenate([yd, -yd]) / ys
    if anchor is None:
        sol = _solve(c, A, b, deg + 1)
    else:
        sol = _solve(c, A, b, deg + 1, V[0], anchor / ys)
    coef[: deg + 1] = sol[: deg + 1] * ys
    return PolynomialFit(d, coef, dom, float(sol[-1] * ys))


def robust_fit(x, y, d: int, cfg: FitConfig | None = None, domain=None, anchor: float | None = None) -> PolynomialFit:
    """l1 fit followed by ``cfg.iterations(d)`` l_inf corrections on the residuals.

    With ``anchor`` every stage keeps ``p(a) = anchor`` (the corrections pin zero).
    """
    cfg = cfg or FitConfig()
    if d < 1:
        raise ValueError("degree must be >= 1")
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    need = cfg.min_points_factor * d * math.log(d)
    if len(x) < max(d + 1, math.ceil(need)):
        raise FitError(f"degree {d} needs at least {max(d + 1, math.ceil(need))} points, got {len(x)}")
    m = cfg.n_partitions(d)
    fit = l1_regression(x, y, d, m, domain, anchor)
    for _ in range(cfg.iterations(d)):
        fit = fit + linf_regression(x, y - fit(x), d, m, fit.domain, None if anchor is None else 0.0)
    fit.residual_sup = float(np.max(np.abs(y - fit(x))))
    return fit


def derivative_at_zero(fit: PolynomialFit) -> float:
    """``p'(0)`` in physical time (extrapolated to the left of the data window)."""
    if fit.domain[0] < 0:
        raise ValueError("derivative_at_zero needs a domain with a >= 0")
    return float(fit.derivative(0.0))


# ---------------------------------------------------------------------------
# error bookkeeping


def markov_constant(d: int, k: int) -> float:
    """``C_M(d, k) = prod_{j<k} (d^2 - j^2) / (2j + 1)``, bounding ``|p^(k)| <= C_M sup|p|`` on [-1, 1]."""
    if not 1 <= k <= d:
        raise ValueError("need 1 <= k <= d")
    if d > 15:
        return math.exp(sum(math.log(d * d - j * j) - math.log(2 * j + 1) for j in range(k)))
    out = 1.0
    for j in range(k):
        out *= (d * d - j * j) / (2 * j + 1)
    return out


def error_amplification(a: float, b: float, d: int) -> float:
    """``E(a, b, d) = sum_k (2/(b-a))^k a^(k-1) C_M(d, k) / (k-1)!``.

    Bounds ``|q'(0)|`` for a degree-``d`` polynomial ``q`` with ``sup_[a,b] |q| <= 1``.
    """
    _check_interval(a, b)
    if a < 0:
        raise ValueError("need a >= 0")
    total = 0.0
    for k in range(1, d + 1):
        total += (2.0 / (b - a)) ** k * a ** (k - 1) * markov_constant(d, k) / math.factorial(k - 1)
    return total


def derivative_error_budget(a: float, b: float, d: int, sigma: float) -> float:
    """Worst-case ``|p'(0) - p_hat'(0)|`` when ``sup_[a,b] |p - p_hat| <= 3 sigma``."""
    return 3.0 * sigma * error_amplification(a, b, d)


def choose_time_grid(epsilon: float, d: int, time_scale: float = 1.0) -> tuple[float, float, int]:
    """``(t0, t_max, m)`` with ``t0 = 1/d^2``, ``t_max = 2 + t0``, ``m = ceil(4 d log(d + 1))``.

    Times are multiplied by ``time_scale``.  ``epsilon`` only enters through the
    degree; it is validated here for interface symmetry with :func:`degree_heuristic`.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if d < 1:
        raise ValueError("degree must be >= 1")
    t0 = 1.0 / d**2
    m = math.ceil(4 * d * math.log(d + 1))
    return t0 * time_scale, (2.0 + t0) * time_scale, m


def degree_heuristic(t_max: float, region_size: float, epsilon: float, g: float = 1.0, clamp=(1, 7)) -> int:
    """``ceil(2 e t_max g |B| ln(1/eps)) - 1`` clamped to ``clamp``."""
    if not (t_max > 0 and region_size > 0 and g > 0 and epsilon > 0):
        raise ValueError("arguments must be positive")
    if epsilon >= 1:
        return clamp[0]
    d = math.ceil(2 * math.e * t_max * g * region_size * math.log(1.0 / epsilon) - 1e-12) - 1
    return int(min(max(d, clamp[0]), clamp[1]))


# ---------------------------------------------------------------------------
# degree selection


def _folds(n: int, k: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(perm[f::k]) for f in range(k)]


def select_degree(
    x, y, cfg: FitConfig | None = None, domain=None, anchor: float | None = None
) -> tuple[PolynomialFit, dict[int, float]]:
    """Try every degree in ``cfg.degrees_to_try`` and keep the smallest cross-validated error.

    The held-out error is the mean absolute residual over ``cfg.cv_folds`` folds
    (leave-20%-out for the default 5 folds).  Returns the refitted winner and
    the per-degree scores.
    """
    cfg = cfg or FitConfig()
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if domain is None:
        domain = (float(x.min()), float(x.max()))
    folds = _folds(len(x), cfg.cv_folds, cfg.cv_seed)
    scores: dict[int, float] = {}
    last = None
    for d in cfg.degrees_to_try:
        errs = []
        try:
            for held in folds:
                mask = np.ones(len(x), bool)
                mask[held] = False
                fit = robust_fit(x[mask], y[mask], d, cfg, domain, anchor)
                errs.append(np.abs(y[held] - fit(x[held])))
        except FitError as exc:
            last = exc
            continue
        scores[d] = float(np.mean(np.concatenate(errs)))
    if not scores:
        raise FitError(f"no degree could be fitted ({last})")
    best = min(scores, key=lambda k: (scores[k], k))
    return robust_fit(x, y, best, cfg, domain, anchor), scores


def fit_trace(trace, cfg: FitConfig | None = None, degree: int | None = None):
    """Fit a :class:`~lindlearn.simulator.TimeTrace`; returns ``(fit, p'(0), scores)``.

    With ``cfg.anchor`` the fit domain starts at ``t = 0`` and ``p(0)`` is pinned
    to the trace's reference value (its ``t = 0`` row, else ``tr(O rho_0)``).
    """
    cfg = cfg or FitConfig()
    f0, x, y = trace.split_reference()
    domain, anchor = None, None
    if cfg.anchor:
        domain = (0.0, float(x[-1]))
        anchor = f0
    if degree is None:
        fit, scores = select_degree(x, y, cfg, domain, anchor)
    else:
        fit, scores = robust_fit(x, y, degree, cfg, domain, anchor), {}
    return fit, derivative_at_zero(fit), scores


# ---------------------------------------------------------------------------
# estimator facade


class RobustPolynomialRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`robust_fit` / :func:`select_degree`.

    ``X`` is a single column of sample times.  With ``degree=None`` the degree
    is chosen by cross-validation over ``degrees_to_try``.  A numeric ``anchor``
    fixes ``p(0)`` and extends the fit domain down to ``t = 0``.
    """

    def __init__(
        self, degree=None, degrees_to_try=(1, 2, 3, 4, 5, 6, 7), partitions=None, linf_iterations=None, cv_seed=0, anchor=None
    ):
        self.degree = degree
        self.anchor = anchor
        self.degrees_to_try = degrees_to_try
        self.partitions = partitions
        self.linf_iterations = linf_iterations
        self.cv_seed = cv_seed

    def _config(self) -> FitConfig:
        return FitConfig(
            degrees_to_try=tuple(self.degrees_to_try),
            partitions=self.partitions,
            linf_iterations=self.linf_iterations,
            cv_seed=self.cv_seed,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError("RobustPolynomialRegressor expects a single feature (time)")
        x = X[:, 0]
        cfg = self._config()
        domain = None
        if self.anchor is not None:
            if x.min() < 0:
                raise ValueError("anchored fits need non-negative times")
            domain = (0.0, float(x.max()))
        if self.degree is None:
            self.fit_, self.cv_scores_ = select_degree(x, y, cfg, domain, self.anchor)
        else:
            self.fit_, self.cv_scores_ = robust_fit(x, y, int(self.degree), cfg, domain, self.anchor), {}
        self.degree_ = self.fit_.degree
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        if X.shape[1] != 1:
            raise ValueError("expected a single feature")
        return self.fit_(X[:, 0])

    def derivative_at_zero(self) -> float:
        check_is_fitted(self, "fit_")
        return derivative_at_zero(self.fit_)
