"""Energy seminorm, the concentration bound family and the Herbst checks.

The energy seminorm of f under Sigma is sup_x <grad f(x), Sigma grad f(x)>.
It is exact for linear, constant and coordinate-max fields; for anything
else it is estimated by random probes plus multi-start gradient ascent,
which only gives a lower bound on the sup (reported with is_exact=False).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize as spo

from config import AscentConfig, ascent_config, cert_config
from covrep import compare_estimates, covariance_mc, representation_rhs
from errors import InvalidBoundForField, MissingMeanPosPart, NonFiniteResult, NonPositiveInput
from estimates import MCEstimate
from gaussian_core import GaussianModel, RngStream, sample_gaussian
from parallel import TaskPool, chunk_ranges, default_pool
from scalar_fields import FD_REL_STEP, ScalarField, exp_tilt, is_constant, is_linear, is_max_coord, shift

logger = logging.getLogger(__name__)

SQRT_PI_OVER_8 = math.sqrt(math.pi / 8.0)


class BoundKind(str, Enum):
    BASIC = "basic"
    IMPROVED_MEAN = "improved_mean"
    IMPROVED_CONST = "improved_const"
    GENERIC_LAMBDA = "generic_lambda"
    STRONG_MOMENT = "strong_moment"


@dataclass(frozen=True, eq=False)
class SeminormEstimate:
    value: float
    witness: np.ndarray
    method: str  # analytic, multistart_ascent, random_search
    is_exact: bool


@dataclass(frozen=True)
class BoundSpec:
    kind: BoundKind
    seminorm_sq: float
    extras: Optional[MCEstimate] = None


@dataclass(frozen=True)
class HerbstPoint:
    t: float
    h: float
    h_prime: float
    rhs: float  # t * seminorm_sq * h
    diff_mean: float  # mean of f e^{tf} - t sigma^2 e^{tf}
    std_error: float
    holds: bool
    saturated: bool


@dataclass(frozen=True)
class HerbstIntegralReport:
    t: float
    lhs: MCEstimate
    rhs: MCEstimate
    bound: float
    consistent: bool
    below_bound: bool


# ----------------------------------------------------------------------
# Seminorm
# ----------------------------------------------------------------------
def _quadratic(grads: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jk,ik->i", grads, matrix, grads)


def energy_seminorm_at(model: GaussianModel, f: ScalarField, x):
    """<grad f(x), Sigma grad f(x)> = ||Sigma^{1/2} grad f(x)||^2."""
    g = f.gradient(x)
    if g.ndim == 1:
        return float(g @ model.cov @ g)
    return _quadratic(g, model.cov)


class _Objective:
    """x -> <grad f(x), M grad f(x)>, -inf where f is not finite."""

    def __init__(self, f: ScalarField, matrix: np.ndarray):
        self.f = f
        self.matrix = matrix

    def __call__(self, x: np.ndarray) -> np.ndarray:
        _, g = self.f.unchecked(x)
        with np.errstate(all="ignore"):
            q = _quadratic(g, self.matrix)
        return np.where(np.isfinite(q), q, -np.inf)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        m, d = x.shape
        h = FD_REL_STEP * (1.0 + np.linalg.norm(x, axis=1))
        offsets = np.eye(d)[None, :, :] * h[:, None, None]
        qp = self((x[:, None, :] + offsets).reshape(m * d, d)).reshape(m, d)
        qm = self((x[:, None, :] - offsets).reshape(m * d, d)).reshape(m, d)
        with np.errstate(invalid="ignore"):
            grad = (qp - qm) / (2.0 * h[:, None])
        return np.where(np.isfinite(grad), grad, 0.0)


def _ascend(objective: _Objective, x: np.ndarray, config: AscentConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient ascent with backtracking halving, vectorised over starts.

    Every iteration restarts from initial_step and halves until the Armijo
    test q(x + s g) >= q(x) + armijo * s * ||g||^2 passes. A start stops
    when its gradient is below grad_tolerance or no halving passes.
    """
    x = x.copy()
    q = objective(x)
    active = np.isfinite(q)
    for _ in range(config.steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g = objective.gradient(x[idx])
        gsq = np.einsum("ij,ij->i", g, g)
        done = np.sqrt(gsq) < config.grad_tolerance
        active[idx[done]] = False
        idx, g, gsq = idx[~done], g[~done], gsq[~done]
        step = np.full(idx.size, config.initial_step)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(config.max_halvings):
            if not pending.any():
                break
            rows = np.flatnonzero(pending)
            sub = idx[rows]
            trial = x[sub] + step[rows, None] * g[rows]
            qt = objective(trial)
            ok = qt >= q[sub] + config.armijo * step[rows] * gsq[rows]
            x[sub[ok]] = trial[ok]
            q[sub[ok]] = qt[ok]
            pending[rows[ok]] = False
            step[rows[~ok]] *= 0.5
        # no sufficient increase at any step size: converged to machine precision
        active[idx[pending]] = False
    return x, q


def _polish(objective: _Objective, x: np.ndarray, q: float, config: AscentConfig) -> Tuple[np.ndarray, bool]:
    """BFGS on -q from the best point; kept only if it strictly improves."""
    if config.polish_iterations <= 0:
        return x, False

    def negative(z):
        value = objective(z[None, :])[0]
        return -value if np.isfinite(value) else np.inf

    def negative_grad(z):
        return -objective.gradient(z[None, :])[0]

    with np.errstate(all="ignore"):
        result = spo.minimize(negative, x, jac=negative_grad, method="BFGS",
                              options={"maxiter": config.polish_iterations, "gtol": config.grad_tolerance})
    polished = objective(np.asarray(result.x, dtype=float)[None, :])[0]
    if np.isfinite(polished) and polished > q:
        return np.asarray(result.x, dtype=float), True
    return x, False


def _spread_points(model: GaussianModel, count: int, rng: RngStream, spread: float) -> np.ndarray:
    z = rng.generator().standard_normal((count, model.dim))
    return model.mean + math.sqrt(spread) * (z @ model.sqrt_cov)


def _search_sup(model: GaussianModel, f: ScalarField, matrix: np.ndarray, config: AscentConfig,
                rng: RngStream, pool: TaskPool) -> Tuple[np.ndarray, str]:
    """Best point among random probes and ascent end points."""
    objective = _Objective(f, matrix)
    probe_rng = rng.substream(0)
    start_rng = rng.substream(1)

    def run_probes(chunk: range):
        pts = _spread_points(model, len(chunk), probe_rng.substream(chunk.start), config.spread)
        q = objective(pts)
        i = int(np.argmax(q))
        return q[i], pts[i]

    def run_starts(chunk: range):
        pts = np.vstack([_spread_points(model, 1, start_rng.substream(k), config.spread) for k in chunk])
        ends, q = _ascend(objective, pts, config)
        i = int(np.argmax(q))
        return q[i], ends[i]

    probe_best = pool.map(run_probes, chunk_ranges(config.probes, config.probes_per_task))
    start_best = pool.map(run_starts, chunk_ranges(config.starts, config.starts_per_task))
    candidates = [(q, x, "random_search") for q, x in probe_best] + \
                 [(q, x, "multistart_ascent") for q, x in start_best]
    if not candidates:
        return np.array(model.mean), "random_search"
    best = int(np.argmax([c[0] for c in candidates]))
    q, x, method = candidates[best]
    if not np.isfinite(q):
        raise NonFiniteResult(f"{f.describe()} is not finite at any probe point")
    x, improved = _polish(objective, np.array(x, dtype=float), float(q), config)
    if improved:
        method = "multistart_ascent"
    return x, method


def estimate_sup_seminorm(model: GaussianModel, f: ScalarField, strategy_config: Optional[AscentConfig] = None,
                          rng: Optional[RngStream] = None, pool: Optional[TaskPool] = None) -> SeminormEstimate:
    """sup_x <grad f(x), Sigma grad f(x)>.

    Exact for linear (<a, Sigma a>), constant (0) and max_coord
    (max_i Sigma_ii: gradients are one-hot). Otherwise a witnessed lower
    bound from probes and multi-start ascent.
    """
    config = strategy_config or ascent_config
    if is_linear(f):
        x = np.array(model.mean)
        return SeminormEstimate(energy_seminorm_at(model, f, x), x, "analytic", True)
    if is_constant(f):
        x = np.array(model.mean)
        return SeminormEstimate(0.0, x, "analytic", True)
    if is_max_coord(f):
        i = int(np.argmax(np.diag(model.cov)))
        x = np.zeros(model.dim)
        x[i] = 1.0
        return SeminormEstimate(energy_seminorm_at(model, f, x), x, "analytic", True)

    rng = rng or RngStream(0, 0)
    witness, method = _search_sup(model, f, model.cov, config, rng, pool or default_pool())
    value = energy_seminorm_at(model, f, witness)
    logger.info(f"Seminorm lower bound {value:.6g} via {method} (not exact; bounds may be optimistic)")
    return SeminormEstimate(float(value), witness, method, False)


def estimate_sup_gradient_sq(model: GaussianModel, f: ScalarField, strategy_config: Optional[AscentConfig] = None,
                             rng: Optional[RngStream] = None, pool: Optional[TaskPool] = None) -> SeminormEstimate:
    """sup_x ||grad f(x)||^2 (the Sigma = I seminorm), same search as above."""
    config = strategy_config or ascent_config
    identity = np.eye(model.dim)
    if is_linear(f) or is_constant(f) or is_max_coord(f):
        x = np.zeros(model.dim)
        if is_max_coord(f):
            x[0] = 1.0
        g = f.gradient(x)
        return SeminormEstimate(float(g @ g), x, "analytic", True)
    rng = rng or RngStream(0, 0)
    witness, method = _search_sup(model, f, identity, config, rng, pool or default_pool())
    g = f.gradient(witness)
    return SeminormEstimate(float(g @ g), witness, method, False)


# ----------------------------------------------------------------------
# Bounds
# ----------------------------------------------------------------------
def _positive(name: str, value: float):
    if not value > 0:
        raise NonPositiveInput(f"{name} must be > 0, got {value}")


def tail_bound(seminorm_sq: float, x: float) -> float:
    """min(1, exp(-x^2 / (2 seminorm_sq)))."""
    _positive("seminorm_sq", seminorm_sq)
    _positive("x", x)
    return min(1.0, math.exp(-x * x / (2.0 * seminorm_sq)))


def improved_tail_bound(kind, seminorm_sq: float, x: float,
                        mean_pos_part: Optional[MCEstimate] = None) -> float:
    """improved_mean: (E(f - Ef)^+ / x) exp(-x^2 / 2 sigma^2);
    improved_const: sqrt(pi) / (2 sqrt(2) x) * sigma * exp(-x^2 / 2 sigma^2).
    Both capped at 1.
    """
    kind = BoundKind(kind)
    _positive("seminorm_sq", seminorm_sq)
    _positive("x", x)
    gauss = math.exp(-x * x / (2.0 * seminorm_sq))
    if kind is BoundKind.IMPROVED_MEAN:
        if mean_pos_part is None:
            raise MissingMeanPosPart("improved_mean needs an estimate of E(f - Ef)+")
        return min(1.0, max(0.0, float(mean_pos_part.mean)) / x * gauss)
    if kind is BoundKind.IMPROVED_CONST:
        return min(1.0, SQRT_PI_OVER_8 * math.sqrt(seminorm_sq) / x * gauss)
    raise ValueError(f"{kind.value} is not an improved bound")


def mgf_bound(seminorm_sq: float, t: float) -> float:
    """exp(t^2 seminorm_sq / 2)."""
    return math.exp(t * t * seminorm_sq / 2.0)


def chernoff_optimal_t(seminorm_sq: float, x: float) -> float:
    """Minimiser t* = x / seminorm_sq of exp(-t x) mgf_bound(seminorm_sq, t)."""
    _positive("seminorm_sq", seminorm_sq)
    _positive("x", x)
    return x / seminorm_sq


def chernoff_value(seminorm_sq: float, x: float, t: float) -> float:
    return math.exp(-t * x) * mgf_bound(seminorm_sq, t)


def make_bound_spec(kind, model: GaussianModel, f: ScalarField, seminorm: SeminormEstimate,
                    grad_sup: Optional[SeminormEstimate] = None,
                    mean_pos_part: Optional[MCEstimate] = None) -> BoundSpec:
    """Pick the seminorm each bound kind uses.

    generic_lambda uses lambda* sup||grad f||^2; strong_moment uses sigma*^2
    and is only valid for max_coord.
    """
    kind = BoundKind(kind)
    if kind is BoundKind.STRONG_MOMENT:
        if not is_max_coord(f):
            raise InvalidBoundForField(f"strong_moment bound needs max_coord, got {f.describe()}")
        return BoundSpec(kind, model.sigma_star_sq)
    if kind is BoundKind.GENERIC_LAMBDA:
        if grad_sup is None:
            raise ValueError("generic_lambda needs the sup of ||grad f||^2")
        return BoundSpec(kind, model.lambda_star * grad_sup.value)
    if kind is BoundKind.IMPROVED_MEAN:
        if mean_pos_part is None:
            raise MissingMeanPosPart("improved_mean needs an estimate of E(f - Ef)+")
        return BoundSpec(kind, seminorm.value, mean_pos_part)
    return BoundSpec(kind, seminorm.value)


def evaluate_bound(spec: BoundSpec, x: float) -> float:
    """Bound value at deviation x; a zero seminorm (constant f) bounds by 0."""
    if spec.seminorm_sq == 0.0:
        return 0.0
    if spec.kind in (BoundKind.IMPROVED_MEAN, BoundKind.IMPROVED_CONST):
        return improved_tail_bound(spec.kind, spec.seminorm_sq, x, spec.extras)
    return tail_bound(spec.seminorm_sq, x)


# ----------------------------------------------------------------------
# Herbst
# ----------------------------------------------------------------------
def herbst_differential_check(model: GaussianModel, f: ScalarField, t_grid: Sequence[float], n: int,
                              rng: RngStream, seminorm_sq: Optional[float] = None,
                              sigmas: Optional[float] = None) -> List[HerbstPoint]:
    """h'(t) <= t sigma^2 h(t) with h(t) = E e^{tf} for centred f.

    h and h' come from the same batch; the verdict uses the per-sample
    difference f e^{tf} - t sigma^2 e^{tf}, whose standard error already
    accounts for their correlation.
    """
    sigmas = cert_config.herbst_sigmas if sigmas is None else sigmas
    if seminorm_sq is None:
        seminorm_sq = estimate_sup_seminorm(model, f, rng=rng.substream(1)).value
    x = sample_gaussian(model, n, rng.substream(0))
    fv = f.evaluate(x)
    fc = fv - fv.mean()

    points: List[HerbstPoint] = []
    for t in t_grid:
        t = float(t)
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp(t * fc)
            diff = fc * e - t * seminorm_sq * e
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(diff))):
            raise NonFiniteResult(f"e^(t f) overflows at t={t}; truncate f to a lower level")
        h = float(e.mean())
        h_prime = float((fc * e).mean())
        d = MCEstimate.from_samples(diff)
        point = HerbstPoint(
            t=t, h=h, h_prime=h_prime, rhs=t * seminorm_sq * h,
            diff_mean=float(d.mean), std_error=d.std_error,
            holds=bool(d.mean <= sigmas * d.std_error),
            saturated=bool(abs(d.mean) <= sigmas * d.std_error),
        )
        logger.info(f"Herbst t={t}: h'={h_prime:.6g} vs t*s^2*h={point.rhs:.6g} -> {'holds' if point.holds else 'VIOLATED'}")
        points.append(point)
    return points


def herbst_integral_check(model: GaussianModel, f: ScalarField, t: float, quad, n: int,
                          rng: RngStream, seminorm_sq: Optional[float] = None,
                          ci_level: float = 0.95, pool: Optional[TaskPool] = None) -> HerbstIntegralReport:
    """E f e^{tf} = t int_0^1 E<Sigma grad f(X_a), grad f(Y_a)> e^{t f(Y_a)} da for centred f.

    The right side is the covariance representation with g = e^{tf}; it is
    also compared with t * seminorm_sq * E e^{tf}.
    """
    centre = float(np.mean(f.evaluate(sample_gaussian(model, n, rng.substream(0)))))
    fc = shift(f, -centre)
    g = exp_tilt(f, t, shift=centre)
    lhs = covariance_mc(model, fc, g, n, rng.substream(1), ci_level)
    rhs = representation_rhs(model, fc, g, quad, n, rng.substream(2), ci_level, pool)
    if seminorm_sq is None:
        seminorm_sq = estimate_sup_seminorm(model, f, rng=rng.substream(3)).value
    h = MCEstimate.from_samples(g.evaluate(sample_gaussian(model, n, rng.substream(4))))
    bound = t * seminorm_sq * float(h.mean)
    _, consistent = compare_estimates(lhs, rhs)
    return HerbstIntegralReport(t=float(t), lhs=lhs, rhs=rhs, bound=bound, consistent=consistent,
                                below_bound=bool(rhs.lower <= bound + h.ci_half_width * t * seminorm_sq))
