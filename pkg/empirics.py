"""Empirical tail probabilities and certification of the concentration bounds.

Each batch is split in two: the first half estimates E f, the second half
(independent of it) gives the tail indicators or MGF samples. Centering at
the estimated mean is a known first-order approximation; it is recorded,
not corrected.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import beta

import scalar_fields
from concentration import (BoundKind, SeminormEstimate, estimate_sup_gradient_sq, estimate_sup_seminorm,
                           evaluate_bound, make_bound_spec, mgf_bound)
from config import cert_config
from errors import InvalidBoundForField, NonFiniteResult
from estimates import MCEstimate
from gaussian_core import GaussianModel, RngStream, sample_gaussian
from parallel import TaskPool
from scalar_fields import ScalarField, is_max_coord

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class TailPoint:
    x: float
    empirical: MCEstimate
    count: int
    cp_lower: float
    cp_upper: float
    bounds: Dict[str, float] = field(default_factory=dict)
    verdicts: Dict[str, Verdict] = field(default_factory=dict)


@dataclass(frozen=True)
class MGFPoint:
    t: float
    empirical: MCEstimate
    bound: float
    verdict: Verdict
    saturated: bool


@dataclass(frozen=True)
class CertificationReport:
    model_summary: Dict
    field_summary: Dict
    seminorm: SeminormEstimate
    mean_estimate: MCEstimate
    points: List[TailPoint]
    overall: bool
    possibly_optimistic: bool = False
    mean_pos_part: Optional[MCEstimate] = None
    grad_sup: Optional[SeminormEstimate] = None


def clopper_pearson(k: int, n: int, level: float = 0.99) -> Tuple[float, float]:
    """Exact binomial interval for k successes out of n."""
    if n < 1 or not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    a = 1.0 - level
    lower = 0.0 if k == 0 else float(beta.ppf(a / 2.0, k, n - k + 1))
    upper = 1.0 if k == n else float(beta.ppf(1.0 - a / 2.0, k + 1, n - k))
    return lower, upper


def _split_batch(model: GaussianModel, f: ScalarField, n: int, rng: RngStream) -> Tuple[MCEstimate, np.ndarray]:
    """(estimate of E f from the first half, centred values of the second half)."""
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    fv = f.evaluate(sample_gaussian(model, n, rng))
    half = n // 2
    mean = MCEstimate.from_samples(fv[:half])
    return mean, fv[half:] - mean.mean


def _tail_points(model: GaussianModel, f: ScalarField, x_levels: Iterable[float], n: int,
                 rng: RngStream, ci_level: float) -> Tuple[MCEstimate, List[TailPoint]]:
    if n < cert_config.min_tail_samples:
        raise ValueError(f"empirical tails need n >= {cert_config.min_tail_samples}, got {n}")
    mean, centred = _split_batch(model, f, n, rng)
    m = centred.shape[0]
    points = []
    for x in x_levels:
        x = float(x)
        k = int(np.count_nonzero(centred >= x))
        p = k / m
        lo, hi = clopper_pearson(k, m, ci_level)
        est = MCEstimate.build(p, math.sqrt(p * (1.0 - p) / m), m, ci_level)
        points.append(TailPoint(x=x, empirical=est, count=k, cp_lower=lo, cp_upper=hi))
        logger.debug(f"Tail at x={x}: {k}/{m} = {p:.6g}, CP [{lo:.3g}, {hi:.3g}]")
    return mean, points


def empirical_tail(model: GaussianModel, f: ScalarField, x_levels: Sequence[float], n: int,
                   rng: RngStream, ci_level: Optional[float] = None) -> List[TailPoint]:
    """P(f(X) - E^f >= x) with Clopper-Pearson intervals (99% by default)."""
    ci_level = cert_config.tail_ci_level if ci_level is None else ci_level
    return _tail_points(model, f, x_levels, n, rng, ci_level)[1]


def mean_positive_part(model: GaussianModel, f: ScalarField, n: int, rng: RngStream,
                       ci_level: float = 0.95) -> MCEstimate:
    """E(f - Ef)+ with the mean and the positive parts on disjoint halves."""
    _, centred = _split_batch(model, f, n, rng)
    return MCEstimate.from_samples(np.maximum(centred, 0.0), ci_level)


def _verdict(lower: float, upper: float, bound: float) -> Verdict:
    if lower > bound:
        return Verdict.VIOLATED
    if upper <= bound:
        return Verdict.HOLDS
    return Verdict.INCONCLUSIVE


def certify(model: GaussianModel, f: ScalarField, x_levels: Sequence[float], bound_kinds: Sequence,
            n: int, rng: RngStream, ci_level: Optional[float] = None,
            seminorm: Optional[SeminormEstimate] = None, pool: Optional[TaskPool] = None) -> CertificationReport:
    """Compare empirical tails with every requested bound at every x.

    Streams: 0 tail batch, 1 E(f - Ef)+, 2 seminorm search, 3 sup ||grad f||^2.
    """
    kinds = [BoundKind(k) for k in bound_kinds]
    if BoundKind.STRONG_MOMENT in kinds and not is_max_coord(f):
        raise InvalidBoundForField(f"strong_moment bound needs max_coord, got {f.describe()}")
    ci_level = cert_config.tail_ci_level if ci_level is None else ci_level

    mean, points = _tail_points(model, f, x_levels, n, rng.substream(0), ci_level)
    seminorm = seminorm or estimate_sup_seminorm(model, f, rng=rng.substream(2), pool=pool)
    grad_sup = None
    if BoundKind.GENERIC_LAMBDA in kinds:
        grad_sup = estimate_sup_gradient_sq(model, f, rng=rng.substream(3), pool=pool)
    mean_pos = None
    if BoundKind.IMPROVED_MEAN in kinds:
        mean_pos = mean_positive_part(model, f, n, rng.substream(1))
    specs = [make_bound_spec(k, model, f, seminorm, grad_sup, mean_pos) for k in kinds]
    optimistic = not seminorm.is_exact or (grad_sup is not None and not grad_sup.is_exact)
    if optimistic:
        logger.warning("Seminorm is a lower bound from search; bounds may be optimistic")

    scale = math.sqrt(seminorm.value) if seminorm.value > 0 else 0.0
    for point in points:
        deep = scale == 0.0 or point.x / scale > cert_config.deep_tail_ratio
        for spec in specs:
            bound = evaluate_bound(spec, point.x)
            verdict = _verdict(point.cp_lower, point.cp_upper, bound)
            if deep and verdict is Verdict.HOLDS:
                verdict = Verdict.INCONCLUSIVE
            point.bounds[spec.kind.value] = bound
            point.verdicts[spec.kind.value] = verdict
            if verdict is Verdict.VIOLATED:
                logger.error(f"Bound {spec.kind.value} VIOLATED at x={point.x}: "
                             f"P >= {point.cp_lower:.4g} > {bound:.4g}")
            elif verdict is Verdict.INCONCLUSIVE:
                logger.warning(f"Bound {spec.kind.value} inconclusive at x={point.x}")

    overall = all(v is not Verdict.VIOLATED for p in points for v in p.verdicts.values())
    logger.info(f"Certification of {f.describe()}: {'pass' if overall else 'FAIL'} over {len(points)} level(s)")
    return CertificationReport(
        model_summary=model.summary(),
        field_summary=scalar_fields.summary(f),
        seminorm=seminorm,
        mean_estimate=mean,
        points=points,
        overall=overall,
        possibly_optimistic=optimistic,
        mean_pos_part=mean_pos,
        grad_sup=grad_sup,
    )


def mgf_empirical_check(model: GaussianModel, f: ScalarField, t_grid: Sequence[float], n: int,
                        rng: RngStream, seminorm_sq: Optional[float] = None,
                        ci_level: Optional[float] = None) -> List[MGFPoint]:
    """E e^{t(f - E^f)} against exp(t^2 seminorm_sq / 2) with normal CIs.

    `saturated` marks bounds inside the CI (the equality case of linear f).
    """
    ci_level = cert_config.mgf_ci_level if ci_level is None else ci_level
    if seminorm_sq is None:
        seminorm_sq = estimate_sup_seminorm(model, f, rng=rng.substream(1)).value
    _, centred = _split_batch(model, f, n, rng.substream(0))
    points = []
    for t in t_grid:
        t = float(t)
        with np.errstate(over="ignore"):
            values = np.exp(t * centred)
        if not np.all(np.isfinite(values)):
            raise NonFiniteResult(f"e^(t f) overflows at t={t}; truncate f to a lower level")
        est = MCEstimate.from_samples(values, ci_level)
        bound = mgf_bound(seminorm_sq, t)
        verdict = _verdict(est.lower, est.upper, bound)
        point = MGFPoint(t=t, empirical=est, bound=bound, verdict=verdict,
                         saturated=bool(est.covers(bound)))
        logger.info(f"MGF t={t}: {est.mean:.6g} +/- {est.ci_half_width:.3g} vs bound {bound:.6g} ({verdict.value})")
        points.append(point)
    return points
