"""Covariance representation checks.

Both sides of

    Cov(f(X), g(X)) = int_0^1 E<Sigma grad f(X_alpha), grad g(Y_alpha)> dalpha

are estimated independently: the left by Monte Carlo on one batch, the
right by Gauss-Legendre quadrature over alpha with a fresh coupled batch
per node. The Ornstein-Uhlenbeck form is evaluated after whitening with
the substitution alpha = exp(-t). Trigonometric polynomials are checked in
closed form, without sampling.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

import charfn
from charfn import FrequencyPair, QuadratureRule, gauss_legendre
from config import quad_config, sampling_config
from errors import DimensionMismatch
from estimates import MCEstimate, normal_quantile
from gaussian_core import GaussianModel, RngStream, sample_coupled, sample_gaussian
from parallel import TaskPool, default_pool
from scalar_fields import ScalarField, whiten

logger = logging.getLogger(__name__)

# slack for zero-variance comparisons, relative to the magnitudes compared
FLOAT_SLACK = 1e-12


@dataclass(frozen=True)
class NodeEstimate:
    """Integrand estimate at one quadrature node (alpha, or t = -log alpha)."""
    alpha: float
    t: float
    weight: float
    mean: float
    std_error: float
    n: int


@dataclass(frozen=True)
class QuadratureEstimate(MCEstimate):
    """MCEstimate of an alpha-integral, with per-node detail."""
    nodes: Tuple[NodeEstimate, ...] = ()


@dataclass(frozen=True)
class RepresentationReport:
    lhs: MCEstimate
    rhs: MCEstimate
    rhs_ou: Optional[MCEstimate]
    gap: float
    consistent: bool
    gap_ou: Optional[float] = None
    consistent_ou: Optional[bool] = None


@dataclass(frozen=True)
class RepresentationConfig:
    """Settings for verify_representation."""
    n: int = sampling_config.samples
    n_per_node: Optional[int] = None  # defaults to n
    quad_nodes: int = quad_config.nodes
    ci_level: float = sampling_config.ci_level
    seed: int = sampling_config.seed
    include_ou: bool = True
    error_method: str = sampling_config.error_method
    jackknife_blocks: int = sampling_config.jackknife_blocks
    workers: Optional[int] = None


def _check_fields(model: GaussianModel, *fields: ScalarField):
    for f in fields:
        if f.dim != model.dim:
            raise DimensionMismatch(f"field {f.describe()} has dim {f.dim}, model has dim {model.dim}")


def _cov(fv: np.ndarray, gv: np.ndarray) -> float:
    return float(np.mean(fv * gv) - np.mean(fv) * np.mean(gv))


def _jackknife_std_error(fv: np.ndarray, gv: np.ndarray, blocks: int) -> float:
    """Delete-one-block jackknife for the plug-in covariance."""
    n = fv.shape[0]
    blocks = max(2, min(int(blocks), n))
    edges = np.linspace(0, n, blocks + 1).astype(int)
    sum_f, sum_g, sum_fg = fv.sum(), gv.sum(), (fv * gv).sum()
    estimates = np.empty(blocks)
    for b in range(blocks):
        sl = slice(edges[b], edges[b + 1])
        m = n - (edges[b + 1] - edges[b])
        bf = sum_f - fv[sl].sum()
        bg = sum_g - gv[sl].sum()
        bfg = sum_fg - (fv[sl] * gv[sl]).sum()
        estimates[b] = bfg / m - (bf / m) * (bg / m)
    spread = estimates - estimates.mean()
    return math.sqrt((blocks - 1) / blocks * float(np.sum(spread * spread)))


def _delta_std_error(fv: np.ndarray, gv: np.ndarray, cov: float) -> float:
    """Influence-function (delta method) standard error."""
    psi = (fv - fv.mean()) * (gv - gv.mean()) - cov
    n = fv.shape[0]
    return float(np.std(psi, ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def covariance_mc(model: GaussianModel, f: ScalarField, g: ScalarField, n: int, rng: RngStream,
                  ci_level: float = 0.95, error_method: str = "jackknife",
                  blocks: int = 50) -> MCEstimate:
    """Cov(f(X), g(X)) from one batch: mean(f g) - mean(f) mean(g)."""
    _check_fields(model, f, g)
    x = sample_gaussian(model, n, rng)
    fv = f.evaluate(x)
    gv = g.evaluate(x)
    cov = _cov(fv, gv)
    if error_method == "jackknife":
        se = _jackknife_std_error(fv, gv, blocks)
    elif error_method == "delta":
        se = _delta_std_error(fv, gv, cov)
    else:
        raise ValueError(f"error_method must be 'jackknife' or 'delta', got {error_method!r}")
    est = MCEstimate.build(cov, se, x.shape[0], ci_level)
    logger.info(f"Covariance MC: {cov:.6g} +/- {est.ci_half_width:.3g} (n={x.shape[0]}, {error_method})")
    return est


def _integrand(model: GaussianModel, f: ScalarField, g: ScalarField, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """<Sigma grad f(x), grad g(y)> row by row."""
    gf = f.gradient(x)
    gg = g.gradient(y)
    return np.einsum("ij,jk,ik->i", gf, model.cov, gg)


def _node_estimate(values: np.ndarray, alpha: float, t: float, weight: float) -> NodeEstimate:
    est = MCEstimate.from_samples(values)
    return NodeEstimate(alpha=float(alpha), t=float(t), weight=float(weight),
                        mean=float(est.mean), std_error=est.std_error, n=est.n)


def _combine(nodes: Sequence[NodeEstimate], ci_level: float) -> QuadratureEstimate:
    """Weighted sum in node order; variances add as sum w_k^2 var_k."""
    mean = 0.0
    var = 0.0
    for node in nodes:
        mean += node.weight * node.mean
        var += (node.weight * node.std_error) ** 2
    se = math.sqrt(var)
    return QuadratureEstimate(
        mean=mean,
        std_error=se,
        n=sum(node.n for node in nodes),
        ci_level=float(ci_level),
        ci_half_width=normal_quantile(ci_level) * se,
        nodes=tuple(nodes),
    )


def _as_rule(quad) -> QuadratureRule:
    if isinstance(quad, QuadratureRule):
        return quad
    return gauss_legendre(int(quad) if quad else None)


def representation_rhs(model: GaussianModel, f: ScalarField, g: ScalarField, quad, n_per_node: int,
                       rng: RngStream, ci_level: float = 0.95,
                       pool: Optional[TaskPool] = None) -> QuadratureEstimate:
    """sum_k w_k * mean over a coupled batch at alpha_k of <Sigma grad f(X), grad g(Y)>.

    Node k draws from rng.substream(k), so the result does not depend on
    how nodes are scheduled.
    """
    _check_fields(model, f, g)
    rule = _as_rule(quad)
    pool = pool or default_pool()

    def run_node(k: int) -> NodeEstimate:
        alpha = float(rule.nodes[k])
        batch = sample_coupled(model, alpha, n_per_node, rng.substream(k))
        values = _integrand(model, f, g, batch.x_samples, batch.y_samples)
        node = _node_estimate(values, alpha, -math.log(alpha), rule.weights[k])
        logger.debug(f"RHS node {k}: alpha={alpha:.6f} mean={node.mean:.6g} se={node.std_error:.3g}")
        return node

    est = _combine(pool.map(run_node, range(rule.node_count)), ci_level)
    logger.info(f"Representation RHS: {est.mean:.6g} +/- {est.ci_half_width:.3g} ({rule.node_count} nodes x {n_per_node})")
    return est


def representation_rhs_ou(model: GaussianModel, f: ScalarField, g: ScalarField, t_quad_nodes, n_per_node: int,
                          rng: RngStream, ci_level: float = 0.95,
                          pool: Optional[TaskPool] = None) -> QuadratureEstimate:
    """int_0^inf e^{-t} E<grad f~(Z), P_t grad g~(Z)> dt for the whitened fields.

    f~(z) = f(mu + S z). P_t is realised by the pair
    (Z, e^{-t} Z + sqrt(1 - e^{-2t}) W) with W an independent copy; the
    substitution alpha = e^{-t} maps the t-axis onto the [0, 1] rule and
    absorbs the e^{-t} dt factor.
    """
    _check_fields(model, f, g)
    rule = _as_rule(t_quad_nodes)
    pool = pool or default_pool()
    ft = whiten(f, model.mean, model.sqrt_cov)
    gt = whiten(g, model.mean, model.sqrt_cov)

    def run_node(k: int) -> NodeEstimate:
        alpha = float(rule.nodes[k])
        t = -math.log(alpha)
        gen = rng.substream(k).generator()
        z = gen.standard_normal((int(n_per_node), model.dim))
        w = gen.standard_normal((int(n_per_node), model.dim))
        y = math.exp(-t) * z + math.sqrt(-math.expm1(-2.0 * t)) * w
        gz = ft.gradient(z)
        gy = gt.gradient(y)
        values = np.einsum("ij,ij->i", gz, gy)
        return _node_estimate(values, alpha, t, rule.weights[k])

    est = _combine(pool.map(run_node, range(rule.node_count)), ci_level)
    logger.info(f"Representation RHS (OU form): {est.mean:.6g} +/- {est.ci_half_width:.3g}")
    return est


def compare_estimates(a: MCEstimate, b: MCEstimate) -> Tuple[float, bool]:
    """(|a - b|, whether the gap is inside the summed CI half-widths)."""
    gap = float(abs(a.mean - b.mean))
    slack = FLOAT_SLACK * (1.0 + abs(a.mean) + abs(b.mean))
    return gap, gap <= a.ci_half_width + b.ci_half_width + slack


def verify_representation(model: GaussianModel, f: ScalarField, g: ScalarField,
                          config: Optional[RepresentationConfig] = None) -> RepresentationReport:
    """Estimate both sides on independent streams and compare.

    Streams: 0 for the covariance, 1 for the alpha-integral, 2 for the OU form.
    """
    config = config or RepresentationConfig()
    pool = TaskPool(config.workers)
    n_node = config.n_per_node or config.n
    lhs = covariance_mc(model, f, g, config.n, RngStream(config.seed, 0), config.ci_level,
                        config.error_method, config.jackknife_blocks)
    rule = gauss_legendre(config.quad_nodes)
    rhs = representation_rhs(model, f, g, rule, n_node, RngStream(config.seed, 1), config.ci_level, pool)
    gap, consistent = compare_estimates(lhs, rhs)

    rhs_ou = gap_ou = consistent_ou = None
    if config.include_ou:
        rhs_ou = representation_rhs_ou(model, f, g, rule, n_node, RngStream(config.seed, 2), config.ci_level, pool)
        gap_ou, consistent_ou = compare_estimates(rhs, rhs_ou)

    if consistent:
        logger.info(f"Representation consistent: gap {gap:.3g} <= {lhs.ci_half_width + rhs.ci_half_width:.3g}")
    else:
        logger.warning(f"Representation inconsistent: gap {gap:.3g} > {lhs.ci_half_width + rhs.ci_half_width:.3g}")
    return RepresentationReport(lhs=lhs, rhs=rhs, rhs_ou=rhs_ou, gap=gap, consistent=consistent,
                                gap_ou=gap_ou, consistent_ou=consistent_ou)


def trig_polynomial_check(model: GaussianModel, frequencies, coefficients, quad=None) -> complex:
    """Closed-form residual of the representation for trigonometric polynomials.

    f(x) = sum_j a_j exp(i<t_j, x>) and g(x) = sum_k b_k exp(i<s_k, x>) with
    frequencies = (t_list, s_list) and coefficients = (a, b). By
    bilinearity the covariance is sum_jk a_j b_k (phi_1 - phi_0)(t_j, s_k)
    and the integral is sum_jk a_j b_k int_0^1 -<Sigma t_j, s_k> phi_alpha.
    """
    t_list, s_list = (np.atleast_2d(np.asarray(v, dtype=float)) for v in frequencies)
    a, b = (np.atleast_1d(np.asarray(v, dtype=complex)) for v in coefficients)
    if t_list.shape[0] != a.shape[0] or s_list.shape[0] != b.shape[0]:
        raise DimensionMismatch("each frequency needs one coefficient")
    rule = _as_rule(quad)

    lhs = 0j
    rhs = 0j
    for aj, tj in zip(a, t_list):
        for bk, sk in zip(b, s_list):
            pair = FrequencyPair(tj, sk)
            lhs += aj * bk * (charfn.phi_alpha(model, 1.0, pair) - charfn.phi_alpha(model, 0.0, pair))
            rhs += aj * bk * rule.integrate(lambda al: charfn.phi_alpha_derivative(model, al, pair))
    return complex(lhs - rhs)
