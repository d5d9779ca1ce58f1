"""Characteristic functions of X ~ N(mu, Sigma) and of the interpolated
pair (X_alpha, Y_alpha), and numerical checks of the interpolation identity

    phi_1(t, s) - phi_0(t, s) = int_0^1 d/dalpha phi_alpha(t, s) dalpha.

Complex powers are never taken on values: phi_X(t) = exp(z(t)) with the
explicit exponent z(t) = i<mu, t> - <Sigma t, t>/2, and
phi_alpha = exp(alpha z(t + s) + (1 - alpha)(z(t) + z(s))).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from config import quad_config
from errors import DimensionMismatch
from estimates import MCEstimate
from gaussian_core import GaussianModel, RngStream, check_alpha, sample_coupled
from scalar_fields import ComplexExponentialField

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FrequencyPair:
    t: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if t.shape != s.shape or t.ndim != 1:
            raise DimensionMismatch(f"frequencies must be vectors of equal length, got {t.shape} and {s.shape}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
            raise ValueError("frequencies must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", s)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre rule mapped to [0, 1]."""
    kind: str
    node_count: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, fn: Callable[[float], complex]) -> complex:
        return sum(w * fn(a) for a, w in zip(self.nodes, self.weights))


def gauss_legendre(node_count: Optional[int] = None) -> QuadratureRule:
    """Nodes in (0, 1), positive weights summing to 1.

    Exact for polynomials of degree <= 2 * node_count - 1.
    """
    node_count = int(node_count or quad_config.nodes)
    if node_count < 1:
        raise ValueError(f"node_count must be >= 1, got {node_count}")
    x, w = np.polynomial.legendre.leggauss(node_count)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule("gauss-legendre", node_count, nodes, weights)


def _check_dim(model: GaussianModel, v: np.ndarray):
    if v.shape != (model.dim,):
        raise DimensionMismatch(f"frequency of shape {v.shape} for a {model.dim}-dimensional model")


def log_phi(model: GaussianModel, t) -> complex:
    """Exponent z(t) = i<mu, t> - <Sigma t, t> / 2."""
    t = np.asarray(t, dtype=float)
    _check_dim(model, t)
    return complex(-0.5 * float(t @ model.cov @ t), float(model.mean @ t))


def phi_X(model: GaussianModel, t) -> complex:
    """E exp(i<t, X>) in closed form; modulus exp(-<Sigma t, t>/2) <= 1."""
    return complex(np.exp(log_phi(model, t)))


def phi_alpha(model: GaussianModel, alpha: float, pair: FrequencyPair) -> complex:
    """Characteristic function of (X_alpha, Y_alpha) at (t, s).

    alpha = 0 returns phi_X(t) phi_X(s) and alpha = 1 returns phi_X(t + s),
    computed by the same expressions as those closed forms.
    """
    alpha = check_alpha(alpha)
    if alpha == 0.0:
        return phi_X(model, pair.t) * phi_X(model, pair.s)
    if alpha == 1.0:
        return phi_X(model, pair.t + pair.s)
    z_joint = log_phi(model, pair.t + pair.s)
    z_indep = log_phi(model, pair.t) + log_phi(model, pair.s)
    return complex(np.exp(alpha * z_joint + (1.0 - alpha) * z_indep))


def sigma_inner(model: GaussianModel, pair: FrequencyPair) -> float:
    """<Sigma t, s>."""
    return float(pair.t @ model.cov @ pair.s)


def phi_alpha_derivative(model: GaussianModel, alpha: float, pair: FrequencyPair) -> complex:
    """d/dalpha phi_alpha = -<Sigma t, s> phi_alpha."""
    return -sigma_inner(model, pair) * phi_alpha(model, alpha, pair)


def verify_interpolation_identity(model: GaussianModel, pair: FrequencyPair,
                                  quad: Optional[QuadratureRule] = None) -> complex:
    """phi_1 - phi_0 - sum_k w_k d/dalpha phi_alpha(node_k)."""
    quad = quad or gauss_legendre()
    integral = quad.integrate(lambda a: phi_alpha_derivative(model, a, pair))
    residual = phi_alpha(model, 1.0, pair) - phi_alpha(model, 0.0, pair) - integral
    logger.debug(f"Interpolation identity residual {abs(residual):.3e} with {quad.node_count} nodes")
    return complex(residual)


@dataclass(frozen=True)
class ConvergenceStep:
    node_count: int
    residual: complex


def converge_interpolation_identity(model: GaussianModel, pair: FrequencyPair,
                                    start_nodes: int = 8,
                                    max_nodes: Optional[int] = None,
                                    tol: Optional[float] = None) -> List[ConvergenceStep]:
    """Double the node count until successive residuals agree within tol."""
    max_nodes = max_nodes or quad_config.max_nodes
    tol = quad_config.tolerance if tol is None else tol
    steps: List[ConvergenceStep] = []
    nodes = max(1, int(start_nodes))
    while nodes <= max_nodes:
        steps.append(ConvergenceStep(nodes, verify_interpolation_identity(model, pair, gauss_legendre(nodes))))
        if len(steps) > 1 and abs(steps[-1].residual - steps[-2].residual) <= tol:
            break
        nodes *= 2
    return steps


def phi_alpha_mc(model: GaussianModel, alpha: float, pair: FrequencyPair, n: int,
                 rng: RngStream, ci_level: float = 0.95) -> MCEstimate:
    """Average of exp(i<t, X_alpha> + i<s, Y_alpha>) over a coupled batch."""
    batch = sample_coupled(model, alpha, n, rng)
    values = np.exp(1j * (batch.x_samples @ pair.t + batch.y_samples @ pair.s))
    return MCEstimate.from_samples(values, ci_level)


def derivative_mc(model: GaussianModel, alpha: float, pair: FrequencyPair, n: int,
                  rng: RngStream, ci_level: float = 0.95) -> MCEstimate:
    """E<Sigma grad f(X_alpha), grad g(Y_alpha)> for f = e^{i<t,.>}, g = e^{i<s,.>}.

    The inner product is bilinear (no conjugation); its mean targets
    phi_alpha_derivative.
    """
    f = ComplexExponentialField(pair.t)
    g = ComplexExponentialField(pair.s)
    batch = sample_coupled(model, alpha, n, rng)
    gf = f.gradient(batch.x_samples)
    gg = g.gradient(batch.y_samples)
    values = np.einsum("ij,jk,ik->i", gf, model.cov, gg)
    return MCEstimate.from_samples(values, ci_level)


def residual_row(model: GaussianModel, pair: FrequencyPair, quad: QuadratureRule) -> Dict:
    """One report row for charfn-check."""
    residual = verify_interpolation_identity(model, pair, quad)
    return {
        "t": pair.t.tolist(),
        "s": pair.s.tolist(),
        "sigma_ts": sigma_inner(model, pair),
        "phi0": phi_alpha(model, 0.0, pair),
        "phi1": phi_alpha(model, 1.0, pair),
        "residual": residual,
        "abs_residual": abs(residual),
        "nodes": quad.node_count,
    }
