"""Gaussian models: PSD covariance handling, square roots, spectral
quantities and (coupled) sampling."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from errors import AlphaOutOfRange, DimensionMismatch, NotPSD, NotSymmetric
from estimates import MCEstimate

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
PSD_REL_TOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RngStream:
    """Reproducible counter-based random stream.

    Identical (seed, stream_id, path) give identical draws; any other
    combination gives an independent Philox stream.
    """
    seed: int
    stream_id: int = 0
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64) or not (0 <= int(self.stream_id) < 2**64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")

    def substream(self, index: int) -> "RngStream":
        """Child stream for task `index` (node, start, x level ...)."""
        return RngStream(self.seed, self.stream_id, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),) + self.path)
        return np.random.Generator(np.random.Philox(ss))

    def __str__(self) -> str:
        tail = "".join(f"/{p}" for p in self.path)
        return f"RngStream(seed={self.seed}, stream={self.stream_id}{tail})"


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """X ~ N(mu, Sigma) with cached square root and spectral quantities.

    Build with `build_model`; arrays are read-only.
    """
    dim: int
    mean: np.ndarray
    cov: np.ndarray
    sqrt_cov: np.ndarray
    lambda_star: float
    sigma_star_sq: float
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def trace(self) -> float:
        return float(np.trace(self.cov))

    def is_diagonal(self) -> bool:
        return bool(np.all(self.cov == np.diag(np.diag(self.cov))))

    def summary(self) -> Dict:
        return {
            "dim": self.dim,
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "lambda_star": self.lambda_star,
            "sigma_star_sq": self.sigma_star_sq,
            "trace": self.trace,
        }


@dataclass(frozen=True, eq=False)
class CoupledSampleBatch:
    """Paired draws (X_alpha, Y_alpha), cross-covariance alpha * Sigma."""
    alpha: float
    x_samples: np.ndarray
    y_samples: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.x_samples.shape[0]


def build_model(mu, sigma) -> GaussianModel:
    """Validate (mu, Sigma) and cache the PSD square root.

    Raises:
        DimensionMismatch: sigma not square or mu length differs
        NotSymmetric: max |Sigma - Sigma^T| > 1e-12
        NotPSD: an eigenvalue below -1e-10 * ||Sigma||
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))

    if mu.ndim != 1:
        raise DimensionMismatch(f"mean must be a vector, got shape {mu.shape}")
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionMismatch(f"covariance must be square, got shape {sigma.shape}")
    if sigma.shape[0] != mu.shape[0]:
        raise DimensionMismatch(f"mean has length {mu.shape[0]} but covariance is {sigma.shape[0]}x{sigma.shape[0]}")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise DimensionMismatch("mean and covariance must be finite")

    asym = float(np.max(np.abs(sigma - sigma.T))) if sigma.size else 0.0
    if asym > SYMMETRY_TOL:
        raise NotSymmetric(f"covariance asymmetry {asym:.3e} exceeds {SYMMETRY_TOL:g}")

    sym = 0.5 * (sigma + sigma.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    norm = float(np.max(np.abs(eigvals))) if eigvals.size else 0.0
    threshold = -PSD_REL_TOL * norm
    if eigvals.size and eigvals[0] < threshold:
        raise NotPSD(f"covariance has eigenvalue {eigvals[0]:.3e} < {threshold:.3e}")

    negative = eigvals < 0
    if np.any(negative):
        logger.warning(f"Clamping {int(negative.sum())} slightly negative eigenvalue(s) to 0")
        eigvals = np.where(negative, 0.0, eigvals)

    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    root = 0.5 * (root + root.T)

    model = GaussianModel(
        dim=int(mu.shape[0]),
        mean=_readonly(mu),
        cov=_readonly(sym),
        sqrt_cov=_readonly(root),
        lambda_star=float(eigvals[-1]),
        sigma_star_sq=float(np.max(np.diag(sym))),
        eigenvalues=_readonly(eigvals),
        eigenvectors=_readonly(eigvecs),
    )
    logger.debug(f"Built model d={model.dim}, lambda*={model.lambda_star:.6g}, sigma*^2={model.sigma_star_sq:.6g}")
    return model


def identity_model(dim: int) -> GaussianModel:
    return build_model(np.zeros(dim), np.eye(dim))


def max_eigenvalue(model: GaussianModel) -> float:
    """lambda*, the largest eigenvalue = sup over unit x of <Sigma x, x>."""
    return model.lambda_star


def strong_second_moment(model: GaussianModel) -> float:
    """sigma*^2 = max_i Var X_i."""
    return model.sigma_star_sq


def weak_moment_direction(model: GaussianModel) -> np.ndarray:
    """Unit vector attaining lambda* (top eigenvector)."""
    return np.array(model.eigenvectors[:, -1])


def weak_moment_mc(model: GaussianModel, direction, n: int, rng: RngStream):
    """MC estimate of E<X - mu, x>^2 for a unit vector x.

    At `weak_moment_direction(model)` this targets lambda*.
    """
    x = np.asarray(direction, dtype=float)
    x = x / np.linalg.norm(x)
    samples = sample_gaussian(model, n, rng) - model.mean
    return MCEstimate.from_samples((samples @ x) ** 2)


def _check_count(n: int):
    if int(n) < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")


def sample_gaussian(model: GaussianModel, n: int, rng: RngStream) -> np.ndarray:
    """n x d draws of mu + Sigma^{1/2} Z."""
    _check_count(n)
    z = rng.generator().standard_normal((int(n), model.dim))
    return model.mean + z @ model.sqrt_cov


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 <= alpha <= 1.0):
        raise AlphaOutOfRange(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


def sample_coupled(model: GaussianModel, alpha: float, n: int, rng: RngStream) -> CoupledSampleBatch:
    """Draws from the interpolated coupling.

    X = mu + S Z1, Y = mu + S (alpha Z1 + sqrt(1 - alpha^2) Z2) with S the
    PSD root of Sigma. Marginals N(mu, Sigma), cross-covariance alpha Sigma.
    """
    alpha = check_alpha(alpha)
    _check_count(n)
    gen = rng.generator()
    n = int(n)
    z1 = gen.standard_normal((n, model.dim))
    z2 = gen.standard_normal((n, model.dim))
    x = model.mean + z1 @ model.sqrt_cov
    if alpha == 1.0:
        y = x.copy()
    else:
        y = model.mean + (alpha * z1 + math.sqrt(1.0 - alpha * alpha) * z2) @ model.sqrt_cov
    return CoupledSampleBatch(alpha=alpha, x_samples=x, y_samples=y, seed=rng.seed)


def coupled_cross_covariance(model: GaussianModel, alpha: float) -> np.ndarray:
    """Cov(X_alpha, Y_alpha) read off the construction: S (alpha I) S."""
    alpha = check_alpha(alpha)
    s = model.sqrt_cov
    return s @ (alpha * np.eye(model.dim)) @ s


def empirical_cross_covariance(batch: CoupledSampleBatch) -> np.ndarray:
    xc = batch.x_samples - batch.x_samples.mean(axis=0)
    yc = batch.y_samples - batch.y_samples.mean(axis=0)
    return xc.T @ yc / (batch.n - 1)


def random_psd(dim: int, gen: np.random.Generator, scale: float = 1.0, rank: Optional[int] = None) -> np.ndarray:
    """A^T A with Gaussian A, symmetrised; rank < dim gives a singular matrix."""
    rank = dim if rank is None else rank
    a = gen.standard_normal((rank, dim)) * math.sqrt(scale / max(rank, 1))
    m = a.T @ a
    return 0.5 * (m + m.T)
