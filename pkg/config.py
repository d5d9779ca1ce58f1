"""Configuration settings for the gausscov toolkit.

Defaults come from environment variables (a `.env` file is honoured when
python-dotenv is installed). Run-level knobs live here; fixed numerical
tolerances (PSD and symmetry checks, finite-difference steps, float
slack in estimate comparisons) stay next to the code that uses them.
"""

import os
from dataclasses import dataclass

# Load environment variables from .env file
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    # python-dotenv not installed, will use system env vars only
    pass


VERSION = "1.0.0"


@dataclass(frozen=True)
class SamplingConfig:
    """Monte Carlo sampling configuration."""
    samples: int = int(os.getenv("GAUSSCOV_SAMPLES", "100000"))
    seed: int = int(os.getenv("GAUSSCOV_SEED", "0"))
    ci_level: float = float(os.getenv("GAUSSCOV_CI_LEVEL", "0.95"))
    jackknife_blocks: int = int(os.getenv("GAUSSCOV_JACKKNIFE_BLOCKS", "50"))
    # "jackknife" or "delta"
    error_method: str = os.getenv("GAUSSCOV_ERROR_METHOD", "jackknife")


@dataclass(frozen=True)
class QuadratureConfig:
    """Gauss-Legendre rule configuration for the alpha integral."""
    nodes: int = int(os.getenv("GAUSSCOV_QUAD_NODES", "32"))
    max_nodes: int = 512
    tolerance: float = 1e-12
    # residual bound for charfn-check
    identity_tolerance: float = 1e-10


@dataclass(frozen=True)
class AscentConfig:
    """Multi-start ascent for the sup of the energy seminorm."""
    starts: int = 64
    probes: int = 10_000
    steps: int = 500
    grad_tolerance: float = 1e-9
    max_halvings: int = 40
    initial_step: float = 1.0
    armijo: float = 1e-4  # sufficient-increase fraction for backtracking
    polish_iterations: int = 200  # BFGS refinement of the best point, 0 disables
    spread: float = 4.0  # starts drawn from N(mu, spread * Sigma)
    starts_per_task: int = 8
    probes_per_task: int = 2_500


@dataclass(frozen=True)
class CertificationConfig:
    """Tail certification and Herbst check settings."""
    tail_ci_level: float = 0.99
    mgf_ci_level: float = 0.99
    deep_tail_ratio: float = 4.0
    herbst_sigmas: float = 3.0
    min_tail_samples: int = 10_000


@dataclass(frozen=True)
class RuntimeConfig:
    """Process-level settings."""
    workers: int = int(os.getenv("GAUSSCOV_WORKERS", "1"))
    log_level: str = os.getenv("GAUSSCOV_LOG_LEVEL", "INFO")
    log_file: str = os.getenv("GAUSSCOV_LOG_FILE", "")


# Global configuration instances
sampling_config = SamplingConfig()
quad_config = QuadratureConfig()
ascent_config = AscentConfig()
cert_config = CertificationConfig()
runtime_config = RuntimeConfig()
