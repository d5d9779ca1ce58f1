"""Command-line surface: subcommands, TOML run configuration and report output.

Exit codes: 0 pass, 1 check failed, 2 configuration error, 3 numerical error.
"""

import argparse
import logging
import re
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from charfn import FrequencyPair, gauss_legendre, residual_row
from concentration import BoundKind, estimate_sup_gradient_sq, estimate_sup_seminorm, herbst_differential_check
from config import VERSION, cert_config, quad_config, runtime_config, sampling_config
from covrep import RepresentationConfig, verify_representation
from empirics import Verdict, certify, mgf_empirical_check
from errors import ConfigError, GaussCovError, NonFiniteResult
from gaussian_core import GaussianModel, RngStream, build_model
from parallel import TaskPool
from reports import config_hash, write_csv, write_json
from scalar_fields import ScalarField, parse_field_spec, truncate

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# TOML tables and the keys each accepts
ALLOWED_KEYS = {
    "model": ("mean", "covariance"),
    "field": ("f", "g", "truncate", "gradient_mode"),
    "run": ("samples", "seed", "quad_nodes", "n_per_node", "ci_level", "x_levels", "t_grid", "bounds",
            "include_ou", "error_method", "jackknife_blocks"),
    "charfn": ("pairs", "random_pairs", "max_norm"),
    "output": ("format", "path"),
}

CSV_COLUMNS = {
    "verify-representation": ["side", "alpha", "t", "weight", "mean", "std_error", "n"],
    "charfn-check": ["t", "s", "sigma_ts", "phi0", "phi1", "residual", "abs_residual", "nodes"],
    "tail-certify": ["x", "count", "empirical", "cp_lower", "cp_upper", "bound_kind", "bound", "verdict"],
    "seminorm": ["value", "is_exact", "method", "witness", "lambda_star", "grad_sup_sq", "lambda_bound", "dominated"],
    "herbst": ["t", "h", "h_prime", "rhs", "diff_mean", "std_error", "holds", "saturated",
               "mgf_mean", "mgf_ci_half_width", "mgf_bound", "mgf_verdict", "mgf_saturated"],
}


@dataclass
class RunConfig:
    """Resolved run configuration (TOML file, then flag overrides)."""
    mean: Optional[List[float]] = None
    covariance: object = "identity 2"
    f: str = "max_coord"
    g: Optional[str] = None
    truncate: Optional[float] = None
    gradient_mode: Optional[str] = None
    samples: int = sampling_config.samples
    seed: int = sampling_config.seed
    quad_nodes: int = quad_config.nodes
    n_per_node: Optional[int] = None
    ci_level: float = sampling_config.ci_level
    x_levels: List[float] = field(default_factory=lambda: [1.0, 2.0, 3.0])
    t_grid: List[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    bounds: List[str] = field(default_factory=lambda: ["basic"])
    include_ou: bool = True
    error_method: str = sampling_config.error_method
    jackknife_blocks: int = sampling_config.jackknife_blocks
    pairs: List = field(default_factory=list)
    random_pairs: int = 100
    max_norm: float = 4.0
    format: str = "json"
    path: Optional[str] = None
    workers: int = runtime_config.workers

    def hashable(self) -> Dict:
        """Everything that changes results; output and scheduling settings excluded."""
        data = asdict(self)
        for key in ("format", "path", "workers"):
            data.pop(key)
        return data


@dataclass
class RunContext:
    command: str
    config: RunConfig
    model: GaussianModel
    f: ScalarField
    g: Optional[ScalarField]
    pool: TaskPool


def load_run_config(path: Optional[str], overrides: Optional[Dict] = None) -> RunConfig:
    """Read the TOML file (if any), reject unknown tables/keys, apply overrides."""
    data: Dict = {}
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}")
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Invalid TOML in {path}: {e}")

    values: Dict = {}
    for table, content in data.items():
        if table not in ALLOWED_KEYS:
            raise ConfigError(f"Unknown table [{table}]")
        if not isinstance(content, dict):
            raise ConfigError(f"[{table}] must be a table")
        unknown = sorted(set(content) - set(ALLOWED_KEYS[table]))
        if unknown:
            raise ConfigError(f"Unknown key(s) in [{table}]: {', '.join(unknown)}")
        values.update(content)

    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return RunConfig(**values)


def parse_covariance(value) -> np.ndarray:
    """Rows, ``"identity d"`` or ``"diagonal [v1, ..., vd]"``."""
    if isinstance(value, str):
        text = value.strip()
        m = re.fullmatch(r"identity\s+(\d+)", text)
        if m:
            return np.eye(int(m.group(1)))
        m = re.fullmatch(r"diagonal\s*\[(.*)\]", text)
        if m:
            try:
                return np.diag([float(v) for v in m.group(1).replace(",", " ").split()])
            except ValueError:
                raise ConfigError(f"Invalid diagonal entries: {value!r}")
        raise ConfigError(f"covariance must be rows, 'identity d' or 'diagonal [...]', got {value!r}")
    try:
        return np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"covariance rows are not numeric: {value!r}")


def _require(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


def _check_run(config: RunConfig, command: str):
    _require(isinstance(config.samples, int) and config.samples >= 1, f"samples must be a positive integer, got {config.samples}")
    _require(isinstance(config.seed, int) and 0 <= config.seed < 2**64, f"seed must be a 64-bit unsigned integer, got {config.seed}")
    _require(isinstance(config.quad_nodes, int) and config.quad_nodes >= 1, f"quad_nodes must be >= 1, got {config.quad_nodes}")
    _require(config.n_per_node is None or (isinstance(config.n_per_node, int) and config.n_per_node >= 1),
             f"n_per_node must be a positive integer, got {config.n_per_node}")
    _require(0.0 < float(config.ci_level) < 1.0, f"ci_level must be in (0, 1), got {config.ci_level}")
    _require(config.error_method in ("jackknife", "delta"), f"error_method must be jackknife or delta, got {config.error_method!r}")
    _require(isinstance(config.workers, int) and config.workers >= 1, f"workers must be >= 1, got {config.workers}")
    _require(config.format in ("json", "csv"), f"format must be json or csv, got {config.format!r}")
    _require(config.truncate is None or float(config.truncate) > 0, f"truncate must be > 0, got {config.truncate}")
    _require(len(config.x_levels) > 0 and all(float(x) > 0 for x in config.x_levels), "x_levels must be positive")
    _require(len(config.t_grid) > 0, "t_grid must not be empty")
    try:
        kinds = [BoundKind(k) for k in config.bounds]
    except ValueError:
        raise ConfigError(f"bounds must be drawn from {[k.value for k in BoundKind]}, got {config.bounds}")
    if BoundKind.STRONG_MOMENT in kinds:
        _require(config.f.strip() == "max_coord" and config.truncate is None,
                 "strong_moment bound is only valid for f = max_coord")
    if command == "tail-certify":
        _require(config.samples >= cert_config.min_tail_samples,
                 f"tail-certify needs samples >= {cert_config.min_tail_samples}")


def build_context(command: str, config: RunConfig) -> RunContext:
    """Validate every precondition before any sampling."""
    _check_run(config, command)
    cov = parse_covariance(config.covariance)
    mean = np.zeros(cov.shape[0]) if config.mean is None else config.mean
    try:
        model = build_model(mean, cov)
        f = parse_field_spec(config.f, model.dim)
        g = parse_field_spec(config.g, model.dim) if config.g else None
        if config.gradient_mode:
            f = f.with_mode(config.gradient_mode)
            g = g.with_mode(config.gradient_mode) if g else None
        if config.truncate is not None:
            f = truncate(f, float(config.truncate))
    except GaussCovError as e:
        raise ConfigError(str(e)) from e
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return RunContext(command, config, model, f, g, TaskPool(config.workers))


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------
CommandResult = Tuple[bool, Dict, List[Dict]]


def cmd_verify_representation(ctx: RunContext) -> CommandResult:
    c = ctx.config
    g = ctx.g or ctx.f
    rep = verify_representation(ctx.model, ctx.f, g, RepresentationConfig(
        n=c.samples, n_per_node=c.n_per_node, quad_nodes=c.quad_nodes, ci_level=c.ci_level,
        seed=c.seed, include_ou=c.include_ou, error_method=c.error_method,
        jackknife_blocks=c.jackknife_blocks, workers=c.workers,
    ))
    rows = [{"side": "lhs", "mean": rep.lhs.mean, "std_error": rep.lhs.std_error, "n": rep.lhs.n}]
    for side, est in (("rhs", rep.rhs), ("rhs_ou", rep.rhs_ou)):
        for node in (est.nodes if est is not None else ()):
            rows.append({"side": side, "alpha": node.alpha, "t": node.t, "weight": node.weight,
                         "mean": node.mean, "std_error": node.std_error, "n": node.n})
    result = {"model": ctx.model.summary(), "f": ctx.f.describe(), "g": g.describe(), "report": rep}
    return rep.consistent, result, rows


def _frequency_pairs(config: RunConfig, dim: int) -> List[FrequencyPair]:
    if config.pairs:
        try:
            pairs = [FrequencyPair(np.asarray(t, dtype=float), np.asarray(s, dtype=float)) for t, s in config.pairs]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"charfn pairs must be [[t...], [s...]] entries: {e}")
        for pair in pairs:
            _require(pair.t.shape == (dim,), f"frequency of length {pair.t.shape[0]} for a {dim}-dimensional model")
        return pairs
    gen = RngStream(config.seed, 0).generator()
    pairs = []
    for _ in range(int(config.random_pairs)):
        vecs = []
        for _ in range(2):
            direction = gen.standard_normal(dim)
            direction /= np.linalg.norm(direction)
            vecs.append(direction * gen.uniform(0.0, config.max_norm))
        pairs.append(FrequencyPair(*vecs))
    return pairs


def cmd_charfn_check(ctx: RunContext) -> CommandResult:
    rule = gauss_legendre(ctx.config.quad_nodes)
    rows = [residual_row(ctx.model, pair, rule) for pair in _frequency_pairs(ctx.config, ctx.model.dim)]
    max_residual = max((row["abs_residual"] for row in rows), default=0.0)
    passed = max_residual < quad_config.identity_tolerance
    logger.info(f"charfn-check: max residual {max_residual:.3e} over {len(rows)} pair(s)")
    return passed, {"model": ctx.model.summary(), "max_residual": max_residual, "rows": rows}, rows


def cmd_tail_certify(ctx: RunContext) -> CommandResult:
    c = ctx.config
    report = certify(ctx.model, ctx.f, c.x_levels, c.bounds, c.samples, RngStream(c.seed, 0), pool=ctx.pool)
    rows = []
    for point in report.points:
        for kind, bound in point.bounds.items():
            rows.append({"x": point.x, "count": point.count, "empirical": point.empirical.mean,
                         "cp_lower": point.cp_lower, "cp_upper": point.cp_upper, "bound_kind": kind,
                         "bound": bound, "verdict": point.verdicts[kind]})
    return report.overall, {"report": report}, rows


def cmd_seminorm(ctx: RunContext) -> CommandResult:
    c = ctx.config
    seminorm = estimate_sup_seminorm(ctx.model, ctx.f, rng=RngStream(c.seed, 0), pool=ctx.pool)
    grad_sup = estimate_sup_gradient_sq(ctx.model, ctx.f, rng=RngStream(c.seed, 1), pool=ctx.pool)
    g = ctx.f.gradient(seminorm.witness)
    # sup ||grad f||^2 is at least ||grad f(witness)||^2
    grad_sq = max(grad_sup.value, float(g @ g))
    lambda_bound = ctx.model.lambda_star * grad_sq
    dominated = seminorm.value <= lambda_bound * (1.0 + 1e-12) + 1e-12
    row = {"value": seminorm.value, "is_exact": seminorm.is_exact, "method": seminorm.method,
           "witness": seminorm.witness, "lambda_star": ctx.model.lambda_star, "grad_sup_sq": grad_sup.value,
           "lambda_bound": lambda_bound, "dominated": dominated}
    result = {"model": ctx.model.summary(), "f": ctx.f.describe(), "seminorm": seminorm,
              "grad_sup": grad_sup, "lambda_bound": lambda_bound, "dominated": dominated}
    return dominated, result, [row]


def cmd_herbst(ctx: RunContext) -> CommandResult:
    c = ctx.config
    seminorm = estimate_sup_seminorm(ctx.model, ctx.f, rng=RngStream(c.seed, 2), pool=ctx.pool)
    points = herbst_differential_check(ctx.model, ctx.f, c.t_grid, c.samples, RngStream(c.seed, 0),
                                       seminorm_sq=seminorm.value)
    mgf = mgf_empirical_check(ctx.model, ctx.f, c.t_grid, c.samples, RngStream(c.seed, 1),
                              seminorm_sq=seminorm.value)
    rows = []
    for p, m in zip(points, mgf):
        rows.append({"t": p.t, "h": p.h, "h_prime": p.h_prime, "rhs": p.rhs, "diff_mean": p.diff_mean,
                     "std_error": p.std_error, "holds": p.holds, "saturated": p.saturated,
                     "mgf_mean": m.empirical.mean, "mgf_ci_half_width": m.empirical.ci_half_width,
                     "mgf_bound": m.bound, "mgf_verdict": m.verdict, "mgf_saturated": m.saturated})
    passed = all(p.holds for p in points) and all(m.verdict is not Verdict.VIOLATED for m in mgf)
    result = {"model": ctx.model.summary(), "f": ctx.f.describe(), "seminorm": seminorm,
              "differential": points, "mgf": mgf}
    return passed, result, rows


COMMANDS = {
    "verify-representation": cmd_verify_representation,
    "charfn-check": cmd_charfn_check,
    "tail-certify": cmd_tail_certify,
    "seminorm": cmd_seminorm,
    "herbst": cmd_herbst,
}

# certification commands take no default seed
SEED_REQUIRED = ("tail-certify", "herbst")

HELP = {
    "verify-representation": "Estimate Cov(f, g) and its alpha-integral representation and compare",
    "charfn-check": "Check the characteristic-function interpolation identity on a frequency grid",
    "tail-certify": "Compare empirical tail probabilities with the concentration bounds",
    "seminorm": "Estimate sup <grad f, Sigma grad f> and compare with lambda* sup |grad f|^2",
    "herbst": "Check the Herbst differential inequality and the MGF bound on a t grid",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--samples", type=int, help="Monte Carlo sample count")
    common.add_argument("--quad-nodes", type=int, dest="quad_nodes", help="Gauss-Legendre node count")
    common.add_argument("--ci-level", type=float, dest="ci_level", help="confidence level for MC intervals")
    common.add_argument("--format", choices=("json", "csv"), help="report format (default json)")
    common.add_argument("--out", dest="path", help="report path (default stdout)")
    common.add_argument("--workers", type=int, help="worker threads; results do not depend on it")
    common.add_argument("--log-level", dest="log_level", choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    parser = argparse.ArgumentParser(prog="gausscov", description="Gaussian covariance representation and concentration checks")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        epilog = (f"CSV columns: {', '.join(CSV_COLUMNS[name])}. CSV reports start with a "
                  "'# command=... config_hash=... passed=... seed=... version=...' line.")
        p = sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name], epilog=epilog)
        p.add_argument("--seed", type=int, required=name in SEED_REQUIRED, help="64-bit unsigned seed")
    return parser


def _emit(ctx: RunContext, passed: bool, result: Dict, rows: List[Dict]) -> None:
    c = ctx.config
    header = {
        "command": ctx.command,
        "version": VERSION,
        "seed": c.seed,
        "config_hash": config_hash(c.hashable()),
        "passed": passed,
    }
    if c.format == "csv":
        text = write_csv(rows, CSV_COLUMNS[ctx.command], c.path, metadata=header)
    else:
        text = write_json({**header, "result": result}, c.path)
    if not c.path:
        sys.stdout.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    if args.log_level:
        logging.getLogger().setLevel(args.log_level)

    overrides = {k: getattr(args, k) for k in ("seed", "samples", "quad_nodes", "ci_level", "format", "path", "workers")}
    try:
        ctx = build_context(args.command, load_run_config(args.config, overrides))
    except (ValueError, TypeError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    logger.info(f"Running {args.command} (seed={ctx.config.seed}, samples={ctx.config.samples}, workers={ctx.config.workers})")
    try:
        passed, result, rows = COMMANDS[args.command](ctx)
    except NonFiniteResult as e:
        logger.error(f"Numerical error: {e}")
        return EXIT_NUMERICAL
    except GaussCovError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_CONFIG

    try:
        _emit(ctx, passed, result, rows)
    except OSError as e:
        logger.error(f"Failed to write report: {e}", exc_info=True)
        return EXIT_CONFIG

    logger.info(f"{args.command}: {'PASS' if passed else 'FAIL'}")
    return EXIT_PASS if passed else EXIT_FAIL
