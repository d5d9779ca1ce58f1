"""Scalar fields f: R^d -> R with gradients.

A ScalarField wraps a body (built-in or parsed expression) and a gradient
mode. Every body evaluates batches: `value_and_grad(x)` takes an (n, d)
array and returns values (n,) and gradients (n, d). Single points are
accepted by the ScalarField methods and unwrapped on return.

Subgradient conventions at kinks: max picks the lowest maximising index,
min the lowest minimising index, abs uses sign(0) = 0, the Euclidean norm
uses 0 at the origin.
"""

import logging
import re
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

import expressions
from errors import DimensionMismatch, NonFiniteResult, NonPositiveInput

logger = logging.getLogger(__name__)

GRADIENT_MODES = ("analytic", "forward_autodiff", "finite_difference")
FD_REL_STEP = 1e-5


# ----------------------------------------------------------------------
# Bodies
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Linear:
    coeffs: np.ndarray
    offset: float = 0.0

    def value_and_grad(self, x):
        return x @ self.coeffs + self.offset, np.broadcast_to(self.coeffs, x.shape).copy()

    def describe(self) -> str:
        return f"linear({', '.join(repr(float(c)) for c in self.coeffs)})"


@dataclass(frozen=True)
class Constant:
    value: float

    def value_and_grad(self, x):
        return np.full(x.shape[0], float(self.value)), np.zeros(x.shape)

    def describe(self) -> str:
        return f"constant({self.value!r})"


@dataclass(frozen=True)
class MaxCoord:
    def value_and_grad(self, x):
        idx = np.argmax(x, axis=1)  # first maximiser on ties
        rows = np.arange(x.shape[0])
        grad = np.zeros(x.shape)
        grad[rows, idx] = 1.0
        return x[rows, idx], grad

    def describe(self) -> str:
        return "max_coord"


@dataclass(frozen=True)
class EuclideanNorm:
    def value_and_grad(self, x):
        r = np.linalg.norm(x, axis=1)
        safe = np.where(r > 0.0, r, 1.0)
        grad = np.where((r > 0.0)[:, None], x / safe[:, None], 0.0)
        return r, grad

    def describe(self) -> str:
        return "euclidean_norm"


@dataclass(frozen=True, eq=False)
class Expression:
    ast: expressions.ExpressionAST
    text: str = ""

    def value_and_grad(self, x):
        return expressions.evaluate_dual(self.ast, x)

    def values(self, x):
        return expressions.evaluate_value(self.ast, x)

    def describe(self) -> str:
        return self.text or expressions.format_expression(self.ast)


@dataclass(frozen=True, eq=False)
class Truncated:
    """clamp(f, -level, level); gradient is grad f where |f| < level, else 0."""
    inner: "ScalarField"
    level: float

    def value_and_grad(self, x):
        v, g = self.inner._value_and_grad(x)
        inside = np.abs(v) < self.level
        return np.clip(v, -self.level, self.level), np.where(inside[:, None], g, 0.0)

    def describe(self) -> str:
        return f"truncate({self.inner.describe()}, {self.level!r})"


@dataclass(frozen=True, eq=False)
class ExpTilt:
    """x -> exp(t * (f(x) - shift))."""
    inner: "ScalarField"
    t: float
    shift: float = 0.0

    def value_and_grad(self, x):
        v, g = self.inner._value_and_grad(x)
        with np.errstate(over="ignore"):
            e = np.exp(self.t * (v - self.shift))
        return e, (self.t * e)[:, None] * g

    def describe(self) -> str:
        return f"exp({self.t!r} * ({self.inner.describe()} - {self.shift!r}))"


@dataclass(frozen=True, eq=False)
class Whitened:
    """z -> f(mu + S z) with gradient S grad f(mu + S z) (S symmetric)."""
    inner: "ScalarField"
    mean: np.ndarray
    root: np.ndarray

    def value_and_grad(self, z):
        v, g = self.inner._value_and_grad(self.mean + z @ self.root)
        return v, g @ self.root

    def describe(self) -> str:
        return f"whiten({self.inner.describe()})"


@dataclass(frozen=True, eq=False)
class Shifted:
    inner: "ScalarField"
    offset: float

    def value_and_grad(self, x):
        v, g = self.inner._value_and_grad(x)
        return v + self.offset, g

    def describe(self) -> str:
        return f"({self.inner.describe()} + {self.offset!r})"


# ----------------------------------------------------------------------
# ScalarField
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ScalarField:
    """Evaluable, differentiable f: R^d -> R."""
    dim: int
    body: object
    gradient_mode: str = "analytic"
    name: Optional[str] = None

    def __post_init__(self):
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}, got {self.gradient_mode!r}")

    def describe(self) -> str:
        return self.name or self.body.describe()

    def with_mode(self, mode: str) -> "ScalarField":
        """Copy with another gradient mode.

        Parsed expressions have no closed-form gradient, so "analytic" on
        them (or on anything wrapping one) means forward autodiff.
        """
        if mode == "analytic" and _uses_expression(self.body):
            mode = "forward_autodiff"
        return ScalarField(self.dim, self.body, mode, self.name)

    def _as_batch(self, x) -> Tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.ndim != 2 or batch.shape[1] != self.dim:
            raise DimensionMismatch(f"expected points of length {self.dim}, got shape {x.shape}")
        return batch, single

    def _value_and_grad(self, x: np.ndarray):
        """Raw batched evaluation honouring the gradient mode (no finiteness check)."""
        if self.gradient_mode == "finite_difference":
            return self._values(x), _central_differences(self._values, x)
        return self.body.value_and_grad(x)

    def _values(self, x: np.ndarray) -> np.ndarray:
        if hasattr(self.body, "values"):
            with np.errstate(all="ignore"):
                return self.body.values(x)
        return self.body.value_and_grad(x)[0]

    def evaluate(self, x):
        batch, single = self._as_batch(x)
        with np.errstate(all="ignore"):
            v = self._values(batch)
        _require_finite(v, self)
        return float(v[0]) if single else v

    def value_and_gradient(self, x):
        batch, single = self._as_batch(x)
        with np.errstate(all="ignore"):
            v, g = self._value_and_grad(batch)
        _require_finite(v, self)
        _require_finite(g, self)
        if single:
            return float(v[0]), g[0]
        return v, g

    def gradient(self, x):
        return self.value_and_gradient(x)[1]

    def unchecked(self, x: np.ndarray):
        """Batched (values, gradients) that may contain NaN/inf."""
        batch, _ = self._as_batch(x)
        with np.errstate(all="ignore"):
            return self._value_and_grad(batch)

    def __call__(self, x):
        return self.evaluate(x)


def _uses_expression(body) -> bool:
    if isinstance(body, Expression):
        return True
    inner = getattr(body, "inner", None)
    return inner is not None and _uses_expression(inner.body)


def _require_finite(a: np.ndarray, f: ScalarField):
    if not np.all(np.isfinite(a)):
        raise NonFiniteResult(f"{f.describe()} produced NaN or infinity")


def _central_differences(values, x: np.ndarray) -> np.ndarray:
    """Central differences with step 1e-5 * (1 + ||x||) per row."""
    n, d = x.shape
    h = FD_REL_STEP * (1.0 + np.linalg.norm(x, axis=1))
    eye = np.eye(d)
    # row i*d + j is point i shifted along coordinate j
    offsets = eye[None, :, :] * h[:, None, None]
    plus = (x[:, None, :] + offsets).reshape(n * d, d)
    minus = (x[:, None, :] - offsets).reshape(n * d, d)
    fp = values(plus).reshape(n, d)
    fm = values(minus).reshape(n, d)
    return (fp - fm) / (2.0 * h[:, None])


def gradient(field: ScalarField, x) -> np.ndarray:
    """Gradient by the field's mode; NonFiniteResult on NaN/inf."""
    return field.gradient(x)


def finite_difference_gradient(field: ScalarField, x) -> np.ndarray:
    return field.with_mode("finite_difference").gradient(x)


# ----------------------------------------------------------------------
# Constructors
# ----------------------------------------------------------------------
def linear(a, offset: float = 0.0) -> ScalarField:
    a = np.array(a, dtype=float).ravel()
    a.flags.writeable = False
    return ScalarField(a.shape[0], Linear(a, float(offset)))


def constant(value: float, dim: int) -> ScalarField:
    return ScalarField(dim, Constant(float(value)))


def max_coord(dim: int) -> ScalarField:
    return ScalarField(dim, MaxCoord())


def euclidean_norm(dim: int) -> ScalarField:
    return ScalarField(dim, EuclideanNorm())


def parse_expression(text: str, dim: int) -> ScalarField:
    """Parse an expression into a field with forward-mode gradients."""
    ast = expressions.parse(text, dim)
    logger.debug(f"Parsed expression {text!r} -> {expressions.format_expression(ast)}")
    return ScalarField(dim, Expression(ast, text.strip()), "forward_autodiff")


def truncate(field: ScalarField, level: float) -> ScalarField:
    """x -> clamp(f(x), -level, level).

    Contracts differences and keeps the gradient bound (gradient is
    grad f inside the band, 0 outside).
    """
    if not level > 0:
        raise NonPositiveInput(f"truncation level must be > 0, got {level}")
    return ScalarField(field.dim, Truncated(field, float(level)), field.gradient_mode)


def exp_tilt(field: ScalarField, t: float, shift: float = 0.0) -> ScalarField:
    return ScalarField(field.dim, ExpTilt(field, float(t), float(shift)), field.gradient_mode)


def whiten(field: ScalarField, mean, root) -> ScalarField:
    return ScalarField(
        field.dim,
        Whitened(field, np.asarray(mean, dtype=float), np.asarray(root, dtype=float)),
        field.gradient_mode,
    )


def shift(field: ScalarField, offset: float) -> ScalarField:
    """x -> f(x) + offset; same gradient."""
    return ScalarField(field.dim, Shifted(field, float(offset)), field.gradient_mode)


def is_max_coord(field: ScalarField) -> bool:
    return isinstance(field.body, MaxCoord)


def is_linear(field: ScalarField) -> bool:
    return isinstance(field.body, Linear)


def is_constant(field: ScalarField) -> bool:
    return isinstance(field.body, Constant)


_SPEC_RE = re.compile(r"^\s*(linear|constant)\s*[\[(](.*)[\])]\s*$")


def parse_field_spec(text: str, dim: int) -> ScalarField:
    """Built-in name or expression.

    Built-ins: ``max_coord``, ``euclidean_norm``, ``linear[a1, ..., ad]``,
    ``constant[c]``. Anything else is parsed as an expression.
    """
    spec = text.strip()
    if spec == "max_coord":
        return max_coord(dim)
    if spec == "euclidean_norm":
        return euclidean_norm(dim)
    m = _SPEC_RE.match(spec)
    if m:
        numbers = [float(v) for v in m.group(2).replace(",", " ").split()]
        if m.group(1) == "constant":
            if len(numbers) != 1:
                raise DimensionMismatch(f"constant takes one value, got {len(numbers)}")
            return constant(numbers[0], dim)
        if len(numbers) != dim:
            raise DimensionMismatch(f"linear needs {dim} coefficients, got {len(numbers)}")
        return linear(numbers)
    return parse_expression(spec, dim)


# ----------------------------------------------------------------------
# Coordinate max identities
# ----------------------------------------------------------------------
def max_coord_gradient_identity(dim: int, x) -> Tuple[float, float]:
    """(sum of partials, sum of squared partials) of max_coord at x.

    The gradient is one-hot everywhere under the lowest-index rule, so both
    sums equal 1.
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    g = max_coord(dim).gradient(x)
    return float(np.sum(g)), float(np.sum(g * g))


def lipschitz_witness_max(x, y) -> Tuple[float, float, float]:
    """(|max x - max y|, max_i |x_i - y_i|, ||x - y||), nondecreasing."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    return (
        float(abs(np.max(x) - np.max(y))),
        float(np.max(np.abs(diff))),
        float(np.linalg.norm(diff)),
    )


# ----------------------------------------------------------------------
# Complex exponentials
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ComplexExponentialField:
    """x -> exp(i <t, x>), |value| = 1, gradient i t exp(i <t, x>)."""
    frequency: np.ndarray

    @property
    def dim(self) -> int:
        return int(np.asarray(self.frequency).shape[0])

    def evaluate(self, x):
        return np.exp(1j * (np.asarray(x, dtype=float) @ np.asarray(self.frequency, dtype=float)))

    def gradient(self, x):
        v = self.evaluate(x)
        t = np.asarray(self.frequency, dtype=float)
        if np.ndim(v) == 0:
            return 1j * t * v
        return 1j * v[:, None] * t[None, :]

    def complex_step_gradient(self, x, h: float = 1e-20) -> np.ndarray:
        """Complex-step derivative of the real and imaginary parts separately."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(self.frequency, dtype=float)
        out = np.zeros(x.shape[0], dtype=complex)
        for i in range(x.shape[0]):
            step = np.zeros(x.shape[0], dtype=complex)
            step[i] = 1j * h
            phase = (x + step) @ t
            # cos and sin are real-analytic, so each part takes a complex step
            out[i] = np.imag(np.cos(phase)) / h + 1j * np.imag(np.sin(phase)) / h
        return out


def summary(field: ScalarField) -> Dict:
    return {"dim": field.dim, "body": field.describe(), "gradient_mode": field.gradient_mode}
