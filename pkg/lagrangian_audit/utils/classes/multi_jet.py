'''
Truncated multivariate Taylor jets.

A jet keeps the Taylor coefficients (partial derivative divided by alpha!) of a
function around a base point for every multi-index |alpha| <= order. Storage is
a dense array in graded-lexicographic order, so the coefficients of a lower
order truncation are always a prefix of the array.

Jets are immutable. Complex vector valued maps (the lifts into C^(N+1)) are
ComplexJetVector objects holding one real and one imaginary coefficient row per
ambient entry, which lets the geometry code multiply whole vectors at once.
'''
import itertools
import logging
from functools import lru_cache
from math import factorial, pi
from numbers import Complex, Real
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from lagrangian_audit.utils.constants import MAX_JET_ORDER, check_same_space
from lagrangian_audit.utils.errors import JetArgumentError, JetSingularityError, JetTruncationError

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]


class JetSpace:
    """Index bookkeeping shared by every jet with the same (num_vars, order)."""

    def __init__(self, num_vars: int, order: int) -> None:
        self.num_vars = num_vars
        self.order = order
        self.multi_indices = []
        for degree in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(num_vars), degree):
                alpha = [0] * num_vars
                for var in combo:
                    alpha[var] += 1
                self.multi_indices.append(tuple(alpha))
        self.index = {alpha: i for i, alpha in enumerate(self.multi_indices)}
        self.size = len(self.multi_indices)
        self.degrees = np.array([sum(alpha) for alpha in self.multi_indices], dtype=int)
        self.factorials = np.array([float(np.prod([factorial(a) for a in alpha])) for alpha in self.multi_indices])
        self._derivative_plans = {}
        self._build_product_plan()

    def __repr__(self) -> str:
        return f"JetSpace(num_vars={self.num_vars}, order={self.order})"

    def _build_product_plan(self) -> None:
        left, right, target = [], [], []
        for i, alpha in enumerate(self.multi_indices):
            for j, beta in enumerate(self.multi_indices):
                # degrees are non-decreasing along the storage order
                if self.degrees[i] + self.degrees[j] > self.order:
                    break
                left.append(i)
                right.append(j)
                target.append(self.index[tuple(a + b for a, b in zip(alpha, beta))])
        perm = np.argsort(np.array(target, dtype=int), kind="stable")
        target = np.array(target, dtype=int)[perm]
        self._left = np.array(left, dtype=int)[perm]
        self._right = np.array(right, dtype=int)[perm]
        # every target has at least the pair (gamma, 0), so no segment is empty
        self._starts = np.flatnonzero(np.r_[True, np.diff(target) != 0])
        assert len(self._starts) == self.size, f"Product plan covers {len(self._starts)} of {self.size} coefficients"

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Truncated product of coefficient arrays; leading axes broadcast."""
        products = a[..., self._left] * b[..., self._right]
        return np.add.reduceat(products, self._starts, axis=-1)

    def compose(self, coeffs: np.ndarray, series: Sequence[float]) -> np.ndarray:
        """Evaluate sum_j series[j] * (a - a0)^j with Horner's rule, truncated at self.order."""
        delta = np.array(coeffs, dtype=float)
        delta[..., 0] = 0.0
        result = np.zeros_like(delta)
        result[..., 0] = series[self.order]
        for j in range(self.order - 1, -1, -1):
            result = self.multiply(result, delta)
            result[..., 0] += series[j]
        return result

    def derivative_plan(self, var: int) -> Tuple[np.ndarray, np.ndarray]:
        if var not in self._derivative_plans:
            lower = get_jet_space(self.num_vars, self.order - 1)
            source = np.empty(lower.size, dtype=int)
            factor = np.empty(lower.size)
            for i, delta in enumerate(lower.multi_indices):
                gamma = list(delta)
                gamma[var] += 1
                source[i] = self.index[tuple(gamma)]
                factor[i] = gamma[var]
            self._derivative_plans[var] = (source, factor)
        return self._derivative_plans[var]

    def differentiate(self, coeffs: np.ndarray, var: int) -> np.ndarray:
        if self.order == 0:
            raise JetTruncationError("Cannot differentiate an order 0 jet")
        if not 0 <= var < self.num_vars:
            raise JetArgumentError(f"Variable {var} out of range for {self.num_vars} variables")
        source, factor = self.derivative_plan(var)
        return coeffs[..., source] * factor

    def gradient(self, coeffs: np.ndarray) -> np.ndarray:
        """First partials at the base point, shape (..., num_vars)."""
        if self.order < 1:
            raise JetTruncationError("Gradient needs order >= 1")
        return coeffs[..., 1:1 + self.num_vars]

    def hessian(self, coeffs: np.ndarray) -> np.ndarray:
        """Second partials at the base point, shape (..., num_vars, num_vars)."""
        if self.order < 2:
            raise JetTruncationError("Hessian needs order >= 2")
        m = self.num_vars
        out = np.empty(coeffs.shape[:-1] + (m, m))
        for i in range(m):
            for j in range(i, m):
                alpha = [0] * m
                alpha[i] += 1
                alpha[j] += 1
                value = coeffs[..., self.index[tuple(alpha)]] * (2.0 if i == j else 1.0)
                out[..., i, j] = value
                out[..., j, i] = value
        return out


@lru_cache(maxsize=None)
def get_jet_space(num_vars: int, order: int) -> JetSpace:
    if num_vars < 0:
        raise JetArgumentError(f"num_vars must be non-negative, got {num_vars}")
    if not 0 <= order <= MAX_JET_ORDER:
        raise JetArgumentError(f"order must be in [0, {MAX_JET_ORDER}], got {order}")
    return JetSpace(num_vars, order)


def _power_series(base: float, exponent: float, order: int) -> np.ndarray:
    # Taylor coefficients of x**exponent around base
    series = np.empty(order + 1)
    binom = 1.0
    for j in range(order + 1):
        series[j] = binom * base ** (exponent - j)
        binom *= (exponent - j) / (j + 1)
    return series


class MultiJet:
    __slots__ = ("space", "coeffs")
    __array_ufunc__ = None

    def __init__(self, space: JetSpace, coeffs: np.ndarray) -> None:
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (space.size,):
            raise JetArgumentError(f"Expected {space.size} coefficients for {space}, got shape {coeffs.shape}")
        coeffs.setflags(write=False)
        self.space = space
        self.coeffs = coeffs

    @classmethod
    def constant(cls, value: float, num_vars: int, order: int) -> "MultiJet":
        space = get_jet_space(num_vars, order)
        coeffs = np.zeros(space.size)
        coeffs[0] = value
        return cls(space, coeffs)

    @property
    def num_vars(self) -> int:
        return self.space.num_vars

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    def __repr__(self) -> str:
        return f"MultiJet(num_vars={self.num_vars}, order={self.order}, value={self.value})"

    def coefficient(self, alpha: MultiIndex) -> float:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.num_vars or any(a < 0 for a in alpha):
            raise JetArgumentError(f"Multi-index {alpha} does not fit {self.num_vars} variables")
        if sum(alpha) > self.order:
            raise JetTruncationError(f"|{alpha}| = {sum(alpha)} exceeds jet order {self.order}")
        return float(self.coeffs[self.space.index[alpha]])

    def partial(self, alpha: MultiIndex) -> float:
        coefficient = self.coefficient(alpha)
        return coefficient * float(np.prod([factorial(int(a)) for a in alpha]))

    def coefficient_map(self) -> Dict[MultiIndex, float]:
        return {alpha: float(c) for alpha, c in zip(self.space.multi_indices, self.coeffs)}

    def derivative(self, var: int) -> "MultiJet":
        lower = get_jet_space(self.num_vars, self.order - 1) if self.order > 0 else None
        coeffs = self.space.differentiate(self.coeffs, var)
        return MultiJet(lower, coeffs)

    def truncate(self, order: int) -> "MultiJet":
        if order > self.order:
            raise JetTruncationError(f"Cannot raise jet order from {self.order} to {order}")
        lower = get_jet_space(self.num_vars, order)
        return MultiJet(lower, self.coeffs[:lower.size])

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, MultiJet):
            if (other.num_vars, other.order) != (self.num_vars, self.order):
                raise JetArgumentError(f"Jets live in different spaces: {self.space} versus {other.space}")
            return other.coeffs
        if isinstance(other, Real):
            coeffs = np.zeros(self.space.size)
            coeffs[0] = float(other)
            return coeffs
        raise JetArgumentError(f"Cannot combine MultiJet with {type(other).__name__}")

    def __add__(self, other) -> "MultiJet":
        return MultiJet(self.space, self.coeffs + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other) -> "MultiJet":
        return MultiJet(self.space, self.coeffs - self._coerce(other))

    def __rsub__(self, other) -> "MultiJet":
        return MultiJet(self.space, self._coerce(other) - self.coeffs)

    def __neg__(self) -> "MultiJet":
        return MultiJet(self.space, -self.coeffs)

    def __mul__(self, other) -> "MultiJet":
        if isinstance(other, Real):
            return MultiJet(self.space, self.coeffs * float(other))
        if isinstance(other, ComplexJetVector):
            return other * self
        return MultiJet(self.space, self.space.multiply(self.coeffs, self._coerce(other)))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "MultiJet":
        if isinstance(other, Real):
            if other == 0:
                raise JetSingularityError("Division by zero")
            return MultiJet(self.space, self.coeffs / float(other))
        if not isinstance(other, MultiJet):
            raise JetArgumentError(f"Cannot divide MultiJet by {type(other).__name__}")
        self._coerce(other)
        return self * other.recip()

    def __rtruediv__(self, other) -> "MultiJet":
        return MultiJet(self.space, self._coerce(other)) * self.recip()

    def _apply(self, series: Sequence[float]) -> "MultiJet":
        return MultiJet(self.space, self.space.compose(self.coeffs, series))

    def sin(self) -> "MultiJet":
        a0 = self.value
        return self._apply([np.sin(a0 + j * pi / 2) / factorial(j) for j in range(self.order + 1)])

    def cos(self) -> "MultiJet":
        a0 = self.value
        return self._apply([np.cos(a0 + j * pi / 2) / factorial(j) for j in range(self.order + 1)])

    def exp(self) -> "MultiJet":
        a0 = self.value
        return self._apply([np.exp(a0) / factorial(j) for j in range(self.order + 1)])

    def sqrt(self) -> "MultiJet":
        if self.value <= 0:
            raise JetSingularityError(f"sqrt needs a positive constant term, got {self.value}")
        return self._apply(_power_series(self.value, 0.5, self.order))

    def recip(self) -> "MultiJet":
        if self.value == 0:
            raise JetSingularityError("Reciprocal of a jet with zero constant term")
        return self._apply(_power_series(self.value, -1.0, self.order))


class ComplexJetVector:
    """Jet of a map into C^dim, stored as real and imaginary coefficient rows."""
    __slots__ = ("space", "real", "imag")
    __array_ufunc__ = None

    def __init__(self, space: JetSpace, real: np.ndarray, imag: np.ndarray) -> None:
        real = np.array(real, dtype=float)
        imag = np.array(imag, dtype=float)
        if real.ndim != 2 or real.shape != imag.shape or real.shape[1] != space.size:
            raise JetArgumentError(f"Bad coefficient shapes {real.shape} and {imag.shape} for {space}")
        real.setflags(write=False)
        imag.setflags(write=False)
        self.space = space
        self.real = real
        self.imag = imag

    @classmethod
    def from_entries(cls, entries: Sequence[Union[MultiJet, Tuple[MultiJet, MultiJet], "ComplexJetVector"]]) -> "ComplexJetVector":
        if len(entries) == 0:
            raise JetArgumentError("A complex jet vector needs at least one entry")
        rows = []
        for entry in entries:
            if isinstance(entry, ComplexJetVector):
                rows.extend(zip(entry.real, entry.imag))
                space = entry.space
            elif isinstance(entry, MultiJet):
                rows.append((entry.coeffs, np.zeros_like(entry.coeffs)))
                space = entry.space
            else:
                re, im = entry
                if (re.num_vars, re.order) != (im.num_vars, im.order):
                    raise JetArgumentError("Real and imaginary parts live in different spaces")
                rows.append((re.coeffs, im.coeffs))
                space = re.space
        if any(len(r) != space.size for r, _ in rows):
            raise JetArgumentError("All entries must share num_vars and order")
        return cls(space, np.array([r for r, _ in rows]), np.array([i for _, i in rows]))

    @classmethod
    def concat(cls, vectors: Sequence["ComplexJetVector"]) -> "ComplexJetVector":
        return cls.from_entries(list(vectors))

    @classmethod
    def constant(cls, values: Sequence[complex], num_vars: int, order: int) -> "ComplexJetVector":
        space = get_jet_space(num_vars, order)
        values = np.asarray(values, dtype=complex)
        real = np.zeros((len(values), space.size))
        imag = np.zeros((len(values), space.size))
        real[:, 0] = values.real
        imag[:, 0] = values.imag
        return cls(space, real, imag)

    @property
    def dim(self) -> int:
        return self.real.shape[0]

    @property
    def num_vars(self) -> int:
        return self.space.num_vars

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def entries(self) -> Tuple[Tuple[MultiJet, MultiJet], ...]:
        return tuple((MultiJet(self.space, re), MultiJet(self.space, im)) for re, im in zip(self.real, self.imag))

    def __repr__(self) -> str:
        return f"ComplexJetVector(dim={self.dim}, num_vars={self.num_vars}, order={self.order})"

    def value(self) -> np.ndarray:
        return self.real[:, 0] + 1j * self.imag[:, 0]

    def derivative(self, var: int) -> "ComplexJetVector":
        lower = get_jet_space(self.num_vars, self.order - 1) if self.order > 0 else None
        return ComplexJetVector(lower, self.space.differentiate(self.real, var), self.space.differentiate(self.imag, var))

    def truncate(self, order: int) -> "ComplexJetVector":
        if order > self.order:
            raise JetTruncationError(f"Cannot raise jet order from {self.order} to {order}")
        lower = get_jet_space(self.num_vars, order)
        return ComplexJetVector(lower, self.real[:, :lower.size], self.imag[:, :lower.size])

    def times_i(self) -> "ComplexJetVector":
        """The complex structure J."""
        return ComplexJetVector(self.space, -self.imag, self.real)

    def conj(self) -> "ComplexJetVector":
        return ComplexJetVector(self.space, self.real, -self.imag)

    def transform(self, matrix: np.ndarray) -> "ComplexJetVector":
        """Apply a (complex) matrix to the ambient index."""
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[1] != self.dim:
            raise JetArgumentError(f"Matrix of shape {matrix.shape} cannot act on dimension {self.dim}")
        mr, mi = matrix.real, matrix.imag
        return ComplexJetVector(self.space, mr @ self.real - mi @ self.imag, mr @ self.imag + mi @ self.real)

    @check_same_space
    def __add__(self, other: "ComplexJetVector") -> "ComplexJetVector":
        return ComplexJetVector(self.space, self.real + other.real, self.imag + other.imag)

    @check_same_space
    def __sub__(self, other: "ComplexJetVector") -> "ComplexJetVector":
        return ComplexJetVector(self.space, self.real - other.real, self.imag - other.imag)

    def __neg__(self) -> "ComplexJetVector":
        return ComplexJetVector(self.space, -self.real, -self.imag)

    def __mul__(self, other) -> "ComplexJetVector":
        if isinstance(other, Complex):
            c = complex(other)
            return ComplexJetVector(self.space, c.real * self.real - c.imag * self.imag, c.real * self.imag + c.imag * self.real)
        if isinstance(other, MultiJet):
            if (other.num_vars, other.order) != (self.num_vars, self.order):
                raise JetArgumentError(f"Jets live in different spaces: {self.space} versus {other.space}")
            return ComplexJetVector(self.space, self.space.multiply(self.real, other.coeffs), self.space.multiply(self.imag, other.coeffs))
        if isinstance(other, ComplexJetVector):
            if (other.num_vars, other.order) != (self.num_vars, self.order):
                raise JetArgumentError(f"Jets live in different spaces: {self.space} versus {other.space}")
            if self.dim != other.dim and 1 not in (self.dim, other.dim):
                raise JetArgumentError(f"Cannot multiply entrywise dimensions {self.dim} and {other.dim}")
            mul = self.space.multiply
            real = mul(self.real, other.real) - mul(self.imag, other.imag)
            imag = mul(self.real, other.imag) + mul(self.imag, other.real)
            return ComplexJetVector(self.space, real, imag)
        raise JetArgumentError(f"Cannot multiply ComplexJetVector by {type(other).__name__}")

    __rmul__ = __mul__

    @check_same_space
    def real_inner(self, other: "ComplexJetVector") -> MultiJet:
        """Re <self, other> = sum_k Re(self_k * conj(other_k)) as a jet."""
        mul = self.space.multiply
        coeffs = mul(self.real, other.real) + mul(self.imag, other.imag)
        return MultiJet(self.space, coeffs.sum(axis=0))

    def norm_squared(self) -> MultiJet:
        return self.real_inner(self)


def jet_seed(var_index: int, value: float, num_vars: int, order: int) -> MultiJet:
    if num_vars < 1 or not 0 <= var_index < num_vars:
        raise JetArgumentError(f"Variable index {var_index} out of range for {num_vars} variables")
    if not 1 <= order <= MAX_JET_ORDER:
        raise JetArgumentError(f"order must be in [1, {MAX_JET_ORDER}], got {order}")
    space = get_jet_space(num_vars, order)
    coeffs = np.zeros(space.size)
    coeffs[0] = value
    coeffs[1 + var_index] = 1.0
    return MultiJet(space, coeffs)


def jet_seeds(values: Sequence[float], order: int) -> Tuple[MultiJet, ...]:
    """Coordinate jets for every variable of a base point."""
    return tuple(jet_seed(i, float(v), len(values), order) for i, v in enumerate(values))


def jet_arithmetic(a: MultiJet, b: Union[MultiJet, float], op: str) -> MultiJet:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if isinstance(b, MultiJet) and b.value == 0:
            raise JetSingularityError("Division by a jet with zero constant term")
        return a / b
    if op == "scale":
        if not isinstance(b, Real):
            raise JetArgumentError("scale expects a real factor")
        return a * b
    raise JetArgumentError(f"Unknown jet operation {op}")


def exp_i_angle(theta: MultiJet) -> ComplexJetVector:
    """e^(i theta) as a one entry complex jet vector (cos theta, sin theta)."""
    return ComplexJetVector.from_entries([(theta.cos(), theta.sin())])


def jet_transcendental(a: MultiJet, fn: str) -> Union[MultiJet, ComplexJetVector]:
    if fn == "exp_i_angle":
        return exp_i_angle(a)
    if fn in ("sin", "cos", "sqrt", "recip", "exp"):
        return getattr(a, fn)()
    raise JetArgumentError(f"Unknown transcendental {fn}")


def jet_partial(a: MultiJet, alpha: MultiIndex) -> float:
    return a.partial(alpha)
