"""
Forward-mode automatic differentiation with dual numbers.

EDUCATIONAL NOTE - Dual numbers
-------------------------------
A dual number a + b*eps obeys eps^2 = 0. Evaluating a smooth function on
x + 1*eps gives f(x) + f'(x)*eps: the derivative rides along in the dual
part, exact to machine precision, with no step size to tune.

For a Lagrangian L(t, q, q', ..., q^(N)) we seed the jets with a direction
(d_0, ..., d_N) and read

    dual part of L(t, q + eps*d_0, ..., q^(N) + eps*d_N) = sum_j dL/dq^(j) . d_j

One pass per coordinate gives a full partial gradient; a single pass with the
variation jets as direction gives the chain-rule integrand of a perturbation
family directly.

Jets are handed to user code as numpy object arrays of DualNumber, so plain
numpy expressions (np.dot, np.sum, np.exp, np.sin, ** ...) keep working:
numpy dispatches ufuncs on object arrays to the methods of the same name.
"""

import logging
import math
from typing import Callable, Sequence, Union

import numpy as np

from .core import ParameterError

logger = logging.getLogger(__name__)

Number = Union[float, int, "DualNumber"]


class DualNumber:
    """Scalar a + b*eps with eps^2 = 0."""

    __slots__ = ("real", "dual")

    def __init__(self, real: float, dual: float = 0.0):
        self.real = float(real)
        self.dual = float(dual)

    def __repr__(self) -> str:
        return f"DualNumber({self.real!r}, {self.dual!r})"

    # --- arithmetic ---------------------------------------------------------

    @staticmethod
    def _coerce(other) -> "DualNumber":
        if isinstance(other, DualNumber):
            return other
        return DualNumber(float(other), 0.0)

    def __add__(self, other):
        o = self._coerce(other)
        return DualNumber(self.real + o.real, self.dual + o.dual)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return DualNumber(self.real - o.real, self.dual - o.dual)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        return DualNumber(self.real * o.real, self.real * o.dual + o.real * self.dual)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        return DualNumber(
            self.real / o.real,
            (self.dual * o.real - self.real * o.dual) / (o.real * o.real),
        )

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, power):
        if isinstance(power, DualNumber):
            # a^b = exp(b log a)
            return (power * self.log()).exp()
        p = float(power)
        if p == 0.0:
            return DualNumber(1.0, 0.0)
        if self.real == 0.0 and p < 1.0:
            raise ParameterError(f"Derivative of x**{p} is undefined at x = 0")
        if self.real < 0.0 and not p.is_integer():
            raise ParameterError(f"x**{p} is not real for x = {self.real}")
        return DualNumber(self.real ** p, p * self.real ** (p - 1.0) * self.dual)

    def __rpow__(self, base):
        return (self * math.log(float(base))).exp()

    def __neg__(self):
        return DualNumber(-self.real, -self.dual)

    def __pos__(self):
        return self

    def __abs__(self):
        return self if self.real >= 0 else -self

    # Comparisons act on the real part so branches in user code behave.
    def __lt__(self, other):
        return self.real < self._coerce(other).real

    def __le__(self, other):
        return self.real <= self._coerce(other).real

    def __gt__(self, other):
        return self.real > self._coerce(other).real

    def __ge__(self, other):
        return self.real >= self._coerce(other).real

    # --- elementary functions (numpy object-array dispatch targets) ----------

    def exp(self):
        e = math.exp(self.real)
        return DualNumber(e, e * self.dual)

    def log(self):
        return DualNumber(math.log(self.real), self.dual / self.real)

    def sqrt(self):
        r = math.sqrt(self.real)
        return DualNumber(r, 0.5 * self.dual / r)

    def sin(self):
        return DualNumber(math.sin(self.real), math.cos(self.real) * self.dual)

    def cos(self):
        return DualNumber(math.cos(self.real), -math.sin(self.real) * self.dual)

    def tan(self):
        c = math.cos(self.real)
        return DualNumber(math.tan(self.real), self.dual / (c * c))

    def tanh(self):
        th = math.tanh(self.real)
        return DualNumber(th, (1.0 - th * th) * self.dual)

    def arctan(self):
        return DualNumber(math.atan(self.real), self.dual / (1.0 + self.real * self.real))

    def square(self):
        return self * self


def seed(values: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Object array of DualNumber(values[i], direction[i])."""
    values = np.asarray(values, dtype=float).reshape(-1)
    direction = np.asarray(direction, dtype=float).reshape(-1)
    out = np.empty(values.size, dtype=object)
    for i, (v, d) in enumerate(zip(values, direction)):
        out[i] = DualNumber(v, d)
    return out


def is_dual(x) -> bool:
    if isinstance(x, DualNumber):
        return True
    return isinstance(x, np.ndarray) and x.dtype == object and x.size > 0 and isinstance(
        x.flat[0], DualNumber
    )


def real_part(x) -> Union[float, np.ndarray]:
    if isinstance(x, DualNumber):
        return x.real
    if isinstance(x, np.ndarray) and x.dtype == object:
        return np.array([real_part(v) for v in x.flat], dtype=float).reshape(x.shape)
    return x


def dual_part(x) -> Union[float, np.ndarray]:
    if isinstance(x, DualNumber):
        return x.dual
    if isinstance(x, np.ndarray) and x.dtype == object:
        return np.array([dual_part(v) for v in x.flat], dtype=float).reshape(x.shape)
    if isinstance(x, np.ndarray):
        return np.zeros_like(x, dtype=float)
    return 0.0


def lift(
    value: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    x,
) -> Number:
    """
    Evaluate a scalar field with a user-supplied gradient on plain or dual input.

    On dual input the result is value(x) + (gradient(x) . dx) eps, so potentials
    only need a value and an exact gradient, never dual-aware code.
    """
    if not is_dual(x):
        return value(np.asarray(x, dtype=float))
    base = np.asarray(real_part(x), dtype=float)
    tangent = np.asarray(dual_part(x), dtype=float)
    return DualNumber(
        value(base), float(np.dot(np.asarray(gradient(base), dtype=float), tangent))
    )


def directional_derivative(
    func: Callable[[Sequence[np.ndarray]], Number],
    point: Sequence[np.ndarray],
    direction: Sequence[np.ndarray],
) -> float:
    """d/d(eps) func(point + eps * direction) at eps = 0, in one forward pass."""
    seeded = [seed(p, d) for p, d in zip(point, direction)]
    return float(dual_part(func(seeded)))
