"""Forward-mode automatic differentiation with gradient-carrying dual numbers.

A :class:`Dual` holds a value and the vector of its partial derivatives with
respect to a fixed set of seeded inputs.  The elementary functions below accept
plain floats as well, so metric families and parsed expressions can be written
once and evaluated either way.
"""
import math

import numpy as np


class Dual:
    __slots__ = ("val", "grad")

    def __init__(self, val, grad):
        self.val = float(val)
        self.grad = grad

    def __repr__(self):
        return f"Dual({self.val!r}, {self.grad!r})"

    def __float__(self):
        return self.val

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.grad + other.grad)
        return Dual(self.val + other, self.grad)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.grad - other.grad)
        return Dual(self.val - other, self.grad)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.grad)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.val * other.grad + other.val * self.grad)
        return Dual(self.val * other, self.grad * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.val / other.val
            return Dual(q, (self.grad - q * other.grad) / other.val)
        return Dual(self.val / other, self.grad / other)

    def __rtruediv__(self, other):
        q = other / self.val
        return Dual(q, -q / self.val * self.grad)

    def __neg__(self):
        return Dual(-self.val, -self.grad)

    def __pos__(self):
        return self

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("Dual supports integer powers only")
        if n == 0:
            return Dual(1.0, self.grad * 0.0)
        return Dual(self.val**n, n * self.val ** (n - 1) * self.grad)

    def __abs__(self):
        return -self if self.val < 0 else self

    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)


def seed(values, offset=0, size=None):
    """Return Duals for ``values`` whose gradients are unit vectors starting at ``offset``."""
    values = [float(c) for c in values]
    size = len(values) + offset if size is None else size
    out = []
    for i, c in enumerate(values):
        g = np.zeros(size)
        g[offset + i] = 1.0
        out.append(Dual(c, g))
    return out


def value(x):
    return x.val if isinstance(x, Dual) else float(x)


def gradient(x, size):
    return x.grad if isinstance(x, Dual) else np.zeros(size)


def split(matrix, size):
    """Split a nested list of floats/Duals into (values, gradients[..., size])."""
    arr = np.asarray(matrix, dtype=object)
    vals = np.empty(arr.shape)
    grads = np.zeros(arr.shape + (size,))
    for idx in np.ndindex(arr.shape):
        vals[idx] = value(arr[idx])
        grads[idx] = gradient(arr[idx], size)
    return vals, grads


def exp(x):
    if isinstance(x, Dual):
        e = math.exp(x.val)
        return Dual(e, e * x.grad)
    return math.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(math.log(x.val), x.grad / x.val)
    return math.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        s = math.sqrt(x.val)
        return Dual(s, x.grad / (2.0 * s))
    return math.sqrt(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(math.sin(x.val), math.cos(x.val) * x.grad)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(math.cos(x.val), -math.sin(x.val) * x.grad)
    return math.cos(x)


def acos(x):
    if isinstance(x, Dual):
        return Dual(math.acos(x.val), -x.grad / math.sqrt(1.0 - x.val * x.val))
    return math.acos(x)


def atan2(y, x):
    if isinstance(y, Dual) or isinstance(x, Dual):
        yv, xv = value(y), value(x)
        n = len(y.grad) if isinstance(y, Dual) else len(x.grad)
        r2 = xv * xv + yv * yv
        return Dual(math.atan2(yv, xv), (xv * gradient(y, n) - yv * gradient(x, n)) / r2)
    return math.atan2(y, x)


FUNCTIONS = {
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "sin": sin,
    "cos": cos,
}
