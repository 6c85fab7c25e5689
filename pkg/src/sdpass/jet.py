"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` holds the Taylor coefficients of a smooth function of ``nvar``
displacement variables around a base point, up to total degree ``order``.
Arithmetic and the elementary functions are exact up to that degree, so user
code written with ``+ - * / **`` and ``np.sin``/``np.cos``/... can be
differentiated to any order below the truncation without finite differences.

Coefficient blocks carry a trailing batch axis so one evaluation can expand a
function around many base points at once.
"""
from functools import lru_cache
from itertools import combinations_with_replacement
from math import factorial

import numpy as np

from . import _kernels


class JetOrderError(ValueError):
    """Requested derivative depth exceeds the truncation order of a jet."""


class Basis:
    """Monomials of total degree <= ``order`` in ``nvar`` variables, graded."""

    def __init__(self, nvar, order):
        if nvar < 1 or order < 0:
            raise ValueError("need nvar >= 1 and order >= 0")
        self.nvar = nvar
        self.order = order
        exps = []
        for d in range(order + 1):
            for combo in combinations_with_replacement(range(nvar), d):
                e = [0] * nvar
                for v in combo:
                    e[v] += 1
                exps.append(tuple(e))
        self.exps = np.array(exps, dtype=np.int64).reshape(len(exps), nvar)
        self.size = len(exps)
        self.degree = self.exps.sum(axis=1)
        self.index = {e: i for i, e in enumerate(exps)}
        # number of monomials with degree <= o
        self.nout = np.array(
            [int(np.sum(self.degree <= o)) for o in range(order + 1)], dtype=np.int64
        )

        pairs = []
        for i, ei in enumerate(exps):
            for j, ej in enumerate(exps):
                if self.degree[i] + self.degree[j] > order:
                    continue
                k = self.index[tuple(a + b for a, b in zip(ei, ej))]
                pairs.append((k, i, j))
        pairs.sort()
        tab = np.array(pairs, dtype=np.int64)
        self.ic = np.ascontiguousarray(tab[:, 0])
        self.ia = np.ascontiguousarray(tab[:, 1])
        self.ib = np.ascontiguousarray(tab[:, 2])
        self.starts = np.searchsorted(self.ic, np.arange(self.size)).astype(np.int64)
        self.npairs = np.array(
            [int(np.sum(self.degree[self.ic] <= o)) for o in range(order + 1)],
            dtype=np.int64,
        )

        self.deriv_src = np.full((nvar, self.size), -1, dtype=np.int64)
        self.deriv_fac = np.zeros((nvar, self.size))
        for k, e in enumerate(exps):
            for v in range(nvar):
                up = list(e)
                up[v] += 1
                src = self.index.get(tuple(up))
                if src is not None:
                    self.deriv_src[v, k] = src
                    self.deriv_fac[v, k] = up[v]

    def __repr__(self):
        return f"Basis(nvar={self.nvar}, order={self.order})"


@lru_cache(maxsize=None)
def get_basis(nvar, order):
    return Basis(nvar, order)


def _is_scalar(x):
    return isinstance(x, (int, float, np.integer, np.floating)) or (
        isinstance(x, np.ndarray) and x.ndim == 0
    )


class Jet:
    """Truncated Taylor expansion with coefficients of shape ``(K, B)``."""

    __slots__ = ("basis", "coeffs", "order", "bshape")

    def __init__(self, basis, coeffs, order=None, bshape=()):
        self.basis = basis
        self.coeffs = coeffs
        self.order = basis.order if order is None else order
        self.bshape = bshape

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, basis, value, bshape=()):
        nb = int(np.prod(bshape)) if bshape else 1
        c = np.zeros((basis.size, nb))
        c[0] = np.broadcast_to(np.asarray(value, dtype=float), bshape).reshape(nb)
        return cls(basis, c, basis.order, bshape)

    @classmethod
    def variable(cls, basis, index, value=0.0, bshape=()):
        jet = cls.constant(basis, value, bshape)
        if basis.order >= 1:
            unit = [0] * basis.nvar
            unit[index] = 1
            jet.coeffs[basis.index[tuple(unit)]] = 1.0
        return jet

    def _like(self, coeffs, order):
        return Jet(self.basis, coeffs, order, self.bshape)

    # inspection -------------------------------------------------------------
    @property
    def value(self):
        v = self.coeffs[0]
        return float(v[0]) if not self.bshape else v.reshape(self.bshape)

    def coefficient(self, exponent):
        """Taylor coefficient of the monomial with the given exponent tuple."""
        exponent = tuple(exponent)
        if sum(exponent) > self.order:
            raise JetOrderError(
                f"degree {sum(exponent)} requested from a jet valid to {self.order}"
            )
        c = self.coeffs[self.basis.index[exponent]]
        return float(c[0]) if not self.bshape else c.reshape(self.bshape)

    def partial(self, exponent):
        """Mixed partial derivative at the base point."""
        scale = float(np.prod([factorial(int(e)) for e in exponent]))
        return scale * self.coefficient(exponent)

    def deriv(self, var):
        """Jet of the partial derivative along variable ``var``."""
        if self.order < 1:
            raise JetOrderError("cannot differentiate a jet of order 0")
        b = self.basis
        src = b.deriv_src[var]
        out = np.zeros_like(self.coeffs)
        ok = src >= 0
        out[ok] = self.coeffs[src[ok]] * b.deriv_fac[var, ok][:, None]
        out[b.nout[self.order - 1]:] = 0.0
        return self._like(out, self.order - 1)

    def truncate(self, order):
        order = min(order, self.order)
        out = self.coeffs.copy()
        out[self.basis.nout[order]:] = 0.0
        return self._like(out, order)

    def __repr__(self):
        return f"Jet(value={self.value!r}, order={self.order}, nvar={self.basis.nvar})"

    # arithmetic -------------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.basis is not self.basis:
                raise ValueError("jets built on different bases cannot be combined")
            return other
        if _is_scalar(other):
            return None
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            c = self.coeffs.copy()
            c[0] += float(other)
            return self._like(c, self.order)
        order = min(self.order, o.order)
        c = self.coeffs + o.coeffs
        c[self.basis.nout[order]:] = 0.0
        return self._like(c, order)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coeffs, self.order)

    def __pos__(self):
        return self

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            return self._like(self.coeffs * float(other), self.order)
        order = min(self.order, o.order)
        b = self.basis
        c = _kernels.mul(
            self.coeffs, o.coeffs, b.ia, b.ib, b.ic, b.starts,
            b.npairs[order], b.nout[order],
        )
        return self._like(c, order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            return self._like(self.coeffs / float(other), self.order)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self.reciprocal() * float(other)

    def __pow__(self, exponent):
        if isinstance(exponent, Jet):
            return (exponent * self.log()).exp()
        if not _is_scalar(exponent):
            return NotImplemented
        e = float(exponent)
        if e.is_integer():
            n = int(e)
            if n < 0:
                return (self ** (-n)).reciprocal()
            result = Jet.constant(self.basis, 1.0, self.bshape)
            base = self
            while n:
                if n & 1:
                    result = result * base
                n >>= 1
                if n:
                    base = base * base
            return result
        return self._compose(_power_coeffs(self._base(), self.order, e))

    def __rpow__(self, base):
        if not _is_scalar(base):
            return NotImplemented
        return (self * np.log(float(base))).exp()

    def __abs__(self):
        a = self._base()
        if np.any(a == 0.0):
            raise ValueError("abs is not differentiable at zero")
        return self._like(self.coeffs * np.sign(a)[None, :], self.order)

    # elementary functions ----------------------------------------------------
    def _base(self):
        return self.coeffs[0]

    def _compose(self, c):
        """Return ``sum_k c[k] * (self - self.value)**k``."""
        b = self.basis
        n = self.coeffs.copy()
        n[0] = 0.0
        out = _kernels.horner(
            c, n, b.ia, b.ib, b.ic, b.starts, b.npairs[self.order], b.nout[self.order]
        )
        return self._like(out, self.order)

    def exp(self):
        c = np.exp(self._base())[None, :] / _factorials(self.order)[:, None]
        return self._compose(c)

    def sin(self):
        return self._compose(_trig_coeffs(self._base(), self.order, 0.0))

    def cos(self):
        return self._compose(_trig_coeffs(self._base(), self.order, np.pi / 2))

    def tan(self):
        return self.sin() / self.cos()

    def sinh(self):
        return self._compose(_hyp_coeffs(self._base(), self.order, odd_first=True))

    def cosh(self):
        return self._compose(_hyp_coeffs(self._base(), self.order, odd_first=False))

    def tanh(self):
        return self.sinh() / self.cosh()

    def log(self):
        a = self._base()
        if np.any(a <= 0.0):
            raise ValueError("log of a jet with non-positive value")
        k = np.arange(1, self.order + 1)[:, None]
        c = np.empty((self.order + 1, a.shape[0]))
        c[0] = np.log(a)
        c[1:] = (-1.0) ** (k + 1) / (k * a[None, :] ** k)
        return self._compose(c)

    def sqrt(self):
        a = self._base()
        if np.any(a <= 0.0):
            raise ValueError("sqrt of a jet requires a positive value")
        return self._compose(_power_coeffs(a, self.order, 0.5))

    def reciprocal(self):
        a = self._base()
        if np.any(a == 0.0):
            raise ZeroDivisionError("reciprocal of a jet with zero value")
        return self._compose(_power_coeffs(a, self.order, -1.0))

    def arctan(self):
        a = self._base()
        c = np.empty((self.order + 1, a.shape[0]))
        c[0] = np.arctan(a)
        if self.order >= 1:
            # series of 1 / (1 + (a + t)^2), integrated term by term
            ub = get_basis(1, self.order - 1)
            t = Jet.variable(ub, 0, a.reshape(self.bshape), self.bshape)
            d = (1.0 + t * t).reciprocal()
            k = np.arange(1, self.order + 1)[:, None]
            c[1:] = d.coeffs[: self.order] / k
        return self._compose(c)

    def square(self):
        return self * self

    # numpy interop -------------------------------------------------------------
    _UNARY = {
        np.sin: "sin", np.cos: "cos", np.tan: "tan", np.exp: "exp",
        np.log: "log", np.sqrt: "sqrt", np.tanh: "tanh", np.sinh: "sinh",
        np.cosh: "cosh", np.arctan: "arctan", np.negative: "__neg__",
        np.positive: "__pos__", np.square: "square", np.absolute: "__abs__",
        np.reciprocal: "reciprocal",
    }
    _BINARY = {
        np.add: "__add__", np.subtract: "__sub__", np.multiply: "__mul__",
        np.true_divide: "__truediv__", np.power: "__pow__",
    }
    _REFLECTED = {
        np.add: "__radd__", np.subtract: "__rsub__", np.multiply: "__rmul__",
        np.true_divide: "__rtruediv__", np.power: "__rpow__",
    }

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            return NotImplemented
        if any(isinstance(i, np.ndarray) and i.ndim > 0 for i in inputs):
            # elementwise over an object array; numpy calls back per element
            boxed = []
            for i in inputs:
                if isinstance(i, Jet):
                    box = np.empty((), dtype=object)
                    box[()] = i
                    boxed.append(box)
                else:
                    boxed.append(np.asarray(i, dtype=object))
            return ufunc(*boxed)
        if len(inputs) == 1 and ufunc in self._UNARY:
            return getattr(inputs[0], self._UNARY[ufunc])()
        if len(inputs) == 2 and ufunc in self._BINARY:
            a, b = inputs
            if isinstance(a, Jet):
                return getattr(a, self._BINARY[ufunc])(b)
            return getattr(b, self._REFLECTED[ufunc])(a)
        return NotImplemented


@lru_cache(maxsize=None)
def _factorials_cached(order):
    return np.array([float(factorial(k)) for k in range(order + 1)])


def _factorials(order):
    return _factorials_cached(order)


def _trig_coeffs(a, order, shift):
    k = np.arange(order + 1)[:, None]
    return np.sin(a[None, :] + shift + k * np.pi / 2) / _factorials(order)[:, None]


def _hyp_coeffs(a, order, odd_first):
    s, c = np.sinh(a), np.cosh(a)
    out = np.empty((order + 1, a.shape[0]))
    for k in range(order + 1):
        use_sinh = (k % 2 == 0) == odd_first
        out[k] = (s if use_sinh else c) / factorial(k)
    return out


def _power_coeffs(a, order, e):
    if np.any(a <= 0.0) and not (e == -1.0 and np.all(a != 0.0)):
        raise ValueError("fractional power of a jet requires a positive value")
    out = np.empty((order + 1, a.shape[0]))
    out[0] = np.power(a, e) if e != -1.0 else 1.0 / a
    for k in range(1, order + 1):
        out[k] = out[k - 1] * (e - k + 1) / k / a
    return out


def variables(point, order, extra=(), nvar=None):
    """Seed jets ``x_i + h_i`` around ``point``.

    ``point`` has shape ``(n,)`` or ``(n, *batch)``.  ``extra`` lists base
    values of additional variables (for example a perturbation of the input),
    which are appended after the state variables.  Returns the list of all
    seeded jets.
    """
    point = np.asarray(point, dtype=float)
    n = point.shape[0]
    bshape = point.shape[1:]
    total = n + len(extra) if nvar is None else nvar
    basis = get_basis(total, order)
    seeds = [Jet.variable(basis, i, point[i], bshape) for i in range(n)]
    for j, value in enumerate(extra):
        seeds.append(Jet.variable(basis, n + j, value, bshape))
    return seeds


def as_jets(values, basis, bshape=()):
    """Convert the output of a user field into a list of jets."""
    if isinstance(values, Jet) or _is_scalar(values):
        values = [values]
    out = []
    for v in values:
        if isinstance(v, Jet):
            out.append(v)
        else:
            out.append(Jet.constant(basis, float(v), bshape))
    return out


def as_jet(value, basis, bshape=()):
    if isinstance(value, Jet):
        return value
    if isinstance(value, np.ndarray) and value.shape == (1,):
        value = value[0]
    if isinstance(value, Jet):
        return value
    return Jet.constant(basis, float(value), bshape)


def univariate_coefficients(jet, var):
    """Coefficients ``[c_0, ..., c_order]`` of the restriction to variable ``var``.

    All other displacement variables are set to zero.
    """
    b = jet.basis
    out = []
    for k in range(jet.order + 1):
        e = [0] * b.nvar
        e[var] = k
        out.append(jet.coeffs[b.index[tuple(e)]])
    return np.array(out)


def directional_coefficients(jet, direction):
    """Univariate coefficients of ``t -> jet(h = t * direction)``."""
    b = jet.basis
    direction = np.asarray(direction, dtype=float)
    mono = np.prod(direction[None, :] ** b.exps, axis=1)
    out = np.zeros((jet.order + 1,) + jet.coeffs.shape[1:])
    for k in range(jet.order + 1):
        sel = b.degree == k
        out[k] = (jet.coeffs[sel] * mono[sel][:, None]).sum(axis=0)
    return out
