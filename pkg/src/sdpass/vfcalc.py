"""Lie derivatives, Lie brackets and truncated exponential Lie series.

Fields are plain callables.  A scalar field maps a state sequence ``x`` to a
number, a vector field maps it to a sequence of the same length.  They must be
written with ordinary arithmetic and numpy ufuncs so that they also accept
:class:`~sdpass.jet.Jet` arguments; every derivative is then taken on the
truncated Taylor expansion and is exact up to the jet order.
"""
from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np

from .jet import Jet, JetOrderError, as_jet, as_jets, variables

DEFAULT_JET_ORDER = 4


@dataclass(frozen=True)
class ScalarField:
    """A smooth function R^n -> R."""

    func: Callable
    n: int

    def __call__(self, x):
        return self.func(x)


@dataclass(frozen=True)
class VectorField:
    """A smooth map R^n -> R^n."""

    func: Callable
    n: int

    def __call__(self, x):
        return self.func(x)


def _check_depth(k, order):
    if k > order:
        raise JetOrderError(
            f"{k} derivatives requested but the jet order is {order}; "
            "raise the order argument"
        )


def _point(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a single point (1-d array)")
    return x


def field_jets(f, X):
    """Evaluate vector field ``f`` on seeded jets ``X``; returns a list of jets."""
    first = X[0]
    arg = np.empty(len(X), dtype=object)
    arg[:] = X
    out = as_jets(f(arg), first.basis, first.bshape)
    if len(out) != len(X):
        raise ValueError(
            f"vector field returned {len(out)} components for a state of dimension {len(X)}"
        )
    return out


def scalar_jet(S, X):
    arg = np.empty(len(X), dtype=object)
    arg[:] = X
    return as_jet(S(arg), X[0].basis, X[0].bshape)


def lie(F, s, nstate=None):
    """Lie derivative of jet ``s`` along the field with component jets ``F``.

    Only the first ``nstate`` displacement variables are differentiated; any
    further variables are parameters.
    """
    nstate = len(F) if nstate is None else nstate
    out = F[0] * s.deriv(0)
    for i in range(1, nstate):
        out = out + F[i] * s.deriv(i)
    return out


def jacobian_from_jets(F, nstate=None):
    nstate = len(F) if nstate is None else nstate
    return np.array([[Fi.deriv(j).value for j in range(nstate)] for Fi in F])


def lie_derivative(f, S, x, k=1, order=None):
    """Return ``(L_f)^k S`` at ``x``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = DEFAULT_JET_ORDER if order is None else order
    _check_depth(k, order)
    X = variables(_point(x), order)
    F = field_jets(f, X)
    s = scalar_jet(S, X)
    for _ in range(k):
        s = lie(F, s)
    return s.value


def lie_bracket(f, g, x, order=None):
    """Return ``ad_f g (x) = J_g(x) f(x) - J_f(x) g(x)``."""
    order = DEFAULT_JET_ORDER if order is None else order
    _check_depth(1, order)
    X = variables(_point(x), order)
    F = field_jets(f, X)
    G = field_jets(g, X)
    return np.array([(lie(F, G[c]) - lie(G, F[c])).value for c in range(len(X))])


def bracket_jets(F, G, nstate=None):
    """Component jets of ``ad_F G`` (valid one order lower)."""
    return [lie(F, G[c], nstate) - lie(G, F[c], nstate) for c in range(len(F))]


def exp_lie_series(f, delta, x, N, order=None):
    """Order-``N`` truncation of ``exp(delta L_f) x``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if delta <= 0:
        raise ValueError("delta must be positive")
    order = DEFAULT_JET_ORDER if order is None else order
    _check_depth(N, order)
    x = _point(x)
    X = variables(x, order)
    F = field_jets(f, X)
    out = x.copy()
    terms = list(X)
    for i in range(1, N + 1):
        terms = [lie(F, t) for t in terms]
        out += delta**i / factorial(i) * np.array([t.value for t in terms])
    return out


def gradient(S, x):
    X = variables(_point(x), 1)
    s = scalar_jet(S, X)
    return np.array([s.deriv(i).value for i in range(len(X))])


def hessian(S, x):
    X = variables(_point(x), 2)
    s = scalar_jet(S, X)
    n = len(X)
    grads = [s.deriv(i) for i in range(n)]
    return np.array([[grads[i].deriv(j).value for j in range(n)] for i in range(n)])


def jacobian(f, x):
    X = variables(_point(x), 1)
    return jacobian_from_jets(field_jets(f, X))


def gradient_batch(S, points):
    """Gradients of ``S`` at each column of ``points`` (shape ``(n, m)``)."""
    points = np.asarray(points, dtype=float)
    X = variables(points, 1)
    s = scalar_jet(S, X)
    return np.array([s.deriv(i).value for i in range(len(X))])


__all__ = [
    "DEFAULT_JET_ORDER", "Jet", "JetOrderError", "ScalarField", "VectorField",
    "lie_derivative", "lie_bracket", "exp_lie_series", "gradient", "hessian",
    "jacobian", "gradient_batch", "lie", "field_jets", "scalar_jet", "bracket_jets",
]
