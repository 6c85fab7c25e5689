"""Zero-order-hold sampled equivalent of a control-affine system.

Under a piecewise constant input ``u`` over ``[k delta, (k+1) delta)`` the state
at the next sampling instant is ``x + F(x, u)``.  Two evaluations are
provided: the order-``N`` truncation of the Lie series
``exp(delta (L_f + u L_g)) x`` and an adaptive Runge-Kutta integration of the
continuous dynamics that serves as the reference ("exact") map.

Derivatives with respect to the held input are obtained by propagating a
univariate jet in the input perturbation through the map, never by finite
differences.
"""
from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .jet import Jet, get_basis, univariate_coefficients, variables
from .vfcalc import field_jets, lie

EXACT_RTOL = 1e-12
EXACT_ATOL = 1e-14
V_EPS = 1e-7


class IntegrationError(RuntimeError):
    """Adaptive integration stopped before reaching the end of the interval."""

    def __init__(self, message, last_state):
        super().__init__(message)
        self.last_state = last_state


@dataclass(frozen=True)
class ControlAffineSystem:
    """``dx/dt = f(x) + g(x) u`` with a single input."""

    f: Callable
    g: Callable
    n: int

    def drift(self, x, u=0.0):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.f(x), dtype=float) + u * np.asarray(self.g(x), dtype=float)


def flow(field, x0, t_final, rtol=EXACT_RTOL, atol=EXACT_ATOL, t_eval=None, dense=False):
    """Integrate ``dx/dt = field(x)`` from ``x0`` over ``[0, t_final]``.

    Returns the final state, or the ``solve_ivp`` result when ``t_eval`` or
    ``dense`` is given.
    """
    x0 = np.asarray(x0, dtype=float)
    if t_final == 0.0:
        return x0.copy()
    sol = solve_ivp(
        lambda t, y: np.asarray(field(y), dtype=float),
        (0.0, t_final), x0, method="DOP853", rtol=rtol, atol=atol,
        t_eval=t_eval, dense_output=dense,
    )
    if sol.status != 0:
        raise IntegrationError(f"integration failed: {sol.message}", sol.y[:, -1])
    if t_eval is not None or dense:
        return sol
    return sol.y[:, -1]


@dataclass(frozen=True)
class SampledMap:
    """Sampled equivalent model ``x -> x + F(x, u)`` of ``system`` at period ``delta``.

    ``mode`` is ``"exact"`` (adaptive RK, relative tolerance ``rtol``) or
    ``"series"`` (Lie series truncated at ``order``).
    """

    system: ControlAffineSystem
    delta: float
    mode: str = "exact"
    order: int = 2
    rtol: float = EXACT_RTOL
    atol: float = EXACT_ATOL

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("sampling period must be positive")
        if self.mode not in ("exact", "series"):
            raise ValueError(f"unknown sampled-map mode {self.mode!r}")
        if self.mode == "series" and self.order < 1:
            raise ValueError("series order must be >= 1")

    def __call__(self, x, u):
        x = np.asarray(x, dtype=float)
        if self.mode == "series":
            return self.input_expansion(x, u, 0)[0]
        sys = self.system
        return flow(lambda y: sys.drift(y, u), x, self.delta, self.rtol, self.atol)

    def increment(self, x, u):
        return self(x, u) - np.asarray(x, dtype=float)

    def input_expansion(self, x, u, order=1):
        """Taylor coefficients in ``w`` of the successor under input ``u + w``.

        Returns an array of shape ``(order + 1, n)``; row ``k`` is the
        coefficient of ``w**k``.
        """
        x = np.asarray(x, dtype=float)
        if self.mode == "series":
            return self._series_expansion(x, u, order)
        return self._exact_expansion(x, u, order)

    def _series_expansion(self, x, u, m):
        n = len(x)
        X = variables(x, self.order + m, extra=(u,))
        state = X[:n]
        w = X[n]
        F = field_jets(self.system.f, state)
        G = field_jets(self.system.g, state)
        field = [Fi + w * Gi for Fi, Gi in zip(F, G)]
        terms = list(state)
        total = list(state)
        for i in range(1, self.order + 1):
            terms = [lie(field, t, n) for t in terms]
            c = self.delta**i / factorial(i)
            total = [a + c * t for a, t in zip(total, terms)]
        return np.array([univariate_coefficients(t, n)[: m + 1, 0] for t in total]).T

    def _exact_expansion(self, x, u, m):
        n = len(x)
        sys = self.system
        if m == 0:
            return self(x, u)[None, :]
        basis = get_basis(1, m)
        w = Jet.variable(basis, 0, 0.0)
        uj = w + u

        def rhs(t, y):
            Y = y.reshape(m + 1, n)
            X = [Jet(basis, Y[:, i:i + 1].copy(), m) for i in range(n)]
            F = field_jets(sys.f, X)
            G = field_jets(sys.g, X)
            return np.concatenate(
                [(Fi + uj * Gi).coeffs for Fi, Gi in zip(F, G)], axis=1
            ).ravel()

        y0 = np.zeros((m + 1, n))
        y0[0] = x
        sol = solve_ivp(
            rhs, (0.0, self.delta), y0.ravel(), method="DOP853",
            rtol=self.rtol, atol=self.atol,
        )
        if sol.status != 0:
            raise IntegrationError(
                f"sensitivity integration failed: {sol.message}",
                sol.y[:, -1].reshape(m + 1, n)[0],
            )
        return sol.y[:, -1].reshape(m + 1, n)


def sampled_map(m, x, u):
    """Successor state ``x + F(x, u)`` under the sampled map ``m``."""
    return m(x, u)


def control_direction(m, x, u_base, v, v_eps=V_EPS):
    """``g(x, v)`` with ``v g(x, v) = F(x, u_base + v) - F(x, u_base)``.

    For ``|v| < v_eps`` the limit ``dF/du`` at ``u_base`` is returned.
    """
    if abs(v) < v_eps:
        return m.input_expansion(x, u_base, 1)[1]
    return (m(x, u_base + v) - m(x, u_base)) / v
