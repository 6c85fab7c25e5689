"""Digital feedback passivation of a feedback-passive control-affine system.

Given a continuous design ``(S_d, gamma)`` that makes ``dx/dt = f + g u`` passive
through ``u = gamma(x) + v`` with output ``h_d = L_g S_d``, this module builds
the sampled-data counterpart:

* the input that matches, at every sampling instant, the storage decrease of
  the continuous closed loop (exact by Newton, or truncated in powers of the
  sampling period),
* the sampling-dependent passifying output and its average form,
* the damping input solving ``delta v + kappa h(x, v) = 0``.
"""
from dataclasses import dataclass
from math import factorial
from typing import Callable, Optional, Union

import numpy as np

from ._roots import ConvergenceError, safeguarded_newton
from .disgrad import DiscreteGradient, QuadratureError, discrete_gradient
from .jet import Jet, directional_coefficients, get_basis, variables
from .sdmodel import V_EPS, ControlAffineSystem, SampledMap, flow
from .vfcalc import (
    DEFAULT_JET_ORDER, bracket_jets, field_jets, gradient_batch, lie, scalar_jet,
)

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50
SINGULAR_TOL = 1e-8


class SingularTermError(ZeroDivisionError):
    """A series term divides by ``L_g S_d``, which vanishes at this state."""


@dataclass(frozen=True)
class StorageDesign:
    """Continuous-time passivation data.

    ``storage`` is ``S_d >= 0`` with ``S_d(equilibrium) = 0``; ``feedback`` is the
    continuous passifying feedback ``gamma``.  The passive output is always
    ``h_d = L_g S_d``.  ``dg_closed_form`` optionally supplies the average
    discrete gradient of ``S_d`` in closed form.
    """

    system: ControlAffineSystem
    storage: Callable
    feedback: Callable
    equilibrium: np.ndarray
    dg_closed_form: Optional[Callable] = None
    jet_order: int = DEFAULT_JET_ORDER

    def closed_loop(self, x):
        """``f_d(x) = f(x) + g(x) gamma(x)``."""
        x = np.asarray(x, dtype=float)
        return self.system.drift(x, float(self.feedback(x)))

    def output(self, x):
        """``h_d(x) = L_g S_d(x)``."""
        e = _expand(self, x, 1)
        return lie(e.G, e.S).value

    @property
    def discrete_gradient(self):
        if self.dg_closed_form is not None:
            return DiscreteGradient(self.storage, "closed_form", self.dg_closed_form)
        return DiscreteGradient(self.storage)

    def storage_value(self, x):
        return float(self.storage(np.asarray(x, dtype=float)))


class _Expansion:
    __slots__ = ("X", "F", "G", "S", "gamma", "Fd", "n")


def _expand(design, x, order):
    """Jets of ``f, g, S_d, gamma, f_d`` around ``x``."""
    x = np.asarray(x, dtype=float)
    e = _Expansion()
    e.X = variables(x, order)
    e.n = len(x)
    e.F = field_jets(design.system.f, e.X)
    e.G = field_jets(design.system.g, e.X)
    e.S = scalar_jet(design.storage, e.X)
    e.gamma = scalar_jet(design.feedback, e.X)
    e.Fd = [Fi + Gi * e.gamma for Fi, Gi in zip(e.F, e.G)]
    return e


def _w_field(e):
    """Components of ``(L_g L_f + gamma L_g^2)`` applied to the coordinates."""
    return [lie(e.G, Fi) + e.gamma * lie(e.G, Gi) for Fi, Gi in zip(e.F, e.G)]


def _grad_dot(s, vec):
    """``grad(s) . vec`` for jets ``s`` and component jets ``vec``."""
    out = s.deriv(0) * vec[0]
    for i in range(1, len(vec)):
        out = out + s.deriv(i) * vec[i]
    return out


def _exact_map(design, delta):
    return SampledMap(design.system, delta, "exact")


# --- matching equality ----------------------------------------------------

def isdm_rhs(design, delta, x, method="flow"):
    """Storage change of the continuous closed loop over one period.

    ``method="flow"`` returns ``S_d(phi_delta(x)) - S_d(x)`` with ``phi`` the
    flow of ``f_d``; ``method="quadrature"`` integrates ``L_{f_d} S_d`` along
    the same trajectory with Gauss-Legendre nodes.
    """
    x = np.asarray(x, dtype=float)
    if method == "flow":
        end = flow(design.closed_loop, x, delta)
        return design.storage_value(end) - design.storage_value(x)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    sol = flow(design.closed_loop, x, delta, dense=True)
    t, w = np.polynomial.legendre.leggauss(40)
    s = 0.5 * delta * (t + 1.0)
    pts = sol.sol(s)
    grads = gradient_batch(design.storage, pts)
    fd = np.array([design.closed_loop(pts[:, j]) for j in range(pts.shape[1])]).T
    integrand = np.sum(grads * fd, axis=0)
    return float(0.5 * delta * integrand @ w)


def isdm_residual(design, delta, x, u, smap=None, rhs=None):
    """``S_d(x + F(x, u)) - S_d(x) - isdm_rhs``; exact sampled map by default."""
    x = np.asarray(x, dtype=float)
    smap = _exact_map(design, delta) if smap is None else smap
    rhs = isdm_rhs(design, delta, x) if rhs is None else rhs
    return design.storage_value(smap(x, u)) - design.storage_value(x) - rhs


def _storage_input_coeffs(design, smap, x, u, m):
    """Taylor coefficients in ``w`` of ``S_d(x + F(x, u + w))``."""
    coeffs = smap.input_expansion(x, u, m)
    basis = get_basis(1, m)
    X = [Jet(basis, coeffs[:, i:i + 1].copy(), m) for i in range(coeffs.shape[1])]
    return scalar_jet(design.storage, X).coeffs[:, 0]


# --- series of the matching feedback ----------------------------------------

def _removable_ratio(num, den, what):
    """``num / den`` at the base point, taking the limit where both vanish.

    When ``den`` is below ``SINGULAR_TOL`` the ratio is evaluated along the
    gradient direction of ``den`` by l'Hopital on the jet coefficients.
    """
    d0 = den.value
    if abs(d0) > SINGULAR_TOL:
        return num.value / d0
    grad = np.array([den.deriv(i).value for i in range(den.basis.nvar)])
    norm = np.linalg.norm(grad)
    n0 = num.value
    if norm == 0.0 or abs(n0) > SINGULAR_TOL * max(1.0, norm):
        raise SingularTermError(f"{what}: L_g S_d vanishes (value {d0:.3e})")
    direction = grad / norm
    nc = directional_coefficients(num, direction)[:, 0]
    dc = directional_coefficients(den, direction)[:, 0]
    return nc[1] / dc[1]


def gamma_series_term(design, i, x, limit=False):
    """Correction ``gamma^i`` of the matching feedback, ``i`` in {1, 2}.

    ``gamma^1 = L_{f_d} gamma`` and
    ``gamma^2 = L_{f_d}^2 gamma + L_{ad_f g} S_d / (2 L_g S_d) * L_{f_d} gamma``.
    The second term divides by ``L_g S_d``; with ``limit=True`` a removable
    singularity is resolved instead of raising :class:`SingularTermError`.
    """
    if i == 1:
        e = _expand(design, x, max(1, design.jet_order))
        return lie(e.Fd, e.gamma).value
    if i != 2:
        raise ValueError("only the first two correction terms are available")
    e = _expand(design, x, max(3, design.jet_order))
    lfd_gamma = lie(e.Fd, e.gamma)
    first = lie(e.Fd, lfd_gamma).value
    ad = bracket_jets(e.F, e.G)
    num = lie(ad, e.S) * lfd_gamma
    den = lie(e.G, e.S) * 2.0
    if not limit:
        if abs(den.value) <= SINGULAR_TOL:
            raise SingularTermError(
                f"gamma^2: L_g S_d vanishes at x={np.asarray(x).tolist()}"
            )
        return first + num.value / den.value
    return first + _removable_ratio(num, den, "gamma^2")


def gamma_truncated(design, delta, x, p):
    """``gamma + sum_{i<=p} delta^i/(i+1)! gamma^i``."""
    u = float(design.feedback(np.asarray(x, dtype=float)))
    for i in range(1, p + 1):
        u += delta**i / factorial(i + 1) * gamma_series_term(design, i, x, limit=True)
    return u


def solve_isdm(design, delta, x, seed_order=1, smap=None, tol=None, maxiter=NEWTON_MAXITER):
    """Exact matching input ``gamma^delta(x)`` by safeguarded Newton.

    The residual tolerance is ``1e-12 * max(1, |S_d(x)|)``; the derivative in
    ``u`` comes from the jet sensitivity of the sampled map.  Raises
    :class:`ConvergenceError` when no solution is found, which is the
    practical sign that ``delta`` is beyond the solvable range.
    """
    x = np.asarray(x, dtype=float)
    smap = _exact_map(design, delta) if smap is None else smap
    s0 = design.storage_value(x)
    rhs = isdm_rhs(design, delta, x)
    tol = NEWTON_TOL * max(1.0, abs(s0)) if tol is None else tol
    seed = gamma_truncated(design, delta, x, min(seed_order, 2))

    def fun(u):
        c = _storage_input_coeffs(design, smap, x, u, 1)
        return c[0] - s0 - rhs, c[1]

    return safeguarded_newton(
        fun, seed, tol, maxiter, step0=0.1 * max(1.0, abs(seed)), name="solve_isdm"
    )


# --- sampled passifying output ----------------------------------------------

def passifying_output(design, delta, x, v, gamma=None, smap=None, v_eps=V_EPS):
    """Sampled passifying output ``h_d^delta(x, v)``.

    Discrete gradient of ``S_d`` between the successors under ``gamma`` and
    ``gamma + v``, projected on ``g^delta(x, v)``.  ``gamma`` defaults to the
    exact matching input.
    """
    x = np.asarray(x, dtype=float)
    smap = _exact_map(design, delta) if smap is None else smap
    if gamma is None:
        gamma = solve_isdm(design, delta, x, smap=smap)
    if abs(v) < v_eps:
        return float(_storage_input_coeffs(design, smap, x, gamma, 1)[1])
    a = smap(x, gamma)
    b = smap(x, gamma + v)
    return float(discrete_gradient(design.discrete_gradient, a, b) @ ((b - a) / v))


def _output_coefficient(e, form):
    """Coefficient of ``delta^2/2`` in ``h_d^delta(x, 0)`` and the jet of ``h_d``.

    ``form="base"`` is ``L_{f_d} h_d + grad(S_d) . w``.  ``form="full"``
    adds ``g^T Hess(S_d) f_d``, the term contributed by the discrete gradient
    being taken at the successor states; only this form agrees with the exact
    output to second order.
    """
    if form not in ("base", "full"):
        raise ValueError(f"unknown series form {form!r}")
    hd = lie(e.G, e.S)
    c = lie(e.Fd, hd).value + _grad_dot(e.S, _w_field(e)).value
    if form == "full":
        n = e.n
        c += sum(
            e.G[i].value * e.S.deriv(i).deriv(j).value * e.Fd[j].value
            for i in range(n) for j in range(n)
        )
    return c, hd


def passifying_output_series(design, delta, x, v, form="full"):
    """Second-order expansion of ``h_d^delta`` in the sampling period.

    ``delta h_d + delta^2/2 [(L_{f_d} + v L_g) h_d + grad(S_d) . w] (+ Hessian
    term for ``form="full"``)`` with ``w = (L_g L_f + gamma L_g^2) x``.
    """
    e = _expand(design, x, max(3, design.jet_order))
    c, hd = _output_coefficient(e, form)
    return delta * hd.value + 0.5 * delta**2 * (c + v * lie(e.G, hd).value)


def average_output(design, delta, x, v, gamma=None, smap=None, nodes=8, tol=1e-10):
    """Average of ``d S_d(x + F(x, gamma + w)) / dw`` over ``w`` in ``[0, v]``.

    By the chord identity this equals ``h_d^delta(x, v)``.  Gauss-Legendre
    nodes are doubled until two estimates agree to ``tol``.
    """
    x = np.asarray(x, dtype=float)
    smap = _exact_map(design, delta) if smap is None else smap
    if gamma is None:
        gamma = solve_isdm(design, delta, x, smap=smap)

    def integrand(w):
        return _storage_input_coeffs(design, smap, x, gamma + w, 1)[1]

    if abs(v) < V_EPS:
        return float(integrand(0.0))
    prev = None
    m = nodes
    while m <= 128:
        t, wts = np.polynomial.legendre.leggauss(m)
        ws = 0.5 * v * (t + 1.0)
        est = 0.5 * float(np.dot(wts, [integrand(w) for w in ws]))
        if prev is not None and abs(est - prev) <= tol * max(1.0, abs(est)):
            return est
        prev = est
        m *= 2
    raise QuadratureError("average output did not converge", abs(est - prev))


# --- damping ------------------------------------------------------------------

def solve_damping(design, delta, x, kappa, gamma=None, smap=None, tol=NEWTON_TOL,
                  maxiter=NEWTON_MAXITER):
    """Damping input ``v`` solving ``delta v + kappa h_d^delta(x, v) = 0``.

    ``h_d^delta(x, v)`` is evaluated through the chord identity as
    ``(S_d(x + F(gamma + v)) - S_d(x + F(gamma))) / v``; it equals the discrete
    gradient form by construction.  Newton is seeded at ``-kappa h_d(x)``.
    """
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    x = np.asarray(x, dtype=float)
    if kappa == 0:
        return 0.0
    smap = _exact_map(design, delta) if smap is None else smap
    if gamma is None:
        gamma = solve_isdm(design, delta, x, smap=smap)
    c0 = _storage_input_coeffs(design, smap, x, gamma, 2)

    def fun(v):
        if abs(v) < V_EPS:
            h = c0[1] + c0[2] * v
            dh = c0[2]
        else:
            c = _storage_input_coeffs(design, smap, x, gamma + v, 1)
            h = (c[0] - c0[0]) / v
            dh = (c[1] - h) / v
        return delta * v + kappa * h, delta + kappa * dh

    seed = -kappa * design.output(x)
    return safeguarded_newton(
        fun, seed, tol, maxiter, step0=0.1 * max(kappa, abs(seed)), name="solve_damping"
    )


def damping_series_term(design, x, kappa, form="full"):
    """First correction ``v^1`` of the damping input.

    ``v = -kappa h_d + (delta/2) v^1 + O(delta^2)``; substituting the output
    series into ``delta v + kappa h = 0`` gives
    ``v^1 = -kappa c(x) + kappa^2 h_d L_g h_d`` with ``c`` the second-order
    output coefficient of the chosen ``form`` (see
    :func:`passifying_output_series`).
    """
    if kappa == 0:
        return 0.0
    e = _expand(design, x, max(3, design.jet_order))
    c, hd = _output_coefficient(e, form)
    return -kappa * c + kappa**2 * hd.value * lie(e.G, hd).value


# --- controllers ----------------------------------------------------------------

Order = Union[int, str]


@dataclass(frozen=True)
class SampledController:
    """Sampled-data passivating controller.

    ``order`` is 0, 1, 2 (truncated series) or ``"exact"`` (Newton solutions
    of the matching and damping equalities).  ``order=0`` is emulation of the
    continuous feedback ``gamma - kappa h_d``.
    """

    design: StorageDesign
    delta: float
    order: Order = 1
    kappa: float = 0.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.order not in (0, 1, 2, "exact"):
            raise ValueError("order must be 0, 1, 2 or 'exact'")

    def __call__(self, x):
        return approx_controller(self, x)

    def gamma(self, x):
        """Matching part of the input, in this controller's mode."""
        if self.order == "exact":
            return solve_isdm(self.design, self.delta, x)
        return gamma_truncated(self.design, self.delta, x, self.order)

    def passifying_output(self, x, v):
        return passifying_output(self.design, self.delta, x, v, gamma=self.gamma(x))


def approx_controller(ctrl, x):
    """``u_[p](x) = gamma - kappa h_d + sum_{i<=p} delta^i/(i+1)! (gamma^i + v^i)``.

    Only ``v^1`` of the damping series is known in closed form; for ``p = 2``
    the damping part is truncated after its first correction.
    """
    design, delta, kappa = ctrl.design, ctrl.delta, ctrl.kappa
    x = np.asarray(x, dtype=float)
    if ctrl.order == "exact":
        gamma = solve_isdm(design, delta, x)
        return gamma + solve_damping(design, delta, x, kappa, gamma=gamma)
    u = gamma_truncated(design, delta, x, ctrl.order)
    if kappa > 0:
        u -= kappa * design.output(x)
        if ctrl.order >= 1:
            u += 0.5 * delta * damping_series_term(design, x, kappa)
    return u


def openloop_passifying_output(system, storage, delta, x, u, dg=None, smap=None,
                               v_eps=V_EPS):
    """Output ``h^delta(x, u)`` preserving passivity of the open-loop sampled model.

    ``(1/u) dg(x + F(x, 0), x + F(x, u)) . (F(x, u) - F(x, 0))``; the ``u -> 0``
    limit is the jet derivative of ``S(x + F(x, u))``.
    """
    x = np.asarray(x, dtype=float)
    smap = SampledMap(system, delta) if smap is None else smap
    dg = DiscreteGradient(storage) if dg is None else dg
    if abs(u) < v_eps:
        coeffs = smap.input_expansion(x, 0.0, 1)
        basis = get_basis(1, 1)
        X = [Jet(basis, coeffs[:, i:i + 1].copy(), 1) for i in range(len(x))]
        return float(scalar_jet(storage, X).coeffs[1, 0])
    a = smap(x, 0.0)
    b = smap(x, u)
    return float(discrete_gradient(dg, a, b) @ ((b - a) / u))


__all__ = [
    "ConvergenceError", "SingularTermError", "StorageDesign", "SampledController",
    "isdm_rhs", "isdm_residual", "gamma_series_term", "gamma_truncated", "solve_isdm",
    "passifying_output", "passifying_output_series", "average_output",
    "solve_damping", "damping_series_term", "approx_controller",
    "openloop_passifying_output",
]
