"""Port-controlled Hamiltonian structure and its second-order sampled recovery."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .disgrad import DiscreteGradient, discrete_gradient
from .jet import Jet, variables
from .sdmodel import flow
from .vfcalc import gradient, hessian, scalar_jet

COND_LIMIT = 1e12


class SingularStructureError(np.linalg.LinAlgError):
    """The matrix inverted in the sampled structure is (numerically) singular."""


def _matrix(fn, x):
    return np.asarray(fn(np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class PortHamiltonianSystem:
    """``dx/dt = (J(x) - R(x)) grad H(x) + g(x) u``."""

    J: Callable
    R: Callable
    H: Callable
    g: Callable

    def check(self, x, tol=1e-12):
        """Raise ``ValueError`` if ``J`` is not skew or ``R`` not symmetric PSD at ``x``."""
        J = _matrix(self.J, x)
        R = _matrix(self.R, x)
        if np.max(np.abs(J + J.T), initial=0.0) > tol:
            raise ValueError("J is not skew-symmetric")
        if np.max(np.abs(R - R.T), initial=0.0) > tol:
            raise ValueError("R is not symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (R + R.T))) < -tol:
            raise ValueError("R is not positive semidefinite")


def pch_drift(sys, x):
    """``(J(x) - R(x)) grad H(x)``."""
    x = np.asarray(x, dtype=float)
    return (_matrix(sys.J, x) - _matrix(sys.R, x)) @ gradient(sys.H, x)


def _grad_jets(H, X):
    h = scalar_jet(H, X)
    return [h.deriv(i) for i in range(len(X))]


@dataclass(frozen=True)
class IdaClosedLoop:
    """Target dynamics ``f_d = (J_d - R_d) grad H_d`` with output ``g^T grad H_d``.

    ``drift`` accepts float states and seeded jets from
    :func:`sdpass.jet.variables`; in the jet case the gradient of ``H_d`` is
    taken on the seeds.
    """

    J_d: Callable
    R_d: Callable
    H_d: Callable
    g: Optional[Callable] = None

    def M_d(self, x):
        return _matrix(self.J_d, x) - _matrix(self.R_d, x)

    def drift(self, x):
        if len(x) and isinstance(x[0], Jet):
            grad = _grad_jets(self.H_d, list(x))
            M = np.asarray(self.J_d(x), dtype=object) - np.asarray(self.R_d(x), dtype=object)
            n = len(grad)
            out = np.empty(n, dtype=object)
            for c in range(n):
                acc = M[c, 0] * grad[0]
                for k in range(1, n):
                    acc = acc + M[c, k] * grad[k]
                out[c] = acc
            return out
        x = np.asarray(x, dtype=float)
        return self.M_d(x) @ gradient(self.H_d, x)

    def output(self, x):
        if self.g is None:
            raise ValueError("closed loop built without an input field")
        x = np.asarray(x, dtype=float)
        return float(np.asarray(self.g(x), dtype=float) @ gradient(self.H_d, x))


def ida_closed_loop(J_d, R_d, H_d, g=None):
    """Build the IDA-PBC target closed loop."""
    return IdaClosedLoop(J_d, R_d, H_d, g)


@dataclass(frozen=True)
class SampledPchStructure:
    M: np.ndarray
    J: np.ndarray
    R: np.ndarray
    F2: np.ndarray
    Q: np.ndarray


def _closed_loop_jacobian(loop, x):
    X = variables(x, 2)
    fd = loop.drift(X)
    n = len(x)
    return np.array([[fd[c].deriv(j).value for j in range(n)] for c in range(n)])


def theorem3_structure(loop, delta, x):
    """Sampled pcH matrices and the truncated increment at ``x``.

    With ``A = I + delta/2 Jac f_d(x)`` and ``M = J_d - R_d``:
    ``F2 = delta A M grad H_d``,
    ``M_delta = A M [I + delta/2 Hess H_d A M]^-1``,
    ``J_delta`` and ``-R_delta`` are the skew and symmetric parts of ``M_delta``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    eye = np.eye(n)
    M = loop.M_d(x)
    A = eye + 0.5 * delta * _closed_loop_jacobian(loop, x)
    AM = A @ M
    Q = eye + 0.5 * delta * hessian(loop.H_d, x) @ AM
    # Q = I + O(delta), so the identity sets the scale of a vanishing singular value
    sv = np.linalg.svd(Q, compute_uv=False)
    if sv[-1] * COND_LIMIT <= max(1.0, sv[0]):
        raise SingularStructureError(
            f"structure matrix is ill-conditioned at delta={delta}; reduce delta"
        )
    Md = np.linalg.solve(Q.T, AM.T).T
    J = 0.5 * (Md - Md.T)
    R = -0.5 * (Md + Md.T)
    F2 = delta * AM @ gradient(loop.H_d, x)
    return SampledPchStructure(Md, J, R, F2, Q)


def pch_residual(loop, delta, x, dg=None):
    """``|F2 - delta (J_delta - R_delta) dg(x, x + F2)|`` for the truncated increment."""
    x = np.asarray(x, dtype=float)
    st = theorem3_structure(loop, delta, x)
    dg = DiscreteGradient(loop.H_d) if dg is None else dg
    avg = discrete_gradient(dg, x, x + st.F2)
    return float(np.linalg.norm(st.F2 - delta * (st.J - st.R) @ avg))


def pch_residual_exact(loop, delta, x, dg=None):
    """Same residual against the exact closed-loop increment (diagnostic only)."""
    x = np.asarray(x, dtype=float)
    st = theorem3_structure(loop, delta, x)
    dg = DiscreteGradient(loop.H_d) if dg is None else dg
    step = flow(loop.drift, x, delta) - x
    avg = discrete_gradient(dg, x, x + step)
    return float(np.linalg.norm(step - delta * (st.J - st.R) @ avg))
