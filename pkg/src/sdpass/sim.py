"""Closed-loop simulation of sampled-data and continuous passivating feedback."""
import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .passivation import SampledController, StorageDesign, isdm_rhs
from .pch import IdaClosedLoop, PortHamiltonianSystem
from .sdmodel import ControlAffineSystem, SampledMap, flow
from .vfcalc import gradient

DEFAULT_HORIZON = 20.0
DEFAULT_INTERSAMPLE = 10
CSV_HEADER = ("t", "q", "p", "u", "Hd", "S_residual")


# --- the gravity pendulum ----------------------------------------------------------

def pendulum_design(r=0.4, qstar=math.pi / 2):
    """Damped pendulum actuated by a torque, with the energy-shaping design.

    Returns ``(system, pch_system, design)``: the control-affine model,
    its port-Hamiltonian form with ``H = p^2/2 + 1 - cos q`` and the design with
    ``gamma = sin q - sin(q - qstar)`` and ``H_d = p^2/2 + 1 - cos(q - qstar)``.
    """
    if r <= 0:
        raise ValueError("damping coefficient r must be positive")

    def f(x):
        return np.array([x[1], -np.sin(x[0]) - r * x[1]])

    def g(x):
        return np.array([0.0, 1.0])

    def H(x):
        return 0.5 * x[1] ** 2 + 1.0 - np.cos(x[0])

    def gamma(x):
        return np.sin(x[0]) - np.sin(x[0] - qstar)

    def H_d(x):
        return 0.5 * x[1] ** 2 + 1.0 - np.cos(x[0] - qstar)

    def dg(nu, mu):
        # average gradient of H_d; sinc form avoids the 0/0 at mu_1 = nu_1
        half = 0.5 * (mu[0] - nu[0])
        mid = 0.5 * (mu[0] + nu[0]) - qstar
        return np.array([np.sin(mid) * np.sinc(half / np.pi), 0.5 * (mu[1] + nu[1])])

    system = ControlAffineSystem(f, g, 2)
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    R = np.array([[0.0, 0.0], [0.0, r]])
    pch_sys = PortHamiltonianSystem(lambda x: J, lambda x: R, H, g)
    design = StorageDesign(system, H_d, gamma, np.array([qstar, 0.0]), dg_closed_form=dg)
    return system, pch_sys, design


def pendulum_closed_loop(r=0.4, qstar=math.pi / 2):
    """IDA-PBC target of the pendulum: ``J_d = J``, ``R_d = R``, storage ``H_d``."""
    _, pch_sys, design = pendulum_design(r, qstar)
    return IdaClosedLoop(pch_sys.J, pch_sys.R, design.storage, pch_sys.g)


# --- traces --------------------------------------------------------------------------

@dataclass
class Trace:
    """Closed-loop run sampled at ``times``.

    ``inputs[k]`` is held over ``[times[k], times[k+1])``; ``residual[k]`` is the
    storage-matching error of that interval (NaN when not recorded).
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    storage: np.ndarray
    residual: np.ndarray
    metadata: dict = field(default_factory=dict)
    fine_times: Optional[np.ndarray] = None
    fine_states: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ExperimentConfig:
    delta: float
    T: float = DEFAULT_HORIZON
    order: object = 1
    kappa: float = 0.0
    r: float = 0.4
    qstar: float = math.pi / 2
    x0: tuple = (0.0, 0.0)
    out: Optional[str] = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.T >= self.delta:
            raise ValueError("horizon T must be at least delta")
        if not self.kappa >= 0:
            raise ValueError("kappa must be non-negative")
        if self.order not in (0, 1, 2, "exact"):
            raise ValueError("order must be 0, 1, 2 or 'exact'")

    @property
    def steps(self):
        return int(math.floor(self.T / self.delta + 1e-9))

    def grid(self):
        return self.delta * np.arange(self.steps + 1)

    def metadata(self):
        return {
            "delta": self.delta, "p": self.order, "kappa": self.kappa, "r": self.r,
            "x0": tuple(self.x0), "xstar": (self.qstar, 0.0),
        }


def simulate_sampled(cfg, ctrl, record_residual=True, intersample=0):
    """Run ``ctrl`` through a zero-order hold on the exactly integrated plant.

    ``intersample`` > 0 also records that many points per interval.
    """
    design = ctrl.design
    smap = SampledMap(design.system, ctrl.delta)
    K = cfg.steps
    n = design.system.n
    states = np.empty((K + 1, n))
    states[0] = cfg.x0
    inputs = np.empty(K)
    residual = np.full(K, np.nan)
    fine_t, fine_x = [], []
    for k in range(K):
        x = states[k]
        u = float(ctrl(x))
        inputs[k] = u
        if intersample:
            ts = np.linspace(0.0, ctrl.delta, intersample + 1)
            sol = flow(lambda y: design.system.drift(y, u), x, ctrl.delta, t_eval=ts)
            fine_t.append(k * ctrl.delta + sol.t[:-1])
            fine_x.append(sol.y[:, :-1].T)
            states[k + 1] = sol.y[:, -1]
        else:
            states[k + 1] = smap(x, u)
        if record_residual:
            residual[k] = (
                design.storage_value(states[k + 1]) - design.storage_value(x)
                - isdm_rhs(design, ctrl.delta, x)
            )
    storage = np.array([design.storage_value(s) for s in states])
    trace = Trace(cfg.grid(), states, inputs, storage, residual, cfg.metadata())
    if intersample:
        trace.fine_times = np.concatenate(fine_t + [cfg.grid()[-1:]])
        trace.fine_states = np.vstack(fine_x + [states[-1:]])
    return trace


def simulate_continuous(cfg, design):
    """Continuous closed loop ``f_d + g v`` with ``v = -kappa h_d``, on the sampling grid."""
    g = design.system.g
    kappa = cfg.kappa

    def field_(x):
        fd = design.closed_loop(x)
        if kappa == 0:
            return fd
        gx = np.asarray(g(x), dtype=float)
        return fd - kappa * float(gradient(design.storage, x) @ gx) * gx

    grid = cfg.grid()
    sol = flow(field_, np.asarray(cfg.x0, dtype=float), grid[-1], t_eval=grid)
    states = sol.y.T
    inputs = np.array([
        float(design.feedback(s)) - kappa * design.output(s) for s in states[:-1]
    ])
    storage = np.array([design.storage_value(s) for s in states])
    meta = cfg.metadata()
    meta["p"] = "continuous"
    return Trace(grid, states, inputs, storage, np.full(len(inputs), np.nan), meta)


def storage_rmse(sampled, reference, H_d=None):
    """Root mean square of the storage mismatch over the common sampling grid."""
    if sampled.times.shape != reference.times.shape or not np.allclose(
        sampled.times, reference.times, rtol=1e-12, atol=1e-12
    ):
        raise ValueError("traces are not on the same sampling grid")
    if H_d is None:
        a, b = sampled.storage, reference.storage
    else:
        a = np.array([float(H_d(s)) for s in sampled.states])
        b = np.array([float(H_d(s)) for s in reference.states])
    return float(np.sqrt(np.mean((a - b) ** 2)))


# --- CSV --------------------------------------------------------------------------------

def _fmt(v):
    return format(float(v), ".17g")


def write_trace_csv(trace, path):
    """Write ``t,q,p,u,Hd,S_residual``; the last row has no input (``nan``)."""
    n = trace.states.shape[1]
    header = CSV_HEADER if n == 2 else ("t",) + tuple(f"x{i}" for i in range(n)) + CSV_HEADER[3:]
    K = len(trace.inputs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(trace.times)):
            u = trace.inputs[k] if k < K else math.nan
            res = trace.residual[k] if k < len(trace.residual) else math.nan
            w.writerow(
                [_fmt(trace.times[k])] + [_fmt(v) for v in trace.states[k]]
                + [_fmt(u), _fmt(trace.storage[k]), _fmt(res)]
            )


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    n = len(header) - 4
    return Trace(
        times=body[:, 0],
        states=body[:, 1:1 + n],
        inputs=body[:-1, 1 + n],
        storage=body[:, 2 + n],
        residual=body[:-1, 3 + n],
    )
