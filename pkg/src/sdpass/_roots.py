"""Scalar root finding: Newton with bisection safeguard."""
import math


class ConvergenceError(RuntimeError):
    """Root finder gave up; carries the best point and residual found."""

    def __init__(self, message, best_x, best_residual):
        super().__init__(f"{message} (best residual {best_residual:.3e} at {best_x!r})")
        self.best_x = best_x
        self.best_residual = best_residual


def safeguarded_newton(func, x0, tol, maxiter=50, step0=None, name="root"):
    """Find ``x`` with ``|f(x)| <= tol``.

    ``func(x)`` returns ``(f(x), f'(x))``.  Newton steps are taken from the
    seed ``x0`` and halved while they fail to reduce ``|f|``.  As soon as two
    evaluated points straddle a sign change, iterations stay inside that
    bracket and fall back to bisection whenever the Newton step leaves it.
    If Newton stalls without a bracket, a bracket is searched on
    ``x0 +- step0 * 2**j``.  Every function evaluation counts towards
    ``maxiter``.
    """
    evals = 0

    def call(x):
        nonlocal evals
        evals += 1
        fx, dx = func(x)
        return float(fx), float(dx)

    x = float(x0)
    fx, dx = call(x)
    best = (abs(fx), x)
    lo = hi = None  # (x, f) pairs with opposite signs
    points = [(x, fx)]

    def note(xn, fn):
        nonlocal lo, hi, best
        if abs(fn) < best[0]:
            best = (abs(fn), xn)
        if lo is None:
            for xp, fp in points:
                if fp * fn < 0.0:
                    lo, hi = sorted([(xp, fp), (xn, fn)])
                    break
        elif fn * lo[1] < 0.0:
            hi = (xn, fn)
        else:
            lo = (xn, fn)
        if lo is not None and lo[0] > hi[0]:
            lo, hi = hi, lo
        points.append((xn, fn))

    if step0 is None:
        step0 = 1e-2 * max(1.0, abs(x))

    while evals < maxiter:
        if abs(fx) <= tol:
            return x
        if lo is not None:
            a, b = lo[0], hi[0]
            xn = x - fx / dx if dx != 0.0 and math.isfinite(dx) else None
            if xn is None or not (min(a, b) < xn < max(a, b)):
                xn = 0.5 * (a + b)
            if abs(b - a) <= 4e-16 * max(1.0, abs(a), abs(b)):
                break
            fn, dn = call(xn)
            note(xn, fn)
            x, fx, dx = xn, fn, dn
            continue
        # no bracket yet: damped Newton
        if dx != 0.0 and math.isfinite(dx):
            step = -fx / dx
            accepted = False
            for _ in range(8):
                if evals >= maxiter:
                    break
                xn = x + step
                fn, dn = call(xn)
                note(xn, fn)
                if abs(fn) < abs(fx) or lo is not None:
                    x, fx, dx = xn, fn, dn
                    accepted = True
                    break
                step *= 0.5
            if accepted:
                continue
        # stalled: expand a bracket around the seed
        j = 0
        while lo is None and evals + 2 <= maxiter:
            delta = step0 * 2.0**j
            for xn in (x0 + delta, x0 - delta):
                fn, dn = call(xn)
                note(xn, fn)
            j += 1
        if lo is None:
            break
        x, fx = (lo if abs(lo[1]) < abs(hi[1]) else hi)
        _, dx = call(x)

    if best[0] <= tol:
        return best[1]
    raise ConvergenceError(f"{name}: no convergence after {evals} evaluations", best[1], best[0])
