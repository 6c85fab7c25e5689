"""Hot loops of the truncated-Taylor arithmetic.

Every kernel works on coefficient blocks of shape ``(K, B)``: ``K`` monomials
in graded order, ``B`` independent base points.  A product table lists the
pairs ``(ia, ib) -> ic`` sorted by ``ic``, so truncating at a total degree is
a prefix of the table.
"""
import numpy as np

from ._accel import BACKEND, maybe_njit


def mul_numpy(a, b, ia, ib, ic, starts, npairs, nout):
    prod = a[ia[:npairs]] * b[ib[:npairs]]
    out = np.zeros_like(a)
    out[:nout] = np.add.reduceat(prod, starts[:nout], axis=0)
    return out


def horner_numpy(c, n, ia, ib, ic, starts, npairs, nout):
    """Evaluate ``sum_k c[k] * n**k`` for a nilpotent block ``n``."""
    out = np.zeros_like(n)
    out[0] = c[-1]
    for k in range(c.shape[0] - 2, -1, -1):
        out = mul_numpy(out, n, ia, ib, ic, starts, npairs, nout)
        out[0] += c[k]
    return out


def _mul_loop(a, b, ia, ib, ic, starts, npairs, nout):
    nb = a.shape[1]
    out = np.zeros_like(a)
    for t in range(npairs):
        i = ia[t]
        j = ib[t]
        k = ic[t]
        for s in range(nb):
            out[k, s] += a[i, s] * b[j, s]
    return out


def _horner_loop(c, n, ia, ib, ic, starts, npairs, nout):
    nb = n.shape[1]
    out = np.zeros_like(n)
    tmp = np.zeros_like(n)
    for s in range(nb):
        out[0, s] = c[c.shape[0] - 1, s]
    for k in range(c.shape[0] - 2, -1, -1):
        tmp[:, :] = 0.0
        for t in range(npairs):
            i = ia[t]
            j = ib[t]
            m = ic[t]
            for s in range(nb):
                tmp[m, s] += out[i, s] * n[j, s]
        for r in range(n.shape[0]):
            for s in range(nb):
                out[r, s] = tmp[r, s]
        for s in range(nb):
            out[0, s] += c[k, s]
    return out


mul_numba = maybe_njit(_mul_loop)
horner_numba = maybe_njit(_horner_loop)

if BACKEND == "numba":
    mul = mul_numba
    horner = horner_numba
else:
    mul = mul_numpy
    horner = horner_numpy
