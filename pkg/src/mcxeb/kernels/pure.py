"""Pure-NumPy fallback for the compiled statevector kernels.

Same call signatures and in-place semantics as ``mcxeb.kernels._statevec``;
used when the extension is unavailable or ``MCXEB_PURE_PYTHON`` is set.
"""

import math

import numpy as np


def apply_1q(amps, u, qubit, n):
    v = amps.reshape(1 << qubit, 2, -1)
    v[:] = np.einsum("ab,ibk->iak", u, v)


def apply_2q(amps, u, qubit, n):
    v = amps.reshape(1 << qubit, 4, -1)
    v[:] = np.einsum("ab,ibk->iak", u, v)


def apply_layer(amps, us, start, n):
    for k in range(us.shape[0]):
        apply_2q(amps, us[k], start + 2 * k, n)


def prob_zero(amps, qubit, n):
    v = amps.reshape(1 << qubit, 2, -1)
    s = v[:, 0, :]
    return float(np.sum(s.real * s.real + s.imag * s.imag))


def project(amps, qubit, outcome, renormalize, n):
    v = amps.reshape(1 << qubit, 2, -1)
    keep = v[:, outcome, :]
    w = float(np.sum(keep.real * keep.real + keep.imag * keep.imag))
    v[:, 1 - outcome, :] = 0.0
    if renormalize and w > 0.0:
        amps *= 1.0 / math.sqrt(w)
    return w


def bapply_2q(amps, u, qubit, n):
    v = amps.reshape(1 << qubit, 4, -1, amps.shape[1])
    v[:] = np.einsum("ab,ibkc->iakc", u, v)


def bapply_layer(amps, us, start, n):
    for k in range(us.shape[0]):
        bapply_2q(amps, us[k], start + 2 * k, n)


def bprob_zero(amps, qubit, n, out):
    v = amps.reshape(1 << qubit, 2, -1, amps.shape[1])
    s = v[:, 0]
    np.sum(s.real * s.real + s.imag * s.imag, axis=(0, 1), out=out)


def bproject(amps, qubit, outcomes, renormalize, n, weights):
    v = amps.reshape(1 << qubit, 2, -1, amps.shape[1])
    mags = np.sum(v.real * v.real + v.imag * v.imag, axis=(0, 2))  # (2, B)
    sel = np.asarray(outcomes, dtype=np.intp)
    weights[:] = mags[sel, np.arange(v.shape[3])]
    cols = np.arange(v.shape[3])
    v[:, 1 - sel, :, cols] = 0.0
    if renormalize:
        scales = np.where(weights > 0.0, 1.0 / np.sqrt(np.where(weights > 0.0, weights, 1.0)), 1.0)
        amps *= scales[np.newaxis, :]


def bnorm_squared(amps, out):
    np.sum(amps.real * amps.real + amps.imag * amps.imag, axis=0, out=out)
