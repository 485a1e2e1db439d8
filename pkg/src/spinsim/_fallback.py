"""Pure numpy versions of the kernels in ``_kernels.pyx``.

Same signatures and sign conventions; used when the extension is not built.
"""
import numpy as np


def ising_diagonal(j, n):
    idx = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(1 << n)
    for i in range(n - 1):
        si = 1.0 - 2.0 * ((idx >> i) & 1)
        partner = np.zeros(1 << n)
        for k in range(i + 1, n):
            if j[i, k] != 0.0:
                partner += j[i, k] * (1.0 - 2.0 * ((idx >> k) & 1))
        out += si * partner
    return out


def _field_sum(v, n):
    acc = np.zeros_like(v)
    for i in range(n):
        src = v.reshape(-1, 2, 1 << i)
        dst = acc.reshape(-1, 2, 1 << i)
        dst[:, 0, :] += src[:, 1, :]
        dst[:, 1, :] -= src[:, 0, :]
    return acc


def apply_tfim(diag, b_y, v, out, n):
    np.multiply(diag, v, out=out)
    if b_y != 0.0:
        out += (1j * b_y) * _field_sum(v, n)
    return out


def apply_field(v, out, n):
    np.multiply(_field_sum(v, n), 1j, out=out)
    return out
