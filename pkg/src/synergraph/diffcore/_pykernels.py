"""Pure numpy fallbacks for the compiled segment kernels.

``np.add.at`` / ``np.maximum.at`` are unbuffered and visit indices in order,
which matches the sequential loops of the compiled module bit for bit.
"""
import numpy as np


def _check(index, n):
    if index.size and (index.min() < 0 or index.max() >= n):
        raise IndexError(f"segment index out of range for {n} segments")


def scatter_add_rows(src, index, n):
    _check(index, n)
    out = np.zeros((n, src.shape[1]), dtype=np.float64)
    np.add.at(out, index, src)
    return out


def segment_max(src, index, n):
    _check(index, n)
    out = np.full(n, -np.inf, dtype=np.float64)
    np.maximum.at(out, index, src)
    return out


def segment_softmax(scores, index, n):
    mx = segment_max(scores, index, n)
    ex = np.exp(scores - mx[index])
    denom = np.zeros(n, dtype=np.float64)
    np.add.at(denom, index, ex)
    return ex / denom[index]
