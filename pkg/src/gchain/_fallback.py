"""Pure numpy versions of the compiled kernels.

Loops run over the coordinate axis only, so every dot product is summed in
the same left-to-right order as the compiled code and results match it
exactly.
"""

import numpy as np


def max_affine(gamma, points, offsets, out):
    if points.shape[1] != gamma.shape[1]:
        raise ValueError("gamma and points disagree on dimension")
    if offsets.shape[0] != points.shape[0] or out.shape[0] != gamma.shape[0]:
        raise ValueError("offsets/out have the wrong length")
    acc = np.zeros((gamma.shape[0], points.shape[0]))
    for d in range(gamma.shape[1]):
        acc += gamma[:, d, None] * points[None, :, d]
    acc -= offsets[None, :]
    if points.shape[0] == 0:
        out[:] = -np.inf
    else:
        np.max(acc, axis=1, out=out)


def quad_form(gamma, matrix, out):
    dim = gamma.shape[1]
    if matrix.shape != (dim, dim):
        raise ValueError("matrix must be square with side gamma.shape[1]")
    if out.shape[0] != gamma.shape[0]:
        raise ValueError("out has the wrong length")
    inner = np.zeros((gamma.shape[0], dim))
    for j in range(dim):
        inner += gamma[:, j, None] * matrix[None, :, j]
    total = np.zeros(gamma.shape[0])
    for i in range(dim):
        total += gamma[:, i] * inner[:, i]
    out[:] = total
