"""Small dense linear-algebra helpers shared by the solvers."""

import numpy as np

RCOND_MIN = 1e-14


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when a regularized Gram matrix is numerically singular."""


def hermitian(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def symmetrize(a):
    return 0.5 * (a + hermitian(a))


def _check_pd(a):
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("Gram matrix is not positive definite") from exc
    d = np.abs(np.diagonal(chol, axis1=-2, axis2=-1))
    rcond = (d.min(axis=-1) / d.max(axis=-1)) ** 2
    if not np.all(rcond >= RCOND_MIN):
        raise SingularSystemError(f"reciprocal condition {np.min(rcond):.3g} below {RCOND_MIN}")


def herm_solve(a, b):
    """Solve ``a x = b`` for Hermitian positive definite ``a`` (batched).

    The Cholesky factor certifies definiteness and gives a cheap
    reciprocal-condition estimate; systems below ``RCOND_MIN`` raise
    :class:`SingularSystemError`.
    """
    a = symmetrize(np.asarray(a))
    _check_pd(a)
    return np.linalg.solve(a, b)


def herm_inv(a):
    a = symmetrize(np.asarray(a))
    _check_pd(a)
    return symmetrize(np.linalg.inv(a))


def canonical_phase(vectors):
    """Rotate each column so its first non-negligible entry is real positive."""
    v = np.array(vectors, dtype=complex, copy=True)
    for j in range(v.shape[1]):
        col = v[:, j]
        scale = np.max(np.abs(col))
        if scale == 0:
            continue
        idx = int(np.argmax(np.abs(col) > 1e-12 * scale))
        v[:, j] = col * np.exp(-1j * np.angle(col[idx]))
    return v


def top_eigvecs(a, k):
    """Eigenvectors of the ``k`` largest eigenvalues of Hermitian ``a``.

    Ties are broken by the lower eigh index and each vector gets a
    canonical phase, so repeated calls are reproducible.
    """
    w, v = np.linalg.eigh(symmetrize(a))
    order = np.argsort(-w, kind="stable")[:k]
    return w[order], canonical_phase(v[:, order])
