"""Random operators shared by the test suites."""

import numpy as np

from modules.spectral_core import HermitianOperator


def random_orthogonal(rng, n):
    """Haar-distributed orthogonal matrix."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def with_spectrum(rng, eigenvalues):
    """Symmetric operator Q diag(eigenvalues) Q^T in a random basis."""
    values = np.asarray(eigenvalues, dtype=float)
    q = random_orthogonal(rng, values.size)
    matrix = (q * values) @ q.T
    return HermitianOperator(0.5 * (matrix + matrix.T), sym_tol=1e-10), q


def random_projection(rng, n, rank):
    values = np.zeros(n)
    values[:rank] = 1.0
    return with_spectrum(rng, values)[0]
