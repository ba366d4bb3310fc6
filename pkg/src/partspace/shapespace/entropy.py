"""Compactness (entropy) energy ln det(G + delta I) and its exact gradient."""
from __future__ import annotations

import numpy as np

from .gram import center_ensemble, gram_matrix


def entropy_energy(spectrum, delta):
    """sum_i ln(sigma_i + delta) over the Gram eigenvalues."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return float(np.log(spectrum.eigenvalues + delta).sum())


def entropy_energy_gradient(ensemble, delta):
    """(energy, gradient (n, m, 3)) of ln det(G + delta I).

    Chain rule through dG = dC C^T + C dC^T with C the centered deviations
    and through the mean's dependence on every shape:

        dE/dX_k = 2 [ (A C)_k - (1/n) (1^T A) C ],  A = (G + delta I)^-1.

    The gradient therefore sums to zero over shapes for each vertex.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    X = np.asarray(ensemble, dtype=np.float64)
    spectrum = gram_matrix(X)
    n = X.shape[0]
    energy = float(np.log(spectrum.eigenvalues + delta).sum())
    # inverse via the spectrum (G is tiny: n x n)
    Q = spectrum.eigenvectors
    A = (Q / (spectrum.eigenvalues + delta)) @ Q.T
    D, _ = center_ensemble(X)
    P = A @ D
    correction = (A.sum(axis=0) @ D) / n
    grad = 2.0 * (P - correction[None, :])
    return energy, grad.reshape(X.shape)


def entropy_gradient(ensemble, delta):
    """Gradient only; see entropy_energy_gradient."""
    return entropy_energy_gradient(ensemble, delta)[1]


def default_delta(ensemble, scale=1e-4):
    """Scale-aware noise floor: scale x (total variance / n) of the ensemble."""
    X = np.asarray(ensemble, dtype=np.float64)
    D, _ = center_ensemble(X)
    total = float(np.sum(D * D))
    n = X.shape[0]
    return max(scale * total / n, 1e-300)
