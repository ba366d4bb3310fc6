"""Gram matrix of a shape ensemble and its spectrum.

The n x n Gram of centered, stacked vertex positions shares the nonzero
eigenvalue spectrum of the 3m x 3m covariance up to the factor n - 1, so
all spectral quantities are computed on the small side.
"""
from __future__ import annotations

import numpy as np

EIGENVALUE_CLAMP = 1e-10


class GramSpectrum:
    """Symmetric PSD Gram matrix with its eigen-decomposition (descending)."""

    def __init__(self, gram, eigenvalues, eigenvectors):
        self.gram = gram
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors

    @property
    def n(self):
        return len(self.eigenvalues)

    def total_variance(self):
        return float(self.eigenvalues.sum())


def center_ensemble(ensemble):
    """(deviations (n, 3m), mean (m, 3)) with the per-vertex mean removed."""
    X = np.asarray(ensemble, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != 3:
        raise ValueError("ensemble must be (n_shapes, m_vertices, 3)")
    counts = {x.shape[0] for x in X}
    if len(counts) != 1:
        raise ValueError("mismatched vertex counts across shapes: %s" % sorted(counts))
    mean = X.mean(axis=0)
    D = (X - mean).reshape(X.shape[0], -1)
    return D, mean


def as_ensemble(shapes):
    """Stack a list of (m, 3) arrays, checking vertex counts first."""
    arrays = [np.asarray(s, dtype=np.float64) for s in shapes]
    counts = {a.shape for a in arrays}
    if len(counts) != 1:
        raise ValueError("mismatched vertex counts across shapes: %s" % sorted(counts))
    return np.stack(arrays)


def gram_matrix(ensemble):
    """GramSpectrum of an (n, m, 3) ensemble (n >= 2)."""
    if isinstance(ensemble, (list, tuple)):
        ensemble = as_ensemble(ensemble)
    X = np.asarray(ensemble, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError("ensemble must be (n_shapes, m_vertices, 3)")
    if X.shape[0] < 2:
        raise ValueError("need at least two shapes")
    D, _ = center_ensemble(X)
    G = D @ D.T
    G = 0.5 * (G + G.T)
    evals, evecs = np.linalg.eigh(G)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    evals = np.where(np.abs(evals) < EIGENVALUE_CLAMP, np.maximum(evals, 0.0), evals)
    if np.any(evals < -EIGENVALUE_CLAMP):
        raise ValueError("Gram matrix has a significantly negative eigenvalue")
    evals = np.maximum(evals, 0.0)
    return GramSpectrum(G, evals, evecs)


def covariance_eigenvalues(ensemble):
    """Eigenvalues of the full 3m x 3m covariance (the independent route).

    Used as an oracle for the Gram spectrum: nonzero covariance eigenvalues
    equal Gram eigenvalues / (n - 1).
    """
    X = np.asarray(ensemble, dtype=np.float64)
    D, _ = center_ensemble(X)
    n = D.shape[0]
    cov = (D.T @ D) / (n - 1)
    evals = np.linalg.eigvalsh(cov)
    return np.sort(evals)[::-1]
