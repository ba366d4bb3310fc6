"""Linear Gaussian shape space: PCA build, sampling, likelihood, projection."""
from __future__ import annotations

import numpy as np

from .entropy import default_delta
from .gram import center_ensemble, gram_matrix

VARIANCE_CUT = 0.99
ORTHONORMALITY_TOL = 1e-8


class ModelSupportError(ValueError):
    """A zero-variance mode was driven away from the mean."""


class ShapeSpaceModel:
    """Mean + orthonormal variation modes with per-mode standard deviations.

    Fields
    ------
    urshape : TriMesh providing connectivity for the modelled vertices
    mean : (m, 3) mean positions
    basis : (d, m, 3) orthonormal fields under the unweighted vertex inner
        product, sorted by descending variance
    sigmas : (d,) standard deviations, descending
    delta : spectrum regularizer used during correspondence optimization
    """

    def __init__(self, urshape, mean, basis, sigmas, delta):
        self.urshape = urshape
        self.mean = np.asarray(mean, dtype=np.float64)
        self.basis = np.asarray(basis, dtype=np.float64).reshape(-1, *self.mean.shape)
        self.sigmas = np.asarray(sigmas, dtype=np.float64)
        self.delta = float(delta)
        if len(self.sigmas) != len(self.basis):
            raise ValueError("sigma count does not match basis count")
        if np.any(np.diff(self.sigmas) > 1e-12):
            raise ValueError("sigmas must be sorted descending")
        if len(self.basis):
            B = self.basis.reshape(len(self.basis), -1)
            G = B @ B.T
            if np.abs(G - np.eye(len(B))).max() > ORTHONORMALITY_TOL:
                raise ValueError("basis fields are not orthonormal")

    @property
    def n_modes(self):
        return len(self.sigmas)

    @property
    def n_vertices(self):
        return len(self.mean)

    def sample(self, lam):
        """Positions mean + sum_k lambda_k basis_k; lam has length n_modes."""
        lam = np.asarray(lam, dtype=np.float64)
        if lam.shape != (self.n_modes,):
            raise ValueError("expected %d shape parameters, got %s" % (self.n_modes, lam.shape))
        zero_sigma = self.sigmas <= 0
        if np.any(zero_sigma & (lam != 0)):
            raise ModelSupportError("nonzero parameter on a zero-variance mode")
        if self.n_modes == 0:
            return self.mean.copy()
        return self.mean + np.tensordot(lam, self.basis, axes=1)

    def neg_log_likelihood(self, lam):
        """0.5 * sum lambda_i^2 / sigma_i^2 (constant fixed to zero)."""
        lam = np.asarray(lam, dtype=np.float64)
        if lam.shape != (self.n_modes,):
            raise ValueError("expected %d shape parameters" % self.n_modes)
        zero_sigma = self.sigmas <= 0
        if np.any(zero_sigma & (lam != 0)):
            raise ModelSupportError("nonzero parameter on a zero-variance mode")
        active = ~zero_sigma
        return float(0.5 * np.sum((lam[active] / self.sigmas[active]) ** 2))

    def project(self, positions):
        """Shape parameters of arbitrary positions (dot products with basis)."""
        X = np.asarray(positions, dtype=np.float64)
        if X.shape != self.mean.shape:
            raise ValueError("positions shape mismatch")
        dev = (X - self.mean).ravel()
        if self.n_modes == 0:
            return np.zeros(0)
        return self.basis.reshape(self.n_modes, -1) @ dev

    def to_arrays(self):
        return {
            "mean": self.mean,
            "basis": self.basis.reshape(self.n_modes, -1),
            "sigmas": self.sigmas,
            "delta": np.array([self.delta]),
        }


def build_pca_model(ensemble, urshape, delta=None, variance_cut=VARIANCE_CUT):
    """PCA shape space from an (n, m, 3) ensemble with shared connectivity.

    The mode count is the smallest capturing `variance_cut` of the total
    variance. Sign convention: each mode's largest-magnitude component is
    positive (keeps builds deterministic).
    """
    X = np.asarray(ensemble, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] < 2:
        raise ValueError("ensemble must be (n >= 2, m, 3)")
    if delta is None:
        delta = default_delta(X)
    spectrum = gram_matrix(X)
    D, mean = center_ensemble(X)
    n = X.shape[0]
    evals = spectrum.eigenvalues
    total = evals.sum()
    if total <= 0:
        return ShapeSpaceModel(urshape, mean, np.zeros((0,) + mean.shape), np.zeros(0), delta)
    cum = np.cumsum(evals) / total
    d = int(np.searchsorted(cum, variance_cut - 1e-12) + 1)
    d = min(d, int(np.sum(evals > 1e-12 * total)))
    basis = np.empty((d,) + mean.shape)
    sigmas = np.empty(d)
    for k in range(d):
        v = D.T @ spectrum.eigenvectors[:, k]
        norm = np.linalg.norm(v)
        v = v / norm
        pivot = np.argmax(np.abs(v))
        if v[pivot] < 0:
            v = -v
        basis[k] = v.reshape(mean.shape)
        sigmas[k] = np.sqrt(evals[k] / (n - 1))
    return ShapeSpaceModel(urshape, mean, basis, sigmas, delta)
