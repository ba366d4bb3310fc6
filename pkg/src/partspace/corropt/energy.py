"""Total correspondence energy: compactness + Laplacian + optional terms.

The compactness term sees pose-normalized positions (the per-shape rigid
alignment factored out, with a small Euler-angle rotation update as part of
the optimization variables). The Laplacian regularizer and all extra terms
(boundary snapping, soft constraints) act on world-frame positions, which
for the rigid-invariant Laplacian is equivalent and cheaper.
"""
from __future__ import annotations

import numpy as np

from ..mesh.laplacian import GraphLaplacian
from ..shapespace.entropy import default_delta, entropy_energy_gradient
from .rigid import euler_rotation_derivatives


def compute_mu_l(urshape, positions, relative_weight):
    """relative weight x (#triangles / mean surface area squared)."""
    tri = urshape.triangles
    areas = []
    for X in positions:
        a, b, c = X[tri[:, 0]], X[tri[:, 1]], X[tri[:, 2]]
        areas.append(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())
    mean_area = float(np.mean(areas))
    return relative_weight * urshape.n_triangles / mean_area**2


class SoftConstraintTerm:
    """w * sum ||x_i(u_j) - target||^2 over selected (shape, vertex) pairs."""

    def __init__(self, shape_indices, vertex_indices, targets, weight):
        self.shape_indices = np.asarray(shape_indices, dtype=np.int64)
        self.vertex_indices = np.asarray(vertex_indices, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.float64)
        self.weight = float(weight)
        if not (len(self.shape_indices) == len(self.vertex_indices) == len(self.targets)):
            raise ValueError("constraint arrays must have equal length")

    def evaluate(self, positions):
        x = positions[self.shape_indices, self.vertex_indices]
        diff = x - self.targets
        energy = self.weight * float(np.sum(diff * diff))
        grad = np.zeros_like(positions)
        np.add.at(grad, (self.shape_indices, self.vertex_indices), 2.0 * self.weight * diff)
        return energy, grad


class EnsembleEnergy:
    """E = E_H(pose-normalized) + mu_L * E_L + sum of extra terms.

    Variables are world positions (n, m, 3) and per-shape Euler angles
    (n, 3) applied on top of the stored initial poses.
    """

    def __init__(self, correspondences, config, extra_terms=()):
        self.cset = correspondences
        self.config = config
        self.extra_terms = list(extra_terms)
        self.laplacian = GraphLaplacian(correspondences.urshape)
        self.mu_l = compute_mu_l(
            correspondences.urshape, correspondences.positions, config.mu_l_relative
        )
        if config.delta is not None:
            self.delta = config.delta
        else:
            self.delta = default_delta(self.cset.model_frame(), config.delta_scale)
        self.base_rotations = correspondences.rotations.copy()
        self.translations = correspondences.translations.copy()

    def total_rotations(self, angles):
        """World rotations including the Euler update: R0_i @ R(theta_i)."""
        return np.stack([
            self.base_rotations[i] @ euler_rotation_derivatives(angles[i])[0]
            for i in range(len(angles))
        ])

    def evaluate(self, positions, angles, offsets=None):
        """(E, grad wrt positions (world), grad wrt angles, grad wrt
        translation offsets, energy parts).

        The pose update has 6 dofs per shape: Euler angles on top of the
        initial rotation and a translation offset on top of the initial fit.
        """
        n = positions.shape[0]
        if offsets is None:
            offsets = np.zeros((n, 3))
        Y = np.empty_like(positions)
        rots = []
        drots = []
        for i in range(n):
            R_upd, dR = euler_rotation_derivatives(angles[i])
            R_tot = self.base_rotations[i] @ R_upd
            rots.append(R_tot)
            drots.append([self.base_rotations[i] @ d for d in dR])
            Y[i] = (positions[i] - self.translations[i] - offsets[i]) @ R_tot

        e_h, gY = entropy_energy_gradient(Y, self.delta)
        g_pos = np.empty_like(positions)
        g_ang = np.zeros((n, 3))
        g_off = np.zeros((n, 3))
        for i in range(n):
            g_pos[i] = gY[i] @ rots[i].T
            g_off[i] = -gY[i].sum(axis=0) @ rots[i].T
            rel = positions[i] - self.translations[i] - offsets[i]
            for a in range(3):
                g_ang[i, a] = float(np.sum(gY[i] * (rel @ drots[i][a])))

        e_l, g_l = self.laplacian.energy_gradient(positions)
        energy = e_h + self.mu_l * e_l
        g_pos += self.mu_l * g_l

        parts = {"E_H": e_h, "E_L": e_l}
        for term in self.extra_terms:
            e_t, g_t = term.evaluate(positions)
            energy += e_t
            g_pos += g_t
            parts[type(term).__name__] = parts.get(type(term).__name__, 0.0) + e_t
        return energy, g_pos, g_ang, g_off, parts
