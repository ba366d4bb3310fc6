"""Orthogonal Procrustes pose fitting and Euler-angle rotation updates."""
from __future__ import annotations

import numpy as np


class RigidFitError(ValueError):
    pass


def fit_rigid(source, target):
    """Least-squares orthogonal alignment: R @ s + t ~ target, R in O(3).

    Reflections are allowed (the unconstrained orthogonal minimizer). With a
    planar spread the third factor's sign is ambiguous; it is resolved to a
    proper rotation. Rank <= 1 spreads raise.
    """
    s = np.asarray(source, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if s.shape != t.shape or s.ndim != 2 or s.shape[1] != 3:
        raise RigidFitError("point sets must both be (k, 3)")
    if len(s) < 3:
        raise RigidFitError("need at least 3 points")
    sc = s.mean(axis=0)
    tc = t.mean(axis=0)
    C = (t - tc).T @ (s - sc)
    U, sig, Vt = np.linalg.svd(C)
    if sig[1] <= 1e-12 * max(sig[0], 1e-300):
        raise RigidFitError("rank-deficient cross-covariance (spread is a line or point)")
    if sig[2] <= 1e-12 * sig[0]:
        # planar: fix the free sign to a proper rotation
        d = np.sign(np.linalg.det(U @ Vt))
        R = U @ np.diag([1.0, 1.0, d]) @ Vt
    else:
        R = U @ Vt
    trans = tc - R @ sc
    return R, trans


def euler_rotation(angles):
    """Rz(c) @ Ry(b) @ Rx(a) for angles (a, b, c)."""
    a, b, c = angles
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    Rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    Ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    Rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def euler_rotation_derivatives(angles):
    """(R, [dR/da, dR/db, dR/dc]) for angles (a, b, c)."""
    a, b, c = angles
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    Rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    Ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    Rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    dRx = np.array([[0, 0, 0], [0, -sa, -ca], [0, ca, -sa]])
    dRy = np.array([[-sb, 0, cb], [0, 0, 0], [-cb, 0, -sb]])
    dRz = np.array([[-sc, -cc, 0], [cc, -sc, 0], [0, 0, 0]])
    R = Rz @ Ry @ Rx
    return R, [Rz @ Ry @ dRx, Rz @ dRy @ Rx, dRz @ Ry @ Rx]
