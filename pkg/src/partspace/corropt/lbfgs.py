"""Projected limited-memory quasi-Newton over on-surface positions.

Standard two-loop recursion with Armijo backtracking; every trial point is
retracted onto the constraint manifolds (tangent-projected step followed by
Newton projection), turning the smooth constraint into a sequence of local
linear subspaces. Gradients enter the recursion tangent-projected so that
manifold-stationary points register as converged. Per-shape rigid updates
(Euler angles and translation offsets on top of the initial fit) are part
of the same descent.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correspondence import CorrespondenceSet
from .energy import EnsembleEnergy

ARMIJO_C1 = 1e-4
CURVATURE_SKIP = 1e-10
ENERGY_DECREASE_FLOOR = 1e-14  # relative stagnation threshold
STAGNANT_LIMIT = 3


class OptimizationError(RuntimeError):
    pass


@dataclass
class TraceRecord:
    iteration: int
    energy: float
    e_h: float
    e_l: float
    gradient_norm: float
    step: float

    def format_line(self):
        return "iter=%d E=%.12g E_H=%.12g E_L=%.12g grad=%.6g step=%.3g" % (
            self.iteration, self.energy, self.e_h, self.e_l,
            self.gradient_norm, self.step,
        )


@dataclass
class OptimizeResult:
    correspondences: CorrespondenceSet
    energy: float
    initial_energy: float
    converged: bool
    iterations: int
    trace: list = field(default_factory=list)
    parts: dict = field(default_factory=dict)


def _tangent_project(grids, positions, g_pos):
    """Remove per-point normal components of a position-space vector."""
    out = np.empty_like(g_pos)
    for i, grid in enumerate(grids):
        _, normals, ok = grid.evaluate_masked(positions[i])
        if not ok.all():
            raise OptimizationError("iterate left constraint domain on shape %d" % i)
        n2 = np.einsum("ij,ij->i", normals, normals)
        n2 = np.where(n2 > 0, n2, 1.0)
        coef = np.einsum("ij,ij->i", g_pos[i], normals) / n2
        out[i] = g_pos[i] - coef[:, None] * normals
    return out


def _retract(grids, positions, d_pos):
    """Tangent-step every point; returns (new_positions, ok)."""
    out = np.empty_like(positions)
    for i, grid in enumerate(grids):
        moved, ok = grid.tangent_step_batch(positions[i], d_pos[i])
        if not ok.all():
            return positions, False
        out[i] = moved
    return out, True


class _State:
    """Variable blocks: world positions, Euler angles, translation offsets."""

    def __init__(self, pos, ang, off):
        self.pos = pos
        self.ang = ang
        self.off = off

    def flat_grad(self, g_pos_t, g_ang, g_off):
        return np.concatenate([g_pos_t.ravel(), g_ang.ravel(), g_off.ravel()])

    def split(self, vec):
        n_pos = self.pos.size
        n_ang = self.ang.size
        p_pos = vec[:n_pos].reshape(self.pos.shape)
        p_ang = vec[n_pos:n_pos + n_ang].reshape(self.ang.shape)
        p_off = vec[n_pos + n_ang:].reshape(self.off.shape)
        return p_pos, p_ang, p_off


def optimize_ensemble(init, config, extra_terms=(), verify_on_surface=True,
                      log_lines=None):
    """Minimize the ensemble energy over positions and rigid updates.

    Parameters
    ----------
    init : CorrespondenceSet (positions already on-surface)
    config : OptimizerConfig
    extra_terms : additional energy terms with .evaluate(positions)
    verify_on_surface : assert the on-surface invariant at every accepted
        iterate (the acceptance suite runs with this enabled)
    log_lines : optional list collecting line-oriented log records

    Returns
    -------
    OptimizeResult; the returned energy never exceeds the initial one.
    """
    cset = init.copy()
    energy_model = EnsembleEnergy(cset, config, extra_terms)
    grids = cset.grids
    state = _State(
        cset.positions.copy(),
        np.zeros((cset.n_shapes, 3)),
        np.zeros((cset.n_shapes, 3)),
    )

    def eval_state(pos, ang, off):
        e, g_pos, g_ang, g_off, parts = energy_model.evaluate(pos, ang, off)
        if not config.optimize_poses:
            g_ang = np.zeros_like(g_ang)
            g_off = np.zeros_like(g_off)
        g_pos_t = _tangent_project(grids, pos, g_pos)
        return e, g_pos_t, g_ang, g_off, parts

    e, g_pos_t, g_ang, g_off, parts = eval_state(state.pos, state.ang, state.off)
    initial_energy = e
    g = state.flat_grad(g_pos_t, g_ang, g_off)
    g0_norm = float(np.linalg.norm(g))
    tol = config.gradient_tolerance * max(g0_norm, 1e-300)
    max_disp = config.max_step_cells * min(grid.spacing for grid in grids)

    S, Ys, rho = [], [], []
    trace = []
    converged = g0_norm <= tol
    stagnant = 0
    it = 0

    def record(step):
        rec = TraceRecord(it, e, parts.get("E_H", 0.0), parts.get("E_L", 0.0),
                          float(np.linalg.norm(g)), step)
        trace.append(rec)
        if log_lines is not None:
            log_lines.append(rec.format_line())

    record(0.0)
    while it < config.max_iterations and not converged:
        it += 1
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(S), reversed(Ys), reversed(rho)):
            a = r * np.dot(s, q)
            alphas.append(a)
            q -= a * y
        if S:
            gamma = np.dot(S[-1], Ys[-1]) / np.dot(Ys[-1], Ys[-1])
            q *= gamma
        for (s, y, r), a in zip(zip(S, Ys, rho), reversed(alphas)):
            q += s * (a - r * np.dot(y, q))
        p = -q
        if np.dot(p, g) > -1e-12 * np.linalg.norm(p) * np.linalg.norm(g):
            S.clear(); Ys.clear(); rho.clear()
            p = -g
        p_pos, p_ang, p_off = state.split(p)

        # cap the first trial so no point moves further than a few cells
        disp = np.linalg.norm(p_pos, axis=2).max()
        alpha = min(1.0, max_disp / disp) if disp > 0 else 1.0
        slope = float(np.dot(g, p))

        accepted = False
        retraction_failed = True
        for _ in range(config.max_line_search):
            new_pos, ok = _retract(grids, state.pos, alpha * p_pos)
            if ok:
                retraction_failed = False
                new_ang = state.ang + alpha * p_ang
                new_off = state.off + alpha * p_off
                e_new, gp_new, ga_new, go_new, parts_new = eval_state(
                    new_pos, new_ang, new_off
                )
                if e_new <= e + ARMIJO_C1 * alpha * slope:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            if retraction_failed:
                raise OptimizationError(
                    "surface projection kept failing during line search "
                    "(iteration %d, energy %.6g)" % (it, e)
                )
            converged = True  # no further progress possible along descent
            it -= 1
            break

        g_new = state.flat_grad(gp_new, ga_new, go_new)
        s_vec = np.concatenate([
            (new_pos - state.pos).ravel(),
            (new_ang - state.ang).ravel(),
            (new_off - state.off).ravel(),
        ])
        y_vec = g_new - g
        sy = np.dot(s_vec, y_vec)
        if sy > CURVATURE_SKIP * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            S.append(s_vec)
            Ys.append(y_vec)
            rho.append(1.0 / sy)
            if len(S) > config.memory_depth:
                S.pop(0); Ys.pop(0); rho.pop(0)

        decrease = e - e_new
        state.pos, state.ang, state.off = new_pos, new_ang, new_off
        e, g, parts = e_new, g_new, parts_new
        if decrease <= ENERGY_DECREASE_FLOOR * (abs(e) + 1.0):
            stagnant += 1
            if stagnant >= STAGNANT_LIMIT:
                converged = True
        else:
            stagnant = 0
        if verify_on_surface:
            tmp = CorrespondenceSet(cset.urshape, state.pos, grids,
                                    cset.rotations, cset.translations)
            tmp.assert_on_surface(scale=1.0)
        record(alpha)
        if config.checkpoint_every and it % config.checkpoint_every == 0:
            _write_checkpoint(config, state, energy_model, it)
        if float(np.linalg.norm(g)) <= tol:
            converged = True

    # bake the rigid updates into the stored poses
    final_rots = energy_model.total_rotations(state.ang)
    final_trans = energy_model.translations + state.off
    result_set = CorrespondenceSet(
        cset.urshape, state.pos, grids, final_rots, final_trans
    )
    return OptimizeResult(
        correspondences=result_set,
        energy=e,
        initial_energy=initial_energy,
        converged=converged,
        iterations=it,
        trace=trace,
        parts=parts,
    )


def _write_checkpoint(config, state, energy_model, iteration):
    if not config.checkpoint_dir:
        return
    import os

    os.makedirs(config.checkpoint_dir, exist_ok=True)
    path = os.path.join(config.checkpoint_dir, "iter%06d.npz" % iteration)
    np.savez(path, positions=state.pos, angles=state.ang, offsets=state.off,
             rotations=energy_model.base_rotations,
             translations=energy_model.translations)
