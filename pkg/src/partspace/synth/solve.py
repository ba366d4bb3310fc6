"""Local-global solver for the part-graph reconstruction energy.

With rotations fixed, positions and shape parameters solve one sparse
linear least-squares system over edge-difference residuals; each block's
rotation is then updated by weighted Procrustes against its current
reconstruction. The alternation is monotone in the total energy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..mesh.trimesh import TriMesh
from .problem import COUPLE_WEIGHT, HANDLE_WEIGHT_FACTOR, SynthesisError, ZERO_SIGMA_PIN

MAX_ALTERNATIONS = 200
ENERGY_REL_TOL = 1e-8
GAUGE_WEIGHT = 1.0


@dataclass
class SynthesisResult:
    mesh: TriMesh
    positions: np.ndarray
    lambdas: dict            # node name (or 'pair:<site>#k') -> parameter vector
    rotations: dict
    energy: float
    iterations: int
    energies: list = field(default_factory=list)


def _model_edge_field(block, lam):
    """Edge differences of mean + sum lambda_k basis_k for a block."""
    model = block.model
    ev = model.mean[block.edges[:, 0]] - model.mean[block.edges[:, 1]]
    for k in range(block.n_modes):
        bk = model.basis[k]
        ev = ev + lam[k] * (bk[block.edges[:, 0]] - bk[block.edges[:, 1]])
    return ev


def _block_energy(block, V, lam, R):
    cur = V[block.global_ids[block.edges[:, 0]]] - V[block.global_ids[block.edges[:, 1]]]
    target = _model_edge_field(block, lam) @ R.T
    r = cur - target
    e = float(np.sum(block.edge_weights[:, None] * r * r))
    prior = float(np.sum(lam**2 / np.where(block.sigmas > 0,
                                           2.0 * block.sigmas**2, 1.0 / ZERO_SIGMA_PIN)))
    return e + prior


def _procrustes_update(block, V, lam):
    """Best rotation (det +1) mapping model edges onto current edges."""
    cur = V[block.global_ids[block.edges[:, 0]]] - V[block.global_ids[block.edges[:, 1]]]
    model_e = _model_edge_field(block, lam)
    w = block.edge_weights
    C = (cur * w[:, None]).T @ model_e
    U, _, Vt = np.linalg.svd(C)
    d = np.sign(np.linalg.det(U @ Vt))
    return U @ np.diag([1.0, 1.0, d]) @ Vt


def _constraint_rows(problem, rows, cols, vals, rhs, row0, n_pos_unknowns):
    """Append constraint rows; returns (next row index, has_position_anchor)."""
    has_anchor = False
    r = row0
    for c in problem.constraints:
        if c.kind == "pointHandle":
            w = c.weight if c.weight is not None else HANDLE_WEIGHT_FACTOR * problem.mean_cot
            sw = np.sqrt(w)
            gid = problem.node_vertex_to_global[(c.node, int(c.vertex))]
            for k in range(3):
                rows.append(r)
                cols.append(3 * gid + k)
                vals.append(sw)
                rhs.append(sw * float(c.target[k]))
                r += 1
            has_anchor = True
        elif c.kind == "parameterPin":
            w = c.weight if c.weight is not None else COUPLE_WEIGHT
            sw = np.sqrt(w)
            b = problem.block_of(c.node)
            if not (0 <= c.index < b.n_modes):
                raise SynthesisError("parameter index %d out of range for %s"
                                     % (c.index, c.node))
            rows.append(r)
            cols.append(n_pos_unknowns + b.lam_offset + c.index)
            vals.append(sw)
            rhs.append(sw * float(c.value))
            r += 1
        elif c.kind == "parameterCouple":
            w = c.weight if c.weight is not None else COUPLE_WEIGHT
            sw = np.sqrt(w)
            ba = problem.block_of(c.node)
            bb = problem.block_of(c.node_b)
            rows.append(r)
            cols.append(n_pos_unknowns + ba.lam_offset + c.index)
            vals.append(sw)
            rows.append(r)
            cols.append(n_pos_unknowns + bb.lam_offset + c.index_b)
            vals.append(-sw)
            rhs.append(0.0)
            r += 1
        else:
            raise SynthesisError("unknown constraint kind %r" % c.kind)
    return r, has_anchor


def _global_solve(problem, rotations):
    """Positions and parameters minimizing the energy at fixed rotations."""
    n_pos = 3 * problem.n_global
    n_lam = sum(b.n_modes for b in problem.part_blocks + problem.pair_blocks)
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for block in problem.part_blocks + problem.pair_blocks:
        R = rotations[_rot_key(block)]
        model = block.model
        sqw = np.sqrt(block.edge_weights)
        mean_e = (model.mean[block.edges[:, 0]] - model.mean[block.edges[:, 1]]) @ R.T
        basis_e = [
            (model.basis[k][block.edges[:, 0]] - model.basis[k][block.edges[:, 1]]) @ R.T
            for k in range(block.n_modes)
        ]
        gi = block.global_ids[block.edges[:, 0]]
        gj = block.global_ids[block.edges[:, 1]]
        for ei in range(len(block.edges)):
            w = sqw[ei]
            if w == 0.0:
                continue
            for k in range(3):
                rows.append(r)
                cols.append(3 * gi[ei] + k)
                vals.append(w)
                rows.append(r)
                cols.append(3 * gj[ei] + k)
                vals.append(-w)
                for km in range(block.n_modes):
                    rows.append(r)
                    cols.append(n_pos + block.lam_offset + km)
                    vals.append(-w * basis_e[km][ei, k])
                rhs.append(w * mean_e[ei, k])
                r += 1
        # lambda prior rows
        for km in range(block.n_modes):
            sigma = block.sigmas[km]
            coeff = 1.0 / np.sqrt(2.0) / sigma if sigma > 0 else np.sqrt(ZERO_SIGMA_PIN)
            rows.append(r)
            cols.append(n_pos + block.lam_offset + km)
            vals.append(coeff)
            rhs.append(0.0)
            r += 1

    r, has_anchor = _constraint_rows(problem, rows, cols, vals, rhs, r, n_pos)
    if not has_anchor:
        # gauge: pin the centroid to the origin (translation-invariant energy)
        sw = np.sqrt(GAUGE_WEIGHT)
        for k in range(3):
            for g in range(problem.n_global):
                rows.append(r)
                cols.append(3 * g + k)
                vals.append(sw / problem.n_global)
            rhs.append(0.0)
            r += 1

    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, n_pos + n_lam))
    b = np.array(rhs)
    AtA = (A.T @ A).tocsc()
    Atb = A.T @ b
    try:
        x = spsolve(AtA, Atb)
    except RuntimeError as exc:
        raise SynthesisError("singular synthesis system: %s" % exc)
    if not np.all(np.isfinite(x)):
        raise SynthesisError("singular synthesis system (non-finite solution); "
                             "add a positional constraint or anchor")
    V = x[:n_pos].reshape(-1, 3)
    lam = x[n_pos:]
    return V, lam


def _rot_key(block):
    if hasattr(block, "node"):
        return block.node
    return "pair:%s#%d" % (block.site_id, block.lam_offset)


def _total_energy(problem, V, lam_vec, rotations):
    e = 0.0
    for block in problem.part_blocks + problem.pair_blocks:
        lam = lam_vec[block.lam_offset:block.lam_offset + block.n_modes]
        e += _block_energy(block, V, lam, rotations[_rot_key(block)])
    for c in problem.constraints:
        if c.kind == "pointHandle":
            w = c.weight if c.weight is not None else HANDLE_WEIGHT_FACTOR * problem.mean_cot
            gid = problem.node_vertex_to_global[(c.node, int(c.vertex))]
            e += w * float(np.sum((V[gid] - np.asarray(c.target)) ** 2))
        elif c.kind == "parameterPin":
            w = c.weight if c.weight is not None else COUPLE_WEIGHT
            b = problem.block_of(c.node)
            e += w * (lam_vec[b.lam_offset + c.index] - c.value) ** 2
        elif c.kind == "parameterCouple":
            w = c.weight if c.weight is not None else COUPLE_WEIGHT
            ba = problem.block_of(c.node)
            bb = problem.block_of(c.node_b)
            e += w * (lam_vec[ba.lam_offset + c.index]
                      - lam_vec[bb.lam_offset + c.index_b]) ** 2
    return e


def solve_synthesis(problem, warm_start=None, max_alternations=MAX_ALTERNATIONS,
                    rel_tol=ENERGY_REL_TOL):
    """Alternating local-global minimization of the reconstruction energy.

    warm_start : optional previous SynthesisResult for incremental edits.
    """
    rotations = {}
    for block in problem.part_blocks + problem.pair_blocks:
        key = _rot_key(block)
        if warm_start is not None and key in warm_start.rotations:
            rotations[key] = warm_start.rotations[key]
        else:
            rotations[key] = np.eye(3)

    energies = []
    V = None
    lam_vec = None
    prev_e = None
    its = 0
    for its in range(1, max_alternations + 1):
        V, lam_vec = _global_solve(problem, rotations)
        for block in problem.part_blocks + problem.pair_blocks:
            lam = lam_vec[block.lam_offset:block.lam_offset + block.n_modes]
            rotations[_rot_key(block)] = _procrustes_update(block, V, lam)
        e = _total_energy(problem, V, lam_vec, rotations)
        energies.append(e)
        if prev_e is not None and abs(prev_e - e) <= rel_tol * max(abs(prev_e), 1.0):
            break
        prev_e = e

    lambdas = {}
    for block in problem.part_blocks + problem.pair_blocks:
        lambdas[_rot_key(block)] = lam_vec[
            block.lam_offset:block.lam_offset + block.n_modes
        ].copy()
    mesh = TriMesh(V, problem.triangles, problem.triangle_labels, validate=False)
    return SynthesisResult(
        mesh=mesh, positions=V, lambdas=lambdas, rotations=rotations,
        energy=energies[-1], iterations=its, energies=energies,
    )


def apply_edit(problem, constraints, previous=None):
    """Re-solve with replaced constraints, warm-starting from a prior result."""
    problem.constraints = list(constraints)
    return solve_synthesis(problem, warm_start=previous)


def energy_gradient(problem, V, lam_vec, rotations):
    """Analytic gradient of the reconstruction energy wrt positions and
    parameters (rotations fixed). Used to validate the linear solves."""
    gV = np.zeros_like(V)
    gL = np.zeros_like(lam_vec)
    for block in problem.part_blocks + problem.pair_blocks:
        R = rotations[_rot_key(block)]
        lam = lam_vec[block.lam_offset:block.lam_offset + block.n_modes]
        gi = block.global_ids[block.edges[:, 0]]
        gj = block.global_ids[block.edges[:, 1]]
        cur = V[gi] - V[gj]
        target = _model_edge_field(block, lam) @ R.T
        r = block.edge_weights[:, None] * (cur - target)
        np.add.at(gV, gi, 2.0 * r)
        np.add.at(gV, gj, -2.0 * r)
        for k in range(block.n_modes):
            bk = block.model.basis[k]
            be = (bk[block.edges[:, 0]] - bk[block.edges[:, 1]]) @ R.T
            gL[block.lam_offset + k] += -2.0 * float(np.sum(r * be))
        sig2 = np.where(block.sigmas > 0, block.sigmas**2, 1.0 / (2.0 * ZERO_SIGMA_PIN))
        gL[block.lam_offset:block.lam_offset + block.n_modes] += lam / sig2
    for c in problem.constraints:
        if c.kind == "pointHandle":
            w = c.weight if c.weight is not None else HANDLE_WEIGHT_FACTOR * problem.mean_cot
            gid = problem.node_vertex_to_global[(c.node, int(c.vertex))]
            gV[gid] += 2.0 * w * (V[gid] - np.asarray(c.target))
        elif c.kind == "parameterPin":
            w = c.weight if c.weight is not None else COUPLE_WEIGHT
            b = problem.block_of(c.node)
            gL[b.lam_offset + c.index] += 2.0 * w * (lam_vec[b.lam_offset + c.index] - c.value)
        elif c.kind == "parameterCouple":
            w = c.weight if c.weight is not None else COUPLE_WEIGHT
            ba = problem.block_of(c.node)
            bb = problem.block_of(c.node_b)
            d = lam_vec[ba.lam_offset + c.index] - lam_vec[bb.lam_offset + c.index_b]
            gL[ba.lam_offset + c.index] += 2.0 * w * d
            gL[bb.lam_offset + c.index_b] -= 2.0 * w * d
    return gV, gL
