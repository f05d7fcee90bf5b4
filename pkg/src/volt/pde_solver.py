"""Coupled steady mean-field system with switching boundary conditions.

Assembles and solves the block-sparse system for the per-state mean fields
v_j of the concentration, satisfying Δv + Qᵀv = 0 in the fluid with a
reflecting outer wall and, on each hole, an absorbing (Dirichlet) condition
in states where that hole is quiescent and a constant-flux (Neumann)
condition with data ρ_j in states where it fires.  The PDE is enforced up
to and including the boundaries; ghost unknowns close the system.
"""

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .geometry import KIND_GHOST, KIND_INTERIOR


class SolverError(RuntimeError):
    """Factorization failure or an inconsistent system."""


@dataclass(frozen=True)
class MeanSystem:
    """Assembled block system: state-major unknowns over the extended nodes."""

    matrix: sparse.csc_matrix
    rhs: np.ndarray
    nodes: object
    spec: object

    @property
    def n_states(self):
        return len(self.spec.states)

    @property
    def block_size(self):
        return len(self.nodes.points)


@dataclass(frozen=True)
class SolutionField:
    """Per-state nodal fields and their sum (the mean concentration)."""

    v: np.ndarray          # (n_states, n_total) including ghost values
    V: np.ndarray          # sum over states, on fluid (interior+boundary) nodes
    fluid_indices: np.ndarray
    residual: float
    nodes: object
    spec: object

    @property
    def positive(self):
        return bool(self.V.min() > 0)


def _row_layout(nodes):
    """Per-state row groups: PDE rows at X, then BC rows per boundary block."""
    n_i = len(nodes.interior_indices)
    n_b = len(nodes.boundary_indices)
    x_rows = np.arange(n_i + n_b)
    outer = nodes.outer_boundary_indices
    holes = [nodes.inner_boundary_indices(k) for k in range(nodes.n_holes)]
    return x_rows, outer, holes


def assemble_mean_system(nodes, laplacian, normal_derivative, spec):
    """Generic |J|-state assembly of the mean-field block system.

    Unknowns are state-major; within a state the node order is (interior,
    boundary, ghost).  Row order per state: PDE rows on interior+boundary
    nodes, then the outer Neumann rows, then per-hole boundary rows.
    """
    n_total = len(nodes.points)
    if laplacian.shape != (n_total, n_total) or normal_derivative.shape != (n_total, n_total):
        raise SolverError("operator shape does not match the node set")
    x_rows, outer, holes = _row_layout(nodes)
    if len(holes) != spec.N:
        raise SolverError(
            "node set has %d holes but the jump process drives %d" % (len(holes), spec.N)
        )
    eye = sparse.identity(n_total, format="csr")
    eye_x = eye[x_rows]
    qt = spec.Q.T
    n_states = len(spec.states)

    blocks = [[None] * n_states for _ in range(n_states)]
    rhs = []
    for s, state in enumerate(spec.states):
        bc_rows = [normal_derivative[outer]]
        rhs_s = np.zeros(n_total)
        offset = len(x_rows) + len(outer)
        for k, hole_rows in enumerate(holes):
            if state[k]:
                bc_rows.append(normal_derivative[hole_rows])
                rhs_s[offset : offset + len(hole_rows)] = spec.rho[s]
            else:
                bc_rows.append(eye[hole_rows])
            offset += len(hole_rows)
        blocks[s][s] = sparse.vstack(
            [laplacian[x_rows] + qt[s, s] * eye_x] + bc_rows, format="csr"
        )
        rhs.append(rhs_s)
        zero_bc = sparse.csr_matrix((n_total - len(x_rows), n_total))
        for t in range(n_states):
            if t != s:
                blocks[s][t] = sparse.vstack([qt[s, t] * eye_x, zero_bc], format="csr")
    matrix = sparse.bmat(blocks, format="csc")
    return MeanSystem(matrix, np.concatenate(rhs), nodes, spec)


def assemble_two_field_system(nodes, laplacian, normal_derivative, alpha, beta):
    """Hand-coded two-field block system for synchronous firing.

    Field 0 is the all-quiescent state (Dirichlet holes), field 1 the
    all-firing state (Neumann holes with flux beta/(alpha+beta)):

        [[Δ − β·I,  α·I    ],  [v0]   [0]
         [β·I,      Δ − α·I]]  [v1] = [Θ̃]

    plus outer Neumann rows for both fields, with Θ̃ the constant
    beta/(alpha+beta) on the inner Neumann rows of field 1.
    """
    n_total = len(nodes.points)
    x_rows, outer, holes = _row_layout(nodes)
    eye = sparse.identity(n_total, format="csr")
    eye_x = eye[x_rows]
    zero_bc = sparse.csr_matrix((n_total - len(x_rows), n_total))

    dirichlet = [eye[h] for h in holes]
    neumann = [normal_derivative[h] for h in holes]
    a00 = sparse.vstack(
        [laplacian[x_rows] + (-beta) * eye_x, normal_derivative[outer]] + dirichlet,
        format="csr",
    )
    a01 = sparse.vstack([alpha * eye_x, zero_bc], format="csr")
    a10 = sparse.vstack([beta * eye_x, zero_bc], format="csr")
    a11 = sparse.vstack(
        [laplacian[x_rows] + (-alpha) * eye_x, normal_derivative[outer]] + neumann,
        format="csr",
    )
    matrix = sparse.bmat([[a00, a01], [a10, a11]], format="csc")

    theta = beta / (alpha + beta)
    rhs1 = np.zeros(n_total)
    offset = len(x_rows) + len(outer)
    for h in holes:
        rhs1[offset : offset + len(h)] = theta
        offset += len(h)
    rhs = np.concatenate([np.zeros(n_total), rhs1])

    from .markov import FiringModel, build_jump_spec

    spec = build_jump_spec(FiringModel.synchronous(alpha, beta), N=nodes.n_holes)
    return MeanSystem(matrix, rhs, nodes, spec)


#: Above this many unknowns the LU factors are held in single precision
#: (roughly half the memory); iterative refinement restores full accuracy.
SINGLE_FACTOR_THRESHOLD = 30_000


def solve_mean_system(system, factor_single=None):
    """Direct sparse solve; returns the per-state fields and their sum.

    ``factor_single=True`` factors a float32 copy of the matrix and
    recovers double-precision accuracy by iterative refinement, halving
    the dominant memory cost.  The default (``None``) switches to the
    single-precision factorization above ``SINGLE_FACTOR_THRESHOLD``
    unknowns.  Either path must reach a relative residual of 1e-9 or the
    solve is rejected.
    """
    matrix = system.matrix
    if factor_single is None:
        factor_single = matrix.shape[0] > SINGLE_FACTOR_THRESHOLD
    try:
        if factor_single:
            lu = splu(matrix.astype(np.float32))

            def apply(r):
                return lu.solve(r.astype(np.float32)).astype(np.float64)

        else:
            lu = splu(matrix)
            apply = lu.solve
    except RuntimeError as exc:
        raise SolverError("sparse factorization failed: %s" % exc) from exc
    sol = apply(system.rhs)
    b_norm = np.linalg.norm(system.rhs)

    def rel_residual(x):
        return float(
            np.linalg.norm(system.matrix @ x - system.rhs) / (b_norm if b_norm else 1.0)
        )

    residual = rel_residual(sol)
    max_rounds = 40 if factor_single else 2
    for _ in range(max_rounds):
        # Iterative refinement recovers digits lost to factorization round-off.
        if np.isfinite(residual) and residual <= 1e-10:
            break
        previous = residual
        sol = sol + apply(system.rhs - system.matrix @ sol)
        residual = rel_residual(sol)
        if not np.isfinite(residual) or residual >= 0.5 * previous:
            break  # stalled: the factorization cannot give more digits
    if not np.isfinite(residual) or residual > 1e-9:
        raise SolverError("solve residual %.3e exceeds 1e-9" % residual)
    nodes = system.nodes
    v = sol.reshape(system.n_states, system.block_size)
    fluid = np.concatenate([nodes.interior_indices, nodes.boundary_indices])
    V = v[:, fluid].sum(axis=0)
    return SolutionField(v, V, fluid, residual, nodes, system.spec)


def field_metrics(field, domain, exclusion=2.0):
    """Mean and spatial variation of V over interior nodes in the outer region.

    Interior nodes within ``exclusion`` hole radii of any hole surface are
    excluded: the reduced descriptions are only valid away from the inner
    layers, so metrics must not sample them.
    """
    nodes = field.nodes
    interior = nodes.interior_indices
    pts = nodes.points[interior]
    keep = np.ones(len(interior), dtype=bool)
    for hole in domain.holes:
        d = np.linalg.norm(pts - np.asarray(hole.center), axis=1)
        keep &= d >= (1.0 + exclusion) * hole.radius
    if not keep.any():
        raise SolverError("exclusion zone removed every interior node")
    pos = np.searchsorted(field.fluid_indices, interior[keep])
    vals = field.V[pos]
    return {
        "mean": float(vals.mean()),
        "variation": float((vals.max() - vals.min()) / vals.min()),
        "spread": float(vals.max() - vals.min()),
        "n_sampled": int(keep.sum()),
        "exclusion": float(exclusion),
    }


def solve_diagonalized(nodes, laplacian, normal_derivative, spec):
    """Equivalent solve in decoupled variables u = P⁻¹ v; returns v = P u.

    The fields u satisfy Δu_i = λ_i u_i with boundary rows mixing the
    components through the firing matrices:  rows (I−Bₙ)P u = 0 for the
    Dirichlet part and Bₙ(P ∂ν u − ρ) = 0 for the Neumann part combine into
    one row per state per boundary node.
    """
    from .markov import firing_matrix, spectral_decomposition

    sd = spectral_decomposition(spec)
    n_total = len(nodes.points)
    x_rows, outer, holes = _row_layout(nodes)
    eye = sparse.identity(n_total, format="csr")
    eye_x = eye[x_rows]
    n_states = len(spec.states)

    # Per state s the row group is [PDE rows (diagonal in u), outer rows,
    # hole rows], each a 1 x n_states strip over the u components.
    strips = []
    rhs = []
    for s in range(n_states):
        rhs_s = np.zeros(n_total)
        pde = [
            laplacian[x_rows] - sd.lambdas[s] * eye_x
            if t == s
            else sparse.csr_matrix((len(x_rows), n_total))
            for t in range(n_states)
        ]
        out_rows = [sd.P[s, t] * normal_derivative[outer] for t in range(n_states)]
        hole_strips = []
        offset = len(x_rows) + len(outer)
        for k, hole_rows in enumerate(holes):
            bn = firing_matrix(spec, k + 1).diag
            strip = []
            for t in range(n_states):
                block = (1.0 - bn[s]) * sd.P[s, t] * eye[hole_rows] + bn[s] * sd.P[
                    s, t
                ] * normal_derivative[hole_rows]
                strip.append(block)
            hole_strips.append(strip)
            if bn[s]:
                rhs_s[offset : offset + len(hole_rows)] = spec.rho[s]
            offset += len(hole_rows)
        strips.append(
            [
                sparse.vstack(
                    [pde[t], out_rows[t]] + [hs[t] for hs in hole_strips], format="csr"
                )
                for t in range(n_states)
            ]
        )
        rhs.append(rhs_s)
    matrix = sparse.bmat(strips, format="csc")
    system = MeanSystem(matrix, np.concatenate(rhs), nodes, spec)
    u_field = solve_mean_system(system)
    v = sd.P @ u_field.v
    fluid = u_field.fluid_indices
    V = v[:, fluid].sum(axis=0)
    return SolutionField(v, V, fluid, u_field.residual, nodes, spec)


def node_set_hash(nodes):
    """Stable hash of the node coordinates (for run metadata)."""
    return hashlib.sha256(np.ascontiguousarray(nodes.points).tobytes()).hexdigest()[:16]


def export_solution_csv(field, path):
    """Write x,y,z,class,V,v_state_0.. rows for fluid nodes."""
    nodes = field.nodes
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["x", "y", "z", "class", "V"]
            + ["v_state_%d" % s for s in range(len(field.v))]
        )
        for pos, i in enumerate(field.fluid_indices):
            p = nodes.points[i]
            writer.writerow(
                ["%.17g" % p[0], "%.17g" % p[1], "%.17g" % p[2], nodes.kinds[i]]
                + ["%.17g" % field.V[pos]]
                + ["%.17g" % field.v[s, i] for s in range(len(field.v))]
            )


def export_metrics_json(metrics, path, extra=None):
    payload = dict(metrics)
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
