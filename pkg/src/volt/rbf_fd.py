"""Overlapped RBF-FD differentiation matrices on scattered nodes.

Local weights come from polyharmonic-spline (PHS) interpolants augmented
with a full polynomial basis: for each stencil the saddle-point system

    [[A, Psi], [Psi^T, 0]] [W; Lambda] = [B_A; B_Psi]

is solved once with one right-hand-side column per evaluation node inside
the stencil's overlap ball, so a single stencil populates many rows of the
assembled sparse operator.  Supported operators are the Laplacian and the
normal (directional) derivative.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy import sparse
from scipy.io import mmwrite
from scipy.spatial import cKDTree

from .geometry import KIND_GHOST, KIND_INTERIOR


class StencilError(RuntimeError):
    """Degenerate stencil geometry (coincident or non-unisolvent nodes)."""


@dataclass(frozen=True)
class FDConfig:
    """Discretization orders and stencil sizing.

    ``xi`` is the target convergence order; the polynomial degree is
    ``ell = xi + 1``.  The PHS exponent ``m`` defaults to ``ell`` when odd,
    else ``ell + 1``.  The overlap parameter ``delta`` defaults to 0.7 for
    ``ell <= 3`` and 0.5 for larger degrees; ``delta = 1`` recovers the
    classical one-stencil-per-node method.  High-degree stencils are
    sensitive to how fast the spacing field varies across a stencil, so
    graded node sets should keep the grading ratio gentle (about 1.15)
    when ``ell >= 6``.
    """

    xi: int
    m: int = None
    delta: float = None

    def __post_init__(self):
        if self.xi < 1:
            raise ValueError("xi must be >= 1")
        if self.m is None:
            m = self.ell if self.ell % 2 == 1 else self.ell + 1
            object.__setattr__(self, "m", max(3, m))
        if self.m % 2 == 0 or self.m < 3:
            raise ValueError("PHS exponent m must be odd and >= 3")
        if self.delta is None:
            object.__setattr__(self, "delta", 0.7 if self.ell <= 3 else 0.5)
        if not (0.0 < self.delta <= 1.0):
            raise ValueError("delta must lie in (0, 1]")

    @property
    def ell(self):
        return self.xi + 1

    @property
    def M(self):
        return math.comb(self.ell + 3, 3)

    @property
    def n(self):
        return 2 * self.M + int(math.log(2 * self.M))


@dataclass(frozen=True)
class Stencil:
    """A stencil: its center, neighbor supports, and the overlap ball."""

    center: int
    neighbors: np.ndarray
    ball: np.ndarray

    def __post_init__(self):
        self.neighbors.setflags(write=False)
        self.ball.setflags(write=False)


def _monomial_powers(ell):
    powers = []
    for deg in range(ell + 1):
        for combo in combinations_with_replacement(range(3), deg):
            p = [0, 0, 0]
            for axis in combo:
                p[axis] += 1
            powers.append(tuple(p))
    return powers


def build_stencils(nodes, config):
    """Greedy overlap-ball cover of all nodes that require operator rows.

    Rows are needed for interior and boundary nodes; ghost nodes appear only
    as supports.  Nodes are visited in index order; each uncovered node
    becomes a stencil center whose ball claims every still-uncovered row
    node within radius ``(1 - delta) * max stencil distance``.
    """
    pts = nodes.points
    if len(pts) < config.n:
        raise StencilError(
            "need at least %d nodes for stencil size, have %d" % (config.n, len(pts))
        )
    row_mask = np.array([k != KIND_GHOST for k in nodes.kinds])
    tree = cKDTree(pts)
    covered = np.zeros(len(pts), dtype=bool)
    covered[~row_mask] = True
    stencils = []
    for i in range(len(pts)):
        if covered[i]:
            continue
        dist, idx = tree.query(pts[i], k=config.n)
        if dist[1] == 0.0:
            raise StencilError("coincident nodes in stencil centered at node %d" % i)
        r1 = (1.0 - config.delta) * dist[-1]
        in_ball = idx[(dist <= r1) & ~covered[idx]]
        ball = np.concatenate([[i], in_ball[in_ball != i]])
        covered[ball] = True
        stencils.append(Stencil(i, np.asarray(idx), ball))
    return stencils


def _local_system(pts_local, m, powers):
    n = len(pts_local)
    diff = pts_local[:, None, :] - pts_local[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if np.min(r + np.eye(n)) == 0.0:
        raise StencilError("coincident nodes in local system")
    A = r**m
    psi = np.empty((n, len(powers)))
    for j, (a, b, c) in enumerate(powers):
        psi[:, j] = pts_local[:, 0] ** a * pts_local[:, 1] ** b * pts_local[:, 2] ** c
    K = np.zeros((n + len(powers), n + len(powers)))
    K[:n, :n] = A
    K[:n, n:] = psi
    K[n:, :n] = psi.T
    return K


def _rhs_laplacian(z_local, pts_local, m, powers):
    diff = z_local[:, None, :] - pts_local[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    b_a = m * (m + 1) * r ** (m - 2)
    b_psi = np.zeros((len(z_local), len(powers)))
    for j, (a, b, c) in enumerate(powers):
        for k, p in enumerate((a, b, c)):
            if p >= 2:
                q = [a, b, c]
                q[k] -= 2
                b_psi[:, j] += (
                    p
                    * (p - 1)
                    * z_local[:, 0] ** q[0]
                    * z_local[:, 1] ** q[1]
                    * z_local[:, 2] ** q[2]
                )
    return np.hstack([b_a, b_psi])


def _rhs_normal(z_local, normals, pts_local, m, powers):
    diff = z_local[:, None, :] - pts_local[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    dot = np.einsum("ijk,ik->ij", diff, normals)
    b_a = m * r ** (m - 2) * dot
    b_psi = np.zeros((len(z_local), len(powers)))
    for j, (a, b, c) in enumerate(powers):
        for k, p in enumerate((a, b, c)):
            if p >= 1:
                q = [a, b, c]
                q[k] -= 1
                b_psi[:, j] += (
                    p
                    * normals[:, k]
                    * z_local[:, 0] ** q[0]
                    * z_local[:, 1] ** q[1]
                    * z_local[:, 2] ** q[2]
                )
    return np.hstack([b_a, b_psi])


def local_weights(nodes, stencil, operator, config, eval_idx=None):
    """Weights of ``operator`` at the stencil's evaluation nodes.

    Returns an (n_eval, n) array: one row of FD weights (over the stencil's
    neighbor supports) per evaluation node.  Evaluation nodes default to the
    stencil's ball.  Local coordinates are shifted to the stencil center and
    scaled by the stencil radius for conditioning; the scaling is undone on
    the returned weights.
    """
    if eval_idx is None:
        eval_idx = stencil.ball
    pts = nodes.points
    powers = _monomial_powers(config.ell)
    center = pts[stencil.center]
    scale = np.linalg.norm(pts[stencil.neighbors] - center, axis=1).max()
    local = (pts[stencil.neighbors] - center) / scale
    z = (pts[eval_idx] - center) / scale
    try:
        K = _local_system(local, config.m, powers)
        if operator == "laplacian":
            rhs = _rhs_laplacian(z, local, config.m, powers)
            back = 1.0 / scale**2
        elif operator == "normal_derivative":
            rhs = _rhs_normal(z, nodes.normals[eval_idx], local, config.m, powers)
            back = 1.0 / scale
        else:
            raise ValueError("unknown operator %r" % (operator,))
        sol = np.linalg.solve(K, rhs.T)
    except np.linalg.LinAlgError as exc:
        raise StencilError(
            "singular local system for stencil centered at node %d" % stencil.center
        ) from exc
    return sol[: len(stencil.neighbors)].T * back


def assemble_operator(nodes, stencils, operator, config, workers=1):
    """Assemble the sparse operator over the extended node set.

    Laplacian rows are produced for every interior and boundary node;
    normal-derivative rows only for boundary nodes (evaluated with each
    node's own outward normal).  Each row is written by exactly one stencil.
    """
    n_total = len(nodes.points)
    boundary = np.array(
        [k != KIND_INTERIOR and k != KIND_GHOST for k in nodes.kinds]
    )

    def rows_for(stencil):
        if operator == "normal_derivative":
            eval_idx = stencil.ball[boundary[stencil.ball]]
        else:
            eval_idx = stencil.ball
        if len(eval_idx) == 0:
            return eval_idx, None
        return eval_idx, local_weights(nodes, stencil, operator, config, eval_idx)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(rows_for, stencils))
    else:
        results = [rows_for(s) for s in stencils]

    rows, cols, vals = [], [], []
    for stencil, (eval_idx, w) in zip(stencils, results):
        if w is None:
            continue
        rows.append(np.repeat(eval_idx, len(stencil.neighbors)))
        cols.append(np.tile(stencil.neighbors, len(eval_idx)))
        vals.append(w.ravel())
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_total, n_total),
    )
    return mat.tocsr()


def class_block(matrix, nodes, row_kinds, col_kinds):
    """Submatrix view restricted to node classes (e.g. interior vs ghost)."""

    def pick(token):
        if token == "i":
            return nodes.interior_indices
        if token == "b":
            return nodes.boundary_indices
        if token == "g":
            return nodes.ghost_indices
        return nodes.indices_of(token)

    return matrix[np.ix_(pick(row_kinds), pick(col_kinds))]


def export_matrix_market(matrix, path, comment=""):
    """Write the operator in Matrix Market coordinate format."""
    mmwrite(str(path), matrix, comment=comment)
