"""Spherical domain with interior spherical holes and graded node generation.

The fluid domain is the ball of radius ``R0`` minus a collection of small
disjoint spherical holes.  This module builds scattered node sets on that
domain: quasi-uniform boundary nodes on every sphere, a graded interior fill
that keeps a fine spacing near the holes, and one ghost node per boundary
node placed just outside the fluid along the outward normal.  It also
supplies the per-hole shape coefficients (capacitance and flux coefficient)
used by the reduced models.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

# Node class tags used throughout (and in the CSV schema):
#   "i"     interior
#   "bo"    outer boundary (sphere of radius R0)
#   "bi:k"  inner boundary of hole k (0-based)
#   "g"     ghost
KIND_INTERIOR = "i"
KIND_OUTER = "bo"
KIND_GHOST = "g"


class GeometryError(ValueError):
    """Invalid domain geometry or infeasible node-generation request."""


@dataclass(frozen=True)
class Hole:
    """A spherical hole with optional shape-coefficient overrides."""

    center: tuple
    radius: float
    Cn: float = None
    Dn: float = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise GeometryError("hole center must be a 3-vector")
        if not self.radius > 0:
            raise GeometryError("hole radius must be positive")
        if (self.Cn is None) != (self.Dn is None):
            raise GeometryError("override both Cn and Dn or neither")
        if self.Cn is not None and (self.Cn <= 0 or self.Dn <= 0):
            raise GeometryError("shape coefficient overrides must be positive")


@dataclass(frozen=True)
class DomainSpec:
    """Ball of radius ``R0`` minus a tuple of disjoint interior holes."""

    R0: float
    holes: tuple

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))
        if not self.R0 > 0:
            raise GeometryError("R0 must be positive")
        for h in self.holes:
            if np.linalg.norm(h.center) + h.radius >= self.R0:
                raise GeometryError(
                    "hole at %s (radius %g) is not strictly interior"
                    % (h.center, h.radius)
                )
        for n, a in enumerate(self.holes):
            for b in self.holes[n + 1 :]:
                gap = np.linalg.norm(np.subtract(a.center, b.center))
                if gap <= a.radius + b.radius:
                    raise GeometryError("holes at %s and %s overlap" % (a.center, b.center))

    @property
    def centers(self):
        return np.array([h.center for h in self.holes], dtype=float).reshape(-1, 3)

    @property
    def radii(self):
        return np.array([h.radius for h in self.holes], dtype=float)


@dataclass(frozen=True)
class ShapeCoefficients:
    """Capacitance ``Cn`` (length) and flux coefficient ``Dn`` (length^2)."""

    Cn: float
    Dn: float

    def __post_init__(self):
        if not (self.Cn > 0 and self.Dn > 0):
            raise GeometryError("shape coefficients must be positive")


def shape_coefficients(hole, eps_ref):
    """Shape coefficients of a hole magnified by the reference radius.

    For a sphere of magnified radius ``a = radius / eps_ref`` the capacitance
    is ``a`` and the flux coefficient is ``a**2``; explicit overrides on the
    hole are passed through verbatim.
    """
    if hole.Cn is not None:
        return ShapeCoefficients(hole.Cn, hole.Dn)
    if not eps_ref > 0:
        raise GeometryError("eps_ref must be positive")
    a = hole.radius / eps_ref
    return ShapeCoefficients(a, a * a)


@dataclass(frozen=True)
class SeparationReport:
    """Pairwise and wall clearances of the holes, relative to ``eps_ref``."""

    min_center_distance: float
    min_wall_distance: float
    ratio: float
    well_separated: bool


def check_separation(domain, eps_ref):
    """Report hole separations; warn (via the report) if any ratio < 5."""
    centers = domain.centers
    radii = domain.radii
    if len(domain.holes) == 0:
        return SeparationReport(math.inf, math.inf, math.inf, True)
    wall = float(np.min(domain.R0 - np.linalg.norm(centers, axis=1) - radii))
    if len(domain.holes) > 1:
        d = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
        d[np.diag_indices_from(d)] = np.inf
        pair = float(d.min())
    else:
        pair = math.inf
    ratio = min(pair, wall) / eps_ref
    return SeparationReport(pair, wall, ratio, ratio >= 5.0)


@dataclass(frozen=True)
class GradingPolicy:
    """Spacing field: ``h_fine`` within ``collar`` hole radii of each hole,
    then linear growth with slope ``ratio - 1`` up to ``h_max``.

    The linear slope is the continuum limit of layer-by-layer geometric
    growth with the given per-layer ratio.
    """

    h_max: float
    ratio: float = 1.1
    collar: float = 5.0

    def __post_init__(self):
        if not (1.0 < self.ratio <= 1.5):
            raise GeometryError("grading ratio must lie in (1, 1.5]")
        if not self.h_max > 0:
            raise GeometryError("h_max must be positive")
        if self.collar < 0:
            raise GeometryError("collar must be nonnegative")

    def spacing(self, points, domain, h_fine):
        """Evaluate the spacing field at an (n, 3) array of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = np.full(len(pts), self.h_max)
        for hole in domain.holes:
            d = np.linalg.norm(pts - np.asarray(hole.center), axis=1) - hole.radius
            beyond = np.maximum(0.0, d - self.collar * hole.radius)
            h = np.minimum(h, h_fine + (self.ratio - 1.0) * beyond)
        return h


@dataclass(frozen=True)
class NodeSet:
    """Immutable scattered node set over the extended point cloud.

    Points are stored in blocks: interior, outer boundary, inner boundary
    (one block per hole, in hole order), then ghosts.  ``normals`` are unit
    outward normals of the fluid for boundary nodes; ghost nodes carry their
    parent's normal and interior nodes carry zeros.
    """

    points: np.ndarray
    kinds: tuple
    normals: np.ndarray
    h_local: np.ndarray
    ghost_parent: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("points", "normals", "h_local", "ghost_parent"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self):
        return len(self.points)

    def indices_of(self, kind):
        return np.array([i for i, k in enumerate(self.kinds) if k == kind], dtype=int)

    @property
    def interior_indices(self):
        return self.indices_of(KIND_INTERIOR)

    @property
    def outer_boundary_indices(self):
        return self.indices_of(KIND_OUTER)

    def inner_boundary_indices(self, k):
        return self.indices_of("bi:%d" % k)

    @property
    def boundary_indices(self):
        return np.array(
            [i for i, k in enumerate(self.kinds) if k != KIND_INTERIOR and k != KIND_GHOST],
            dtype=int,
        )

    @property
    def ghost_indices(self):
        return self.indices_of(KIND_GHOST)

    @property
    def n_holes(self):
        ks = {k for k in self.kinds if k.startswith("bi:")}
        return len(ks)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "z", "class", "nx", "ny", "nz", "h_local"])
            for p, k, nu, h in zip(self.points, self.kinds, self.normals, self.h_local):
                writer.writerow(
                    ["%.17g" % p[0], "%.17g" % p[1], "%.17g" % p[2], k]
                    + ["%.17g" % c for c in nu]
                    + ["%.17g" % h]
                )

    @classmethod
    def from_csv(cls, path):
        pts, kinds, nrm, h = [], [], [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:4] != ["x", "y", "z", "class"]:
                raise GeometryError("unrecognized node CSV header: %s" % header)
            for row in reader:
                pts.append([float(row[0]), float(row[1]), float(row[2])])
                kinds.append(row[3])
                nrm.append([float(row[4]), float(row[5]), float(row[6])])
                h.append(float(row[7]))
        pts = np.asarray(pts)
        kinds = tuple(kinds)
        nrm = np.asarray(nrm)
        h = np.asarray(h)
        gidx = [i for i, k in enumerate(kinds) if k == KIND_GHOST]
        bidx = [i for i, k in enumerate(kinds) if k not in (KIND_INTERIOR, KIND_GHOST)]
        parent = None
        if gidx:
            tree = cKDTree(pts[bidx])
            _, nearest = tree.query(pts[gidx])
            parent = np.array([bidx[j] for j in np.atleast_1d(nearest)], dtype=int)
        return cls(pts, kinds, nrm, h, parent)


def _fibonacci_sphere(count, radius, center, rng):
    """Quasi-uniform points on a sphere, randomly rotated for decorrelation."""
    i = np.arange(count)
    z = 1.0 - (2.0 * i + 1.0) / count
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = _GOLDEN_ANGLE * i
    pts = np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])
    # Random orthogonal rotation (QR of a Gaussian matrix), seeded.
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    pts = pts @ q.T
    return center + radius * pts


def _sphere_count(radius, h):
    # Hexagonal packing: area per node = (sqrt(3)/2) h^2.
    return max(12, int(round(4.0 * math.pi * radius * radius / (math.sqrt(3.0) / 2.0 * h * h))))


def _candidate_batch(domain, grading, h_fine, c, rng):
    """Draw candidate points with spatial density ~ c / h(x)^3.

    Mixture proposal: a uniform component over the ball at the bulk density
    plus, per hole, a radially importance-sampled shell that follows the
    graded spacing; candidates are thinned to the exact target density.
    """
    slope = grading.ratio - 1.0
    comps = []
    n_glob = max(1, int(c * (4.0 / 3.0) * math.pi * domain.R0**3 / grading.h_max**3))
    glob = rng.uniform(-domain.R0, domain.R0, size=(int(1.91 * n_glob), 3))
    glob = glob[np.einsum("ij,ij->i", glob, glob) <= domain.R0**2][:n_glob]
    comps.append(glob)
    for hole in domain.holes:
        s_max = grading.collar * hole.radius + (grading.h_max - h_fine) / slope
        s_grid = np.linspace(0.0, s_max, 2048)
        h_s = h_fine + slope * np.maximum(0.0, s_grid - grading.collar * hole.radius)
        mass = 4.0 * math.pi * (hole.radius + s_grid) ** 2 / h_s**3
        cum = np.concatenate([[0.0], np.cumsum((mass[1:] + mass[:-1]) / 2.0 * np.diff(s_grid))])
        n_k = max(1, int(c * cum[-1]))
        s = np.interp(rng.uniform(0.0, cum[-1], size=n_k), cum, s_grid)
        dirs = rng.standard_normal((n_k, 3))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        comps.append(np.asarray(hole.center) + (hole.radius + s)[:, None] * dirs)
    cand = np.vstack(comps)
    cand = cand[np.einsum("ij,ij->i", cand, cand) <= domain.R0**2]
    # Thin to density c/h^3: proposal density is the sum of the mixture
    # component densities, each of which is c over a cubed spacing.
    q = np.full(len(cand), 1.0 / grading.h_max**3)
    for hole in domain.holes:
        s = np.linalg.norm(cand - np.asarray(hole.center), axis=1) - hole.radius
        s_max = grading.collar * hole.radius + (grading.h_max - h_fine) / slope
        h_k = h_fine + slope * np.maximum(0.0, s - grading.collar * hole.radius)
        q += np.where((s >= 0) & (s <= s_max), 1.0 / h_k**3, 0.0)
    f = 1.0 / grading.spacing(cand, domain, h_fine) ** 3
    return cand[rng.uniform(size=len(cand)) <= f / q]


def generate_nodes(domain, h_fine, grading, seed=0):
    """Generate a graded node set with boundary normals and a ghost layer.

    Boundary spheres are discretized first (Fibonacci lattices at the local
    spacing), then the interior is filled by batched Poisson-disk dart
    throwing against the spacing field.  Deterministic for a fixed seed.
    """
    if not h_fine > 0:
        raise GeometryError("h_fine must be positive")
    for hole in domain.holes:
        if h_fine > hole.radius / 4.0:
            raise GeometryError(
                "h_fine=%g too coarse for hole radius %g (need <= radius/4)"
                % (h_fine, hole.radius)
            )
    rng = np.random.default_rng(seed)

    points = []
    kinds = []
    normals = []
    h_local = []

    # Outer sphere: uniform at the smallest spacing the field attains there.
    probe = _fibonacci_sphere(256, domain.R0, np.zeros(3), np.random.default_rng(1))
    h_outer = float(grading.spacing(probe, domain, h_fine).min())
    outer = _fibonacci_sphere(_sphere_count(domain.R0, h_outer), domain.R0, np.zeros(3), rng)
    outer *= domain.R0 / np.linalg.norm(outer, axis=1)[:, None]
    nu_outer = outer / domain.R0
    points.append(outer)
    kinds += [KIND_OUTER] * len(outer)
    normals.append(nu_outer)
    h_local.append(np.full(len(outer), h_outer))

    # Hole spheres: spacing h_fine; outward normal of the fluid points into
    # the hole.
    for k, hole in enumerate(domain.holes):
        c = np.asarray(hole.center)
        surf = _fibonacci_sphere(_sphere_count(hole.radius, h_fine), hole.radius, c, rng)
        rel = surf - c
        rel *= hole.radius / np.linalg.norm(rel, axis=1)[:, None]
        surf = c + rel
        points.append(surf)
        kinds += ["bi:%d" % k] * len(surf)
        normals.append(-rel / hole.radius)
        h_local.append(np.full(len(surf), h_fine))

    boundary_pts = np.vstack(points)
    boundary_h = np.concatenate(h_local)

    # Interior fill: Poisson-disk thinning of importance-sampled candidate
    # batches.  A candidate survives when no already-placed node lies within
    # 0.8 of its local spacing; within-batch conflicts are resolved greedily
    # via k-nearest neighbors.
    accepted = [boundary_pts]
    for _ in range(8):
        cand = _candidate_batch(domain, grading, h_fine, 2.0, rng)
        hc = grading.spacing(cand, domain, h_fine)
        # Keep a half-spacing margin off every surface.
        keep = np.linalg.norm(cand, axis=1) <= domain.R0 - 0.5 * hc
        for hole in domain.holes:
            d = np.linalg.norm(cand - np.asarray(hole.center), axis=1)
            keep &= d >= hole.radius + 0.5 * hc
        cand, hc = cand[keep], hc[keep]
        if len(cand) == 0:
            continue

        tree = cKDTree(np.vstack(accepted))
        dist, _ = tree.query(cand, k=1)
        ok = dist >= 0.8 * hc
        cand, hc = cand[ok], hc[ok]
        if len(cand) == 0:
            continue

        if len(cand) > 1:
            # Conflicts among survivors: each candidate can clash with only a
            # handful of neighbors at this density, so a fixed-k neighbor
            # query finds them all; earlier index wins.
            k = min(len(cand), 48)
            ctree = cKDTree(cand)
            nd, ni = ctree.query(cand, k=k)
            rows = np.repeat(np.arange(len(cand)), k - 1)
            cols = ni[:, 1:].ravel()
            dd = nd[:, 1:].ravel()
            lim = 0.8 * np.minimum(hc[rows], hc[cols])
            mask = (dd < lim) & (rows < cols)
            pairs = np.column_stack([rows[mask], cols[mask]])
            if len(pairs):
                alive = np.ones(len(cand), dtype=bool)
                order = np.lexsort((pairs[:, 1], pairs[:, 0]))
                for a, b in pairs[order]:
                    if alive[a]:
                        alive[b] = False
                cand, hc = cand[alive], hc[alive]

        accepted.append(cand)
        points.append(cand)
        kinds += [KIND_INTERIOR] * len(cand)
        normals.append(np.zeros((len(cand), 3)))
        h_local.append(hc)

    # Ghost layer: one ghost per boundary node at h_local along the outward
    # normal (outside the fluid).
    n_boundary = len(boundary_pts)
    all_normals = np.vstack(normals)
    ghosts = boundary_pts + boundary_h[:, None] * all_normals[:n_boundary]
    parent = np.arange(n_boundary)
    points.append(ghosts)
    kinds += [KIND_GHOST] * n_boundary
    normals.append(all_normals[:n_boundary])
    h_local.append(boundary_h)

    pts = np.vstack(points)
    kinds = tuple(kinds)
    # Reorder to the documented block layout: interior first, then boundary
    # blocks, then ghosts, preserving relative order within each block.
    order = (
        [i for i, k in enumerate(kinds) if k == KIND_INTERIOR]
        + [i for i, k in enumerate(kinds) if k == KIND_OUTER]
        + [
            i
            for k_hole in range(len(domain.holes))
            for i, k in enumerate(kinds)
            if k == "bi:%d" % k_hole
        ]
        + [i for i, k in enumerate(kinds) if k == KIND_GHOST]
    )
    order = np.array(order, dtype=int)
    inv = np.empty(len(order), dtype=int)
    inv[order] = np.arange(len(order))
    # Parent indices refer to positions in the pre-permutation layout, where
    # boundary nodes came first; map them through the same permutation.
    parent_full = inv[parent]
    return NodeSet(
        pts[order],
        tuple(kinds[i] for i in order),
        np.vstack(normals)[order],
        np.concatenate(h_local)[order],
        parent_full,
    )
