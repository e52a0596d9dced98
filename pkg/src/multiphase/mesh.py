"""Triangle meshes, P1 finite-element functions, quadrature, and ball averages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import Domain2D

# Symmetric triangle rules in barycentric coordinates; weights sum to 1.
_S15 = np.sqrt(15.0)
_A1 = (6.0 + _S15) / 21.0
_A2 = (6.0 - _S15) / 21.0
_QUAD_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (np.array([[2 / 3, 1 / 6, 1 / 6],
                  [1 / 6, 2 / 3, 1 / 6],
                  [1 / 6, 1 / 6, 2 / 3]]), np.full(3, 1 / 3)),
    5: (np.array([[1 / 3, 1 / 3, 1 / 3],
                  [_A1, _A1, 1 - 2 * _A1],
                  [_A1, 1 - 2 * _A1, _A1],
                  [1 - 2 * _A1, _A1, _A1],
                  [_A2, _A2, 1 - 2 * _A2],
                  [_A2, 1 - 2 * _A2, _A2],
                  [1 - 2 * _A2, _A2, _A2]]),
        np.array([9 / 40,
                  (155 + _S15) / 1200, (155 + _S15) / 1200, (155 + _S15) / 1200,
                  (155 - _S15) / 1200, (155 - _S15) / 1200, (155 - _S15) / 1200])),
}


def quad_rule(degree):
    """Barycentric points and unit weights for the smallest rule of at
    least the requested polynomial degree."""
    for d in sorted(_QUAD_RULES):
        if d >= degree:
            return _QUAD_RULES[d]
    raise ValueError(f"no quadrature rule of degree {degree}")


@dataclass(frozen=True)
class QuadratureMeasure:
    """Weighted point set discretizing an area integral.

    tri_index maps each point to the mesh triangle it lies in, which lets
    P1 data be evaluated without point location.
    """

    points: np.ndarray        # (M, 2)
    weights: np.ndarray       # (M,) positive, sums to the region area
    tri_index: np.ndarray     # (M,) int

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    @property
    def total_mass(self):
        return float(self.weights.sum())


class TriMesh:
    """Conforming triangle mesh with cached P1 geometry.

    Immutable after construction; refinement returns a new mesh.
    """

    def __init__(self, vertices, triangles):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        v = self.vertices[self.triangles]
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(self.areas <= 0):
            raise ValueError("all triangles must have positive signed area")
        # constant gradients of the three barycentric basis functions
        grads = np.empty((len(self.triangles), 3, 2))
        inv2a = 1.0 / (2.0 * self.areas)
        for k in range(3):
            a, b = v[:, (k + 1) % 3], v[:, (k + 2) % 3]
            grads[:, k, 0] = (a[:, 1] - b[:, 1]) * inv2a
            grads[:, k, 1] = (b[:, 0] - a[:, 0]) * inv2a
        self.basis_grads = grads
        edges = np.sort(np.concatenate([self.triangles[:, [0, 1]],
                                        self.triangles[:, [1, 2]],
                                        self.triangles[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise ValueError("non-conforming mesh: edge shared by >2 triangles")
        boundary_edges = uniq[counts == 1]
        flags = np.zeros(len(self.vertices), dtype=bool)
        flags[boundary_edges.ravel()] = True
        self.boundary_flags = flags
        lengths = np.hypot(*(self.vertices[uniq[:, 0]] - self.vertices[uniq[:, 1]]).T)
        self.h_max = float(lengths.max())
        self._edges = uniq

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def area(self):
        return float(self.areas.sum())

    def quadrature(self, degree=5):
        bary, w = quad_rule(degree)
        centers = np.einsum("kj,tjd->tkd", bary, self.vertices[self.triangles])
        weights = self.areas[:, None] * w[None, :]
        tri = np.repeat(np.arange(self.n_triangles), len(w))
        return QuadratureMeasure(centers.reshape(-1, 2), weights.ravel(), tri)

    def locate(self, points, tol=1e-12):
        """Triangle index and barycentric coordinates for each point.

        Brute-force over triangles; index -1 marks points outside the mesh.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tri_of = np.full(len(pts), -1, dtype=np.int64)
        bary_of = np.zeros((len(pts), 3))
        v0 = self.vertices[self.triangles[:, 0]]
        d1 = self.vertices[self.triangles[:, 1]] - v0
        d2 = self.vertices[self.triangles[:, 2]] - v0
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        for i, p in enumerate(pts):
            r = p - v0
            l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
            l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
            l0 = 1.0 - l1 - l2
            ok = (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)
            hits = np.flatnonzero(ok)
            if len(hits):
                t = hits[0]
                tri_of[i] = t
                bary_of[i] = (l0[t], l1[t], l2[t])
        return tri_of, bary_of

    def contains(self, points, tol=1e-12):
        tri_of, _ = self.locate(points, tol=tol)
        return tri_of >= 0


def structured_mesh(domain, n):
    """Triangulate a polygon.

    Axis-aligned rectangles get the regular n-by-n criss-cross grid
    ((n+1)^2 vertices, 2 n^2 triangles).  Other simple polygons are
    fan/ear-clip triangulated and uniformly refined until the longest
    edge drops below diameter/n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    verts = np.asarray(domain.vertices)
    if len(verts) == 4 and _is_axis_rectangle(verts):
        lo, hi = verts.min(axis=0), verts.max(axis=0)
        xs = np.linspace(lo[0], hi[0], n + 1)
        ys = np.linspace(lo[1], hi[1], n + 1)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        vertices = np.column_stack([gx.ravel(), gy.ravel()])
        tris = []
        for i in range(n):
            for j in range(n):
                a = i * (n + 1) + j
                b = (i + 1) * (n + 1) + j
                tris.append((a, b, a + 1))
                tris.append((b, b + 1, a + 1))
        return TriMesh(vertices, np.asarray(tris))
    mesh = _triangulate_polygon(verts)
    diam = np.max(np.hypot(*(verts[:, None, :] - verts[None, :, :]).reshape(-1, 2).T))
    while mesh.h_max > diam / n:
        mesh = refine(mesh)
    return mesh


def _is_axis_rectangle(verts):
    xs, ys = set(np.round(verts[:, 0], 14)), set(np.round(verts[:, 1], 14))
    return len(xs) == 2 and len(ys) == 2


def _triangulate_polygon(verts):
    poly = list(range(len(verts)))
    pts = np.asarray(verts, dtype=float)

    def cross(i, j, k):
        a, b, c = pts[i], pts[j], pts[k]
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    convex = all(cross(poly[i - 1], poly[i], poly[(i + 1) % len(poly)]) > 0
                 for i in range(len(poly)))
    if convex:
        # fan from the centroid: better-shaped triangles than an ear fan
        centroid = pts.mean(axis=0)
        vertices = np.vstack([pts, centroid])
        c = len(pts)
        tris = [(i, (i + 1) % len(pts), c) for i in range(len(pts))]
        return TriMesh(vertices, np.asarray(tris))
    # ear clipping for non-convex simple polygons
    tris = []
    guard = 0
    while len(poly) > 3:
        guard += 1
        if guard > 10000:
            raise ValueError("ear clipping failed (degenerate polygon?)")
        n = len(poly)
        for idx in range(n):
            i0, i1, i2 = poly[idx - 1], poly[idx], poly[(idx + 1) % n]
            if cross(i0, i1, i2) <= 0:
                continue
            ear = True
            for j in poly:
                if j in (i0, i1, i2):
                    continue
                l0 = cross(i0, i1, j)
                l1 = cross(i1, i2, j)
                l2 = cross(i2, i0, j)
                if l0 >= 0 and l1 >= 0 and l2 >= 0:
                    ear = False
                    break
            if ear:
                tris.append((i0, i1, i2))
                poly.pop(idx)
                break
        else:
            raise ValueError("ear clipping failed")
    tris.append(tuple(poly))
    return TriMesh(pts, np.asarray(tris))


def refine(mesh):
    """Regular 4-split of every triangle; parent vertices keep their index."""
    edge_mid = {}
    new_verts = [mesh.vertices]
    next_id = mesh.n_vertices
    mids = np.empty((mesh.n_triangles, 3), dtype=np.int64)
    mid_coords = []
    for t, tri in enumerate(mesh.triangles):
        for k in range(3):
            e = (min(tri[k], tri[(k + 1) % 3]), max(tri[k], tri[(k + 1) % 3]))
            if e not in edge_mid:
                edge_mid[e] = next_id
                mid_coords.append(0.5 * (mesh.vertices[e[0]] + mesh.vertices[e[1]]))
                next_id += 1
            mids[t, k] = edge_mid[e]
    vertices = np.vstack([mesh.vertices, np.asarray(mid_coords)])
    tris = np.empty((4 * mesh.n_triangles, 3), dtype=np.int64)
    a, b, c = mesh.triangles.T
    ab, bc, ca = mids.T
    tris[0::4] = np.column_stack([a, ab, ca])
    tris[1::4] = np.column_stack([ab, b, bc])
    tris[2::4] = np.column_stack([ca, bc, c])
    tris[3::4] = np.column_stack([ab, bc, ca])
    return TriMesh(vertices, tris)


@dataclass
class FeFunction:
    """Continuous piecewise-linear scalar field given by nodal values."""

    mesh: TriMesh
    nodal_values: np.ndarray

    def __post_init__(self):
        self.nodal_values = np.asarray(self.nodal_values, dtype=float)
        if len(self.nodal_values) != self.mesh.n_vertices:
            raise ValueError("nodal value count must match vertex count")

    def gradients(self):
        """Constant gradient per triangle, shape (n_triangles, 2)."""
        u = self.nodal_values[self.mesh.triangles]
        return np.einsum("tj,tjd->td", u, self.mesh.basis_grads)

    def at_quad(self, quad, bary=None):
        """Values at quadrature points using the recorded triangle indices."""
        tris = self.mesh.triangles[quad.tri_index]
        if bary is None:
            v = self.mesh.vertices[tris]
            bary = _barycentric(quad.points, v)
        return np.einsum("mj,mj->m", self.nodal_values[tris], bary)

    def __call__(self, points):
        tri_of, bary = self.mesh.locate(points)
        if np.any(tri_of < 0):
            raise ValueError("point outside mesh")
        return np.einsum("mj,mj->m",
                         self.nodal_values[self.mesh.triangles[tri_of]], bary)


def _barycentric(points, tri_verts):
    v0 = tri_verts[:, 0]
    d1 = tri_verts[:, 1] - v0
    d2 = tri_verts[:, 2] - v0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    r = points - v0
    l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


def gradient_on(tri_index, u):
    """Constant gradient of the P1 interpolant on one triangle."""
    tri = u.mesh.triangles[tri_index]
    return np.einsum("j,jd->d", u.nodal_values[tri], u.mesh.basis_grads[tri_index])


def interpolate(fn, mesh):
    """Nodal interpolation of a callable (x1, x2) -> value."""
    vals = np.asarray(fn(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float)
    vals = np.broadcast_to(vals, (mesh.n_vertices,)).copy()
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite vertex value in interpolation")
    return FeFunction(mesh, vals)


def integrate(fn, mesh, rule_degree=5):
    """Quadrature integral of a pointwise integrand over the mesh."""
    quad = mesh.quadrature(rule_degree)
    vals = np.asarray(fn(quad.points[:, 0], quad.points[:, 1]), dtype=float)
    vals = np.broadcast_to(vals, quad.weights.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite integrand")
    return float(np.dot(quad.weights, vals))


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center",
                           (float(self.center[0]), float(self.center[1])))

    @property
    def area(self):
        return np.pi * self.radius ** 2


def ball_quadrature(mesh, ball, depth=3, degree=5, check_containment=True):
    """Quadrature over the intersection of the mesh with a ball.

    Triangles crossing the circle are subdivided `depth` times; at the
    finest level quadrature points outside the ball are dropped.  Returns
    a QuadratureMeasure whose tri_index refers to the *parent* triangles,
    so P1 data can still be evaluated per parent.
    """
    c = np.asarray(ball.center)
    R = ball.radius
    if check_containment:
        ring = c + (R * np.column_stack([np.cos(t := np.linspace(0, 2 * np.pi, 17)[:-1]),
                                         np.sin(t)]))
        if not np.all(mesh.contains(ring, tol=mesh.h_max)):
            raise ValueError("ball escapes the meshed domain")
    bary, w = quad_rule(degree)
    verts = mesh.vertices[mesh.triangles]       # (T, 3, 2)
    d2 = np.sum((verts - c) ** 2, axis=2)
    all_in = np.all(d2 <= R * R, axis=1)
    # quick reject: triangle bounding circle entirely outside the ball
    centroids = verts.mean(axis=1)
    circum = np.max(np.linalg.norm(verts - centroids[:, None, :], axis=2), axis=1)
    far = np.linalg.norm(centroids - c, axis=1) > R + circum
    crossing = ~all_in & ~far

    pts_list, w_list, tri_list = [], [], []
    if np.any(all_in):
        idx = np.flatnonzero(all_in)
        centers = np.einsum("kj,tjd->tkd", bary, verts[idx])
        pts_list.append(centers.reshape(-1, 2))
        w_list.append((mesh.areas[idx, None] * w[None, :]).ravel())
        tri_list.append(np.repeat(idx, len(w)))

    if np.any(crossing):
        idx = np.flatnonzero(crossing)
        tv = verts[idx]
        parents = idx
        for _ in range(depth):
            tv, parents = _split4(tv, parents)
        areas = 0.5 * np.abs(
            (tv[:, 1, 0] - tv[:, 0, 0]) * (tv[:, 2, 1] - tv[:, 0, 1])
            - (tv[:, 1, 1] - tv[:, 0, 1]) * (tv[:, 2, 0] - tv[:, 0, 0]))
        centers = np.einsum("kj,tjd->tkd", bary, tv)
        wts = areas[:, None] * w[None, :]
        inside = np.sum((centers - c) ** 2, axis=2) <= R * R
        keep = inside.ravel()
        pts_list.append(centers.reshape(-1, 2)[keep])
        w_list.append(wts.ravel()[keep])
        tri_list.append(np.repeat(parents, len(w))[keep])

    if not pts_list:
        raise ValueError("ball does not intersect the mesh")
    return QuadratureMeasure(np.concatenate(pts_list),
                             np.concatenate(w_list),
                             np.concatenate(tri_list))


def _split4(tv, parents):
    m01 = 0.5 * (tv[:, 0] + tv[:, 1])
    m12 = 0.5 * (tv[:, 1] + tv[:, 2])
    m20 = 0.5 * (tv[:, 2] + tv[:, 0])
    out = np.concatenate([
        np.stack([tv[:, 0], m01, m20], axis=1),
        np.stack([m01, tv[:, 1], m12], axis=1),
        np.stack([m20, m12, tv[:, 2]], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])
    return out, np.concatenate([parents] * 4)


def ball_average(u, ball, depth=3, degree=5):
    """Mean of a P1 function over a ball, normalized by pi R^2."""
    quad = ball_quadrature(u.mesh, ball, depth=depth, degree=degree)
    vals = u.at_quad(quad)
    return float(np.dot(quad.weights, vals) / ball.area)


def write_vtk(path, mesh, point_data=None, cell_data=None, comment="multiphase"):
    """Legacy ASCII VTK export of the mesh with named scalar/vector data.

    point_data: {name: (n_vertices,) array}; cell_data: {name: (n_tri, 2)
    vector arrays or (n_tri,) scalars}.
    """
    lines = ["# vtk DataFile Version 3.0", comment, "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g} 0")
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines.extend(["5"] * mesh.n_triangles)
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, vals in point_data.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.17g}" for v in np.asarray(vals))
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_triangles}")
        for name, vals in cell_data.items():
            vals = np.asarray(vals)
            if vals.ndim == 2:
                lines.append(f"VECTORS {name} double")
                lines.extend(f"{v[0]:.17g} {v[1]:.17g} 0" for v in vals)
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.17g}" for v in vals)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
