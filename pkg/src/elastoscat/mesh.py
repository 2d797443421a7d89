"""Closed triangulated surfaces used as reference bodies."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

__all__ = [
    "SurfaceMesh",
    "icosphere",
    "cube",
    "ellipsoid",
    "builtin_mesh",
    "read_mesh",
    "write_mesh",
]


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Triangle mesh of a closed surface with outward winding.

    Attributes
    ----------
    vertices : (nv, 3) float array
    triangles : (nt, 3) int array of 0-based vertex indices
    shape : label of the generator ("sphere", "cube", ...) or "file"
    level : refinement level used by the generator
    """

    vertices: np.ndarray
    triangles: np.ndarray
    shape: str = "custom"
    level: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must have shape (nv, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must have shape (nt, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    # geometry -------------------------------------------------------------
    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def corners(self) -> np.ndarray:
        """(nt, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    @property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @property
    def _cross(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @property
    def normals(self) -> np.ndarray:
        n = self._cross
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @property
    def h(self) -> float:
        """Mesh size: the longest triangle edge."""
        c = self.corners
        e = np.concatenate([c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]])
        return float(np.linalg.norm(e, axis=1).max())

    @property
    def diameter(self) -> float:
        v = self.vertices
        if len(v) > 64:
            v = v[ConvexHull(v).vertices]
        return float(pdist(v).max())

    def signed_volume(self) -> float:
        c = self.corners
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6)

    def validate(self) -> None:
        """Raise ValueError unless the surface is closed and outward oriented."""
        t = self.triangles
        if len(t) == 0:
            raise ValueError("empty mesh")
        if np.any(self.areas <= 0):
            raise ValueError("degenerate triangle with zero area")
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und = np.sort(directed, axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        if np.any(counts != 2):
            raise ValueError("surface is not closed: some edge is not shared by exactly two triangles")
        _, dcounts = np.unique(directed, axis=0, return_counts=True)
        if np.any(dcounts != 1):
            raise ValueError("inconsistent winding: a directed edge appears twice")
        if self.signed_volume() <= 0:
            raise ValueError("winding is inward (negative enclosed volume)")
        if self.diameter <= 0:
            raise ValueError("mesh diameter must be positive")

    # transforms -----------------------------------------------------------
    def _with_vertices(self, v) -> "SurfaceMesh":
        return SurfaceMesh(v, self.triangles, self.shape, self.level, dict(self.metadata))

    def rotated(self, r) -> "SurfaceMesh":
        """Apply the orthogonal matrix ``r`` to every node.

        Improper transforms (det r = -1) reverse the winding so the surface
        stays outward oriented.
        """
        r = np.asarray(r, dtype=float)
        tris = self.triangles if np.linalg.det(r) > 0 else self.triangles[:, ::-1].copy()
        return SurfaceMesh(self.vertices @ r.T, tris, self.shape, self.level, dict(self.metadata))

    def scaled(self, s: float) -> "SurfaceMesh":
        return self._with_vertices(self.vertices * float(s))

    def translated(self, shift) -> "SurfaceMesh":
        return self._with_vertices(self.vertices + np.asarray(shift, dtype=float))


# generators ---------------------------------------------------------------


def _icosahedron():
    g = (1 + 5**0.5) / 2
    v = np.array(
        [
            [-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
            [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
            [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(v, f):
    """Split each triangle into four, sharing midpoints between neighbours."""
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    m = inv.reshape(3, -1).T + len(v)
    a, b, c = f.T
    ab, bc, ca = m.T
    nf = np.concatenate(
        [
            np.stack([a, ab, ca], 1),
            np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1),
            np.stack([ab, bc, ca], 1),
        ]
    )
    return np.vstack([v, mid]), nf


def icosphere(level: int, radius: float = 1.0) -> SurfaceMesh:
    """Geodesic sphere with ``20 * 4**level`` triangles."""
    if level < 0:
        raise ValueError("level must be non-negative")
    v, f = _icosahedron()
    for _ in range(level):
        v, f = _subdivide(v, f)
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
    return SurfaceMesh(radius * v, f, "sphere", level, {"radius": radius})


def cube(n: int, edge: float = 1.0) -> SurfaceMesh:
    """Surface of an axis-aligned cube centred at the origin.

    Each face carries an ``n x n`` grid of squares, each cut along the same
    diagonal, so the mesh has ``12 n**2`` triangles.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    s = np.linspace(-0.5, 0.5, n + 1)
    verts = []
    tris = []
    offset = 0
    for axis in range(3):
        for sign in (-1.0, 1.0):
            u_ax, v_ax = [k for k in range(3) if k != axis]
            uu, vv = np.meshgrid(s, s, indexing="ij")
            p = np.zeros((n + 1, n + 1, 3))
            p[..., axis] = 0.5 * sign
            p[..., u_ax] = uu
            p[..., v_ax] = vv
            verts.append(p.reshape(-1, 3))
            idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1) + offset
            i00, i10 = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
            i01, i11 = idx[:-1, 1:].ravel(), idx[1:, 1:].ravel()
            t = np.concatenate([np.stack([i00, i10, i11], 1), np.stack([i00, i11, i01], 1)])
            # (u, v, axis) right-handed means the natural winding points along +axis
            right_handed = (u_ax, v_ax, axis) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
            if right_handed != (sign > 0):
                t = t[:, [0, 2, 1]]
            tris.append(t)
            offset += (n + 1) ** 2
    v = np.vstack(verts)
    f = np.vstack(tris)
    # merge duplicated edge/corner nodes
    key = np.round(v * (2 * n), 6)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    v = v[first]
    f = inv.ravel()[f]
    return SurfaceMesh(v * edge, f, "cube", n, {"edge": edge})


def ellipsoid(axes=(2.0, 1.0, 1.0), level: int = 3, diameter: float | None = None) -> SurfaceMesh:
    """Icosphere stretched to semi-axes proportional to ``axes``.

    With ``diameter`` given, the axes are rescaled so the longest axis spans it.
    """
    axes = np.asarray(axes, dtype=float)
    if axes.shape != (3,) or np.any(axes <= 0):
        raise ValueError("axes must be three positive numbers")
    if diameter is not None:
        axes = axes * (diameter / (2 * axes.max()))
    s = icosphere(level)
    return SurfaceMesh(s.vertices * axes, s.triangles, "ellipsoid", level, {"axes": axes.tolist()})


def builtin_mesh(name: str, level: int, **kw) -> SurfaceMesh:
    """Unit-diameter built-in shapes keyed by name.

    ``level`` is the subdivision level for spheres and ellipsoids and the
    number of squares per cube edge is ``2**level``.
    """
    if name == "sphere":
        return icosphere(level, radius=0.5)
    if name == "cube":
        # unit diameter: edge * sqrt(3) = 1
        return cube(2**level, edge=1 / np.sqrt(3))
    if name == "ellipsoid":
        return ellipsoid(kw.get("axes", (2.0, 1.0, 1.0)), level, diameter=1.0)
    raise ValueError(f"unknown builtin shape {name!r}; expected sphere, cube or ellipsoid")


# ASCII io -----------------------------------------------------------------


def write_mesh(mesh: SurfaceMesh, path) -> None:
    """Write ``nv nt`` then vertex and triangle lines; floats round-trip exactly."""
    lines = [f"{len(mesh.vertices)} {len(mesh.triangles)}"]
    lines += [" ".join(repr(float(c)) for c in p) for p in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in t) for t in mesh.triangles]
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_mesh(path, shape: str = "file", level: int = 0) -> SurfaceMesh:
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    try:
        nv, nt = (int(x) for x in rows[0])
        v = np.array([[float(x) for x in r] for r in rows[1 : 1 + nv]])
        t = np.array([[int(x) for x in r] for r in rows[1 + nv : 1 + nv + nt]], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed mesh file {path}: {exc}") from exc
    if v.shape != (nv, 3) or t.shape != (nt, 3):
        raise ValueError(f"malformed mesh file {path}: header says {nv} vertices, {nt} triangles")
    return SurfaceMesh(v, t, shape, level)
