"""
Oriented triangle meshes with boundary on the wall {x_3 = 0}, and their
OFF/NOFF/OBJ file formats
"""
import logging
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse

from ..errors import MeshError
from ..sphere import unit

logger = logging.getLogger(__name__)

WALL_TOL = 1e-12
DEGENERATE_AREA_FACTOR = 1e-14


class CapillaryMesh:
    """
    Immutable triangle mesh. Boundary edges with both endpoints on the plane
    form the wetted boundary (the "wall"); any other boundary edges are
    truncation cuts of a larger surface sample, and their vertices are held
    fixed by every variational computation.

    `normals` optionally carries exact per-vertex unit normals (generators
    know them in closed form); otherwise angle-weighted face normals are used.
    """

    def __init__(self, vertices, triangles, normals=None, validate=True):
        vertices = np.array(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must have shape (N, 3), got {vertices.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError(f"triangles must have shape (M, 3), got {triangles.shape}")
        if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle index out of range")
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        self.vertices = vertices
        self.triangles = triangles
        if normals is not None:
            normals = np.array(normals, dtype=float)
            if normals.shape != vertices.shape:
                raise MeshError("normals must have the same shape as vertices")
            normals.setflags(write=False)
        self.exact_normals = normals

        if validate:
            self.check_invariants()

    def __repr__(self):
        return (
            f"CapillaryMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces},"
            f" n_boundary_loops={len(self.boundary_loops)})"
        )

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.triangles)

    def with_vertices(self, vertices, normals=None, validate=False):
        """
        New mesh with the same connectivity
        """
        return CapillaryMesh(vertices, self.triangles, normals=normals, validate=validate)

    @cached_property
    def bbox_diagonal(self):
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    @cached_property
    def face_vectors(self):
        """
        N_f = (b - a) x (c - a) / 2, the area-weighted face normal
        """
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.cross(b - a, c - a)

    @cached_property
    def face_areas(self):
        return np.linalg.norm(self.face_vectors, axis=-1)

    @cached_property
    def face_normals(self):
        return self.face_vectors / self.face_areas[:, None]

    @cached_property
    def vertex_areas(self):
        """
        Barycentric (lumped) area per vertex
        """
        areas = np.zeros(self.n_vertices)
        for i in range(3):
            np.add.at(areas, self.triangles[:, i], self.face_areas / 3.0)
        return areas

    @cached_property
    def angle_weighted_normals(self):
        normals = np.zeros_like(self.vertices)
        V = self.vertices
        for i in range(3):
            a = self.triangles[:, i]
            b = self.triangles[:, (i + 1) % 3]
            c = self.triangles[:, (i + 2) % 3]
            e1 = unit(V[b] - V[a])
            e2 = unit(V[c] - V[a])
            angle = np.arccos(np.clip(np.sum(e1 * e2, axis=-1), -1.0, 1.0))
            np.add.at(normals, a, angle[:, None] * self.face_normals)
        return unit(normals)

    @property
    def vertex_normals(self):
        if self.exact_normals is not None:
            return self.exact_normals
        return self.angle_weighted_normals

    @cached_property
    def half_edges(self):
        t = self.triangles
        return np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])

    @cached_property
    def edges(self):
        """
        Unique undirected edges as sorted pairs
        """
        return np.unique(np.sort(self.half_edges, axis=1), axis=0)

    @cached_property
    def boundary_half_edges(self):
        he = self.half_edges
        n = self.n_vertices
        keys = he[:, 0] * n + he[:, 1]
        reverse = he[:, 1] * n + he[:, 0]
        return he[~np.isin(reverse, keys)]

    @cached_property
    def boundary_loops(self):
        """
        Ordered vertex cycles, following boundary half-edges (surface to the
        left, counterclockwise from +E3 on caps with outward normals)
        """
        nxt = {}
        for a, b in self.boundary_half_edges:
            if a in nxt:
                raise MeshError(f"boundary vertex {a} is not manifold")
            nxt[int(a)] = int(b)
        loops = []
        remaining = set(nxt)
        while remaining:
            start = min(remaining)
            loop = [start]
            remaining.discard(start)
            v = nxt[start]
            while v != start:
                if v not in remaining:
                    raise MeshError("boundary half-edges do not form closed cycles")
                loop.append(v)
                remaining.discard(v)
                v = nxt[v]
            loops.append(np.array(loop))
        return loops

    @property
    def is_closed(self):
        return len(self.boundary_half_edges) == 0

    @cached_property
    def wall_edge_mask(self):
        he = self.boundary_half_edges
        z = np.abs(self.vertices[:, 2])
        return (z[he[:, 0]] <= WALL_TOL) & (z[he[:, 1]] <= WALL_TOL)

    @property
    def wall_half_edges(self):
        return self.boundary_half_edges[self.wall_edge_mask]

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_half_edges.ravel()] = True
        return mask

    @cached_property
    def cut_mask(self):
        """
        Vertices on truncation boundary edges (including the corners where a
        cut meets the wall); these are held fixed
        """
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_half_edges[~self.wall_edge_mask].ravel()] = True
        return mask

    @cached_property
    def wall_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.wall_half_edges.ravel()] = True
        return mask & ~self.cut_mask

    @property
    def interior_mask(self):
        return ~self.boundary_mask

    @property
    def free_mask(self):
        return ~self.cut_mask

    @cached_property
    def adjacency(self):
        e = self.edges
        n = self.n_vertices
        A = scipy.sparse.coo_matrix(
            (np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
            shape=(n, n),
        )
        return A.tocsr()

    def rings(self, k):
        """
        For every vertex the indices of its k-ring neighbourhood (itself
        excluded)
        """
        eye = scipy.sparse.identity(self.n_vertices, format="csr")
        step = (self.adjacency + eye).tocsr()
        reach = eye
        for _ in range(k):
            reach = (reach @ step).tocsr()
            reach.data[:] = 1.0
        reach = reach.tolil()
        return [np.array([j for j in row if j != i]) for i, row in enumerate(reach.rows)]

    @cached_property
    def edge_lengths(self):
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=-1)

    @property
    def mean_edge_length(self):
        return float(np.mean(self.edge_lengths))

    @cached_property
    def triangle_quality(self):
        """
        4 sqrt(3) A / sum of squared edge lengths (1 for equilateral)
        """
        V = self.vertices
        t = self.triangles
        l2 = sum(
            np.sum((V[t[:, (i + 1) % 3]] - V[t[:, i]]) ** 2, axis=-1) for i in range(3)
        )
        return 4.0 * np.sqrt(3.0) * self.face_areas / l2

    @property
    def total_area(self):
        return float(np.sum(self.face_areas))

    def check_invariants(self):
        """
        Manifold with consistent orientation, no degenerate triangles or
        isolated vertices, and (for open meshes) wetted boundary on the plane
        with the remaining vertices in the upper half-space and interior
        vertices strictly above the plane
        """
        if self.n_faces == 0:
            raise MeshError("mesh has no triangles")
        he = self.half_edges
        n = self.n_vertices
        keys = he[:, 0] * n + he[:, 1]
        if len(np.unique(keys)) != len(keys):
            raise MeshError("inconsistent orientation: a directed edge appears twice")
        und = np.sort(he, axis=1)
        _, counts = np.unique(und[:, 0] * n + und[:, 1], return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")

        used = np.zeros(n, dtype=bool)
        used[self.triangles.ravel()] = True
        if not np.all(used):
            raise MeshError(f"isolated vertex {int(np.argmin(used))}")

        min_area = DEGENERATE_AREA_FACTOR * self.bbox_diagonal**2
        if np.any(self.face_areas < min_area):
            i = int(np.argmin(self.face_areas))
            raise MeshError(
                f"degenerate triangle {i} with area {self.face_areas[i]:.3e}"
                f" < {min_area:.3e}"
            )

        # forces the loop walk, which validates boundary manifoldness
        self.boundary_loops
        if not self.is_closed:
            below = self.vertices[:, 2] < -WALL_TOL
            if np.any(below):
                raise MeshError(
                    f"{int(np.sum(below))} vertices lie below the plane x_3 = 0"
                )
            on_plane = self.interior_mask & (self.vertices[:, 2] <= WALL_TOL)
            if np.any(on_plane):
                raise MeshError(
                    f"{int(np.sum(on_plane))} interior vertices lie on the plane x_3 = 0"
                )
            if not np.any(self.wall_edge_mask):
                logger.warning("open mesh without any boundary edge on the plane")

    def to_dict(self):
        d = dict(
            vertices=self.vertices.tolist(),
            triangles=self.triangles.tolist(),
        )
        if self.exact_normals is not None:
            d["normals"] = self.exact_normals.tolist()
        return d


def _snap_to_plane(vertices):
    vertices = np.array(vertices, dtype=float)
    vertices[np.abs(vertices[:, 2]) <= WALL_TOL, 2] = 0.0
    return vertices


def _data_lines(fh):
    for line in fh:
        line = line.split("#")[0].strip()
        if line:
            yield line


def read_off(filepath):
    """
    Read an ASCII OFF file, or NOFF with per-vertex normals
    """
    with open(filepath) as fh:
        lines = _data_lines(fh)
        try:
            header = next(lines)
            with_normals = header.startswith("NOFF")
            if header not in ("OFF", "NOFF"):
                raise MeshError(f"{filepath} is not an OFF file (header `{header}`)")
            n_v, n_f, _ = (int(v) for v in next(lines).split())
            rows = [np.array(next(lines).split(), dtype=float) for _ in range(n_v)]
            faces = []
            for _ in range(n_f):
                parts = [int(v) for v in next(lines).split()]
                if parts[0] != 3:
                    raise MeshError("only triangle faces are supported")
                faces.append(parts[1:4])
        except StopIteration:
            raise MeshError(f"{filepath} ended before all vertices and faces were read")

    data = np.array(rows)
    vertices = _snap_to_plane(data[:, :3])
    normals = data[:, 3:6] if with_normals else None
    return CapillaryMesh(vertices, faces, normals=normals)


def write_off(mesh, filepath, with_normals=None):
    if with_normals is None:
        with_normals = mesh.exact_normals is not None
    lines = ["NOFF" if with_normals else "OFF"]
    lines.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
    for i, v in enumerate(mesh.vertices):
        row = " ".join(repr(float(x)) for x in v)
        if with_normals:
            row += " " + " ".join(repr(float(x)) for x in mesh.vertex_normals[i])
        lines.append(row)
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    Path(filepath).parent.mkdir(exist_ok=True, parents=True)
    Path(filepath).write_text("\n".join(lines) + "\n")


def read_obj(filepath):
    vertices, normals, faces = [], [], []
    with open(filepath) as fh:
        for line in _data_lines(fh):
            parts = line.split()
            if parts[0] == "v":
                vertices.append([float(v) for v in parts[1:4]])
            elif parts[0] == "vn":
                normals.append([float(v) for v in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise MeshError("only triangle faces are supported")
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if len(normals) != len(vertices):
        normals = None
    return CapillaryMesh(_snap_to_plane(vertices), faces, normals=normals)


def write_obj(mesh, filepath):
    lines = [f"v {v[0]!r} {v[1]!r} {v[2]!r}" for v in mesh.vertices.tolist()]
    if mesh.exact_normals is not None:
        lines += [f"vn {n[0]!r} {n[1]!r} {n[2]!r}" for n in mesh.exact_normals.tolist()]
        lines += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in mesh.triangles]
    else:
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(filepath).parent.mkdir(exist_ok=True, parents=True)
    Path(filepath).write_text("\n".join(lines) + "\n")


def load_mesh(filepath):
    filepath = Path(filepath)
    if filepath.suffix == ".off":
        return read_off(filepath)
    elif filepath.suffix == ".obj":
        return read_obj(filepath)
    raise NotImplementedError(filepath.suffix)


def save_mesh(mesh, filepath):
    filepath = Path(filepath)
    if filepath.suffix == ".off":
        write_off(mesh, filepath)
    elif filepath.suffix == ".obj":
        write_obj(mesh, filepath)
    else:
        raise NotImplementedError(filepath.suffix)


def enclosed_volume(mesh):
    """
    V = (1/3) int <x, nu> dA, the signed volume between the surface and the
    plane x_3 = 0 (the lid contributes nothing)
    """
    a, b, c = (mesh.vertices[mesh.triangles[:, i]] for i in range(3))
    return float(np.sum(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0)


def volume_gradient(mesh):
    """
    Gradient of `enclosed_volume` with respect to every vertex position
    """
    V = mesh.vertices
    t = mesh.triangles
    grad = np.zeros_like(V)
    for i in range(3):
        a = t[:, i]
        b = t[:, (i + 1) % 3]
        c = t[:, (i + 2) % 3]
        np.add.at(grad, a, np.cross(V[b], V[c]) / 6.0)
    return grad
