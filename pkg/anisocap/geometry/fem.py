"""
Piecewise linear (P1) finite element matrices on triangle meshes
"""
import numpy as np
import scipy.sparse
import scipy.sparse.linalg


def hat_gradients(mesh):
    """
    Gradients of the three P1 basis functions on every face, shape (M, 3, 3)
    """
    V = mesh.vertices
    t = mesh.triangles
    n = mesh.face_normals
    two_area = 2.0 * mesh.face_areas[:, None]
    grads = np.empty((mesh.n_faces, 3, 3))
    for i in range(3):
        b = V[t[:, (i + 1) % 3]]
        c = V[t[:, (i + 2) % 3]]
        grads[:, i] = np.cross(n, c - b) / two_area
    return grads


def _scatter(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return scipy.sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness_matrix(mesh, AF=None):
    """
    P1 stiffness int <A grad f, grad g> dA with A constant per face;
    identity-on-tangent-plane when `AF` is None
    """
    G = hat_gradients(mesh)
    if AF is None:
        local = np.einsum("fai,fbi->fab", G, G)
    else:
        local = np.einsum("fai,fij,fbj->fab", G, AF, G)
    return _scatter(mesh, local * mesh.face_areas[:, None, None])


def mass_matrix(mesh):
    local = np.full((3, 3), 1.0 / 12.0) + np.eye(3) / 12.0
    return _scatter(mesh, mesh.face_areas[:, None, None] * local[None])


def sobolev_length2(mesh):
    """
    Squared length scale Area / 4 pi of the H^1 metric, the unit-sphere
    radius for a sphere of the same area
    """
    return float(mesh.total_area / (4.0 * np.pi))


def sobolev_matrix(mesh, length2=None):
    """
    S = M + l^2 K, the P1 matrix of the H^1 inner product at length scale l
    """
    if length2 is None:
        length2 = sobolev_length2(mesh)
    return (mass_matrix(mesh) + length2 * stiffness_matrix(mesh)).tocsc()


class SobolevSolver:
    """
    Factorized S restricted to the vertices not in `fixed`; solutions vanish
    on the fixed vertices
    """

    def __init__(self, S, fixed):
        fixed = np.asarray(fixed, dtype=bool)
        self.free = np.flatnonzero(~fixed)
        self.n = S.shape[0]
        S_ff = S[self.free][:, self.free].tocsc()
        self._lu = scipy.sparse.linalg.splu(S_ff) if len(self.free) else None

    def solve(self, rhs):
        out = np.zeros(self.n)
        if self._lu is not None:
            out[self.free] = self._lu.solve(np.asarray(rhs, dtype=float)[self.free])
        return out
