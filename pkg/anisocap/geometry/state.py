"""
Pointwise geometric state of a capillary surface: normals, shape operators,
anisotropic curvatures and the boundary frame along the contact line
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import xarray as xr

from ..errors import MeshError, TransversalityError
from ..sphere import E3, tangent_frame

logger = logging.getLogger(__name__)

TRANSVERSALITY_TOL = 1e-6
# wall normal of the half-space container
NBAR = -E3
CURVATURE_METHODS = ("auto", "quadric", "cahn-hoffman")


@dataclass
class GeometricState:
    """
    Per-vertex (or per-node) arrays. Shape operators are stored as ambient
    3x3 matrices acting on the tangent plane (h3 = E S E^T for a tangent
    frame E), so h_F = A_F h3 is the anisotropic Weingarten map. Boundary
    quantities are indexed by `boundary_index`
    """

    positions: np.ndarray
    normals: np.ndarray
    h: np.ndarray
    AF: np.ndarray
    F: np.ndarray
    nu_F: np.ndarray
    areas: np.ndarray
    omega0: float
    EF: np.ndarray
    boundary_index: np.ndarray
    T: np.ndarray
    mu: np.ndarray
    boundary_weights: np.ndarray = None

    @property
    def hF(self):
        return self.AF @ self.h

    @property
    def H(self):
        return np.trace(self.h, axis1=-2, axis2=-1)

    @property
    def H_F(self):
        return np.trace(self.hF, axis1=-2, axis2=-1)

    @property
    def trace_hF2(self):
        W = self.hF
        return np.trace(W @ W, axis1=-2, axis2=-1)

    @property
    def trace_AF_h2(self):
        return np.trace(self.AF @ self.h @ self.h, axis1=-2, axis2=-1)

    @property
    def support(self):
        """
        <x, nu>
        """
        return np.sum(self.positions * self.normals, axis=-1)

    @property
    def psi(self):
        """
        F(nu) + omega0 <EF, nu>
        """
        return self.F + self.omega0 * (self.normals @ self.EF)

    # boundary frame

    @property
    def nu_b(self):
        return self.normals[self.boundary_index]

    @property
    def nubar(self):
        return np.cross(self.T, E3)

    @property
    def mu_F(self):
        i = self.boundary_index
        a = np.sum(self.nu_F[i] * self.mu, axis=-1)
        return self.F[i, None] * self.mu - a[:, None] * self.normals[i]

    @property
    def capillary_residual(self):
        return -self.nu_F[self.boundary_index, 2] - self.omega0

    @property
    def hF_mumu(self):
        W = self.hF[self.boundary_index]
        return np.einsum("ni,nij,nj->n", self.mu, W, self.mu)

    @property
    def principal_residual(self):
        """
        h_F(T, mu) on the contact line; vanishes when the contact line is an
        anisotropic principal direction
        """
        W = self.hF[self.boundary_index]
        return np.einsum("ni,nij,nj->n", self.mu, W, self.T)

    @property
    def q_F(self):
        return -(self.nu_b[:, 2] / self.mu[:, 2]) * self.hF_mumu

    @property
    def q_F_alt(self):
        """
        (omega0 / mu_3 + <nu_F, mu>) h_F(mu, mu) / F(nu), equal to `q_F` when
        the capillary condition holds
        """
        i = self.boundary_index
        a = np.sum(self.nu_F[i] * self.mu, axis=-1)
        return (self.omega0 / self.mu[:, 2] + a) * self.hF_mumu / self.F[i]

    def camc_residual(self):
        """
        sup |H_F - mean H_F| over vertices off the contact line, the mean
        taken with the vertex areas
        """
        mask = np.ones(len(self.H_F), dtype=bool)
        mask[self.boundary_index] = False
        if not np.any(mask):
            return 0.0
        HF = self.H_F[mask]
        mean = np.sum(HF * self.areas[mask]) / np.sum(self.areas[mask])
        return float(np.max(np.abs(HF - mean)))

    def frame_residual(self):
        """
        Largest violation of the four frame relations between (nu, mu) and
        (Nbar, nubar) along the contact line
        """
        if len(self.boundary_index) == 0:
            return 0.0
        nu, mu, nb = self.nu_b, self.mu, self.nubar
        c = nu @ NBAR
        m = mu @ NBAR
        s = np.sum(nu * nb, axis=-1)
        res = [
            mu - (-c[:, None] * nb + m[:, None] * NBAR),
            nu - (s[:, None] * nb + c[:, None] * NBAR),
            nb - (s[:, None] * nu - c[:, None] * mu),
            NBAR - (c[:, None] * nu + m[:, None] * mu),
        ]
        return float(max(np.max(np.abs(r)) for r in res))

    def conormal_identity_residual(self):
        """
        Largest violation of <mu_F, nubar> = -<nu_F, Nbar> and
        <mu_F, Nbar> = <nu_F, nubar>
        """
        if len(self.boundary_index) == 0:
            return 0.0
        muF = self.mu_F
        nuF = self.nu_F[self.boundary_index]
        nb = self.nubar
        r1 = np.sum(muF * nb, axis=-1) + nuF @ NBAR
        r2 = muF @ NBAR - np.sum(nuF * nb, axis=-1)
        return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))

    def to_dataset(self):
        ds = xr.Dataset(
            dict(
                position=(("vertex", "xyz"), self.positions),
                normal=(("vertex", "xyz"), self.normals),
                area=(("vertex",), self.areas),
                F=(("vertex",), self.F),
                H=(("vertex",), self.H),
                H_F=(("vertex",), self.H_F),
                trace_hF2=(("vertex",), self.trace_hF2),
                trace_AF_h2=(("vertex",), self.trace_AF_h2),
                boundary_vertex=(("boundary",), self.boundary_index),
                mu=(("boundary", "xyz"), self.mu),
                q_F=(("boundary",), self.q_F),
                principal_residual=(("boundary",), self.principal_residual),
                capillary_residual=(("boundary",), self.capillary_residual),
            ),
            coords=dict(xyz=["x", "y", "z"]),
        )
        ds.attrs["omega0"] = self.omega0
        return ds

    def to_dict(self):
        return dict(
            omega0=self.omega0,
            normal=self.normals.tolist(),
            H=self.H.tolist(),
            H_F=self.H_F.tolist(),
            trace_hF2=self.trace_hF2.tolist(),
            trace_AF_h2=self.trace_AF_h2.tolist(),
            boundary_vertex=self.boundary_index.tolist(),
            mu=self.mu.tolist(),
            q_F=self.q_F.tolist(),
            q_F_alt=self.q_F_alt.tolist(),
            capillary_residual=self.capillary_residual.tolist(),
        )

    def to_json(self, filepath):
        Path(filepath).write_text(json.dumps(self.to_dict(), sort_keys=True))


def boundary_tangent(normals, chords):
    """
    Unit tangent of the contact line, T = ±(E3 x nu)/|E3 x nu| oriented
    along `chords`
    """
    T = np.cross(E3, normals)
    norm = np.linalg.norm(T, axis=-1)
    if np.any(norm < TRANSVERSALITY_TOL):
        raise TransversalityError(
            "the surface normal is vertical on the contact line, so the"
            " surface does not meet the wall transversally"
        )
    T = T / norm[:, None]
    sign = np.sign(np.sum(T * chords, axis=-1))
    sign[sign == 0.0] = 1.0
    return T * sign[:, None]


def make_state(positions, normals, h3, aniso, config, areas, boundary_index, chords,
               boundary_weights=None):
    """
    Assemble a `GeometricState` from normals and shape operators computed by
    either backend
    """
    boundary_index = np.asarray(boundary_index, dtype=np.int64)
    AF = aniso.hessian(normals)
    AF = 0.5 * (AF + np.swapaxes(AF, -1, -2))
    if len(boundary_index):
        T = boundary_tangent(normals[boundary_index], chords)
        mu = np.cross(T, normals[boundary_index])
        if np.any(np.abs(mu[:, 2]) < TRANSVERSALITY_TOL):
            raise TransversalityError(
                f"|<mu, Nbar>| < {TRANSVERSALITY_TOL} at a contact-line vertex"
            )
    else:
        T = np.zeros((0, 3))
        mu = np.zeros((0, 3))
    return GeometricState(
        positions=np.asarray(positions, dtype=float),
        normals=normals,
        h=h3,
        AF=AF,
        F=aniso.value(normals),
        nu_F=aniso.gradient(normals),
        areas=areas,
        omega0=config.omega0,
        EF=config.EF,
        boundary_index=boundary_index,
        T=T,
        mu=mu,
        boundary_weights=boundary_weights,
    )


def _fit_design(u, v, cubic):
    cols = [0.5 * u**2, u * v, 0.5 * v**2, u, v]
    if cubic:
        cols += [u**3, u**2 * v, u * v**2, v**3]
    return np.stack(cols, axis=-1)


def shape_operators(mesh, normals=None):
    """
    Per-vertex shape operator from a least-squares fit of the height function
    w = a u^2/2 + b u v + c v^2/2 + d u + e v over the two-ring in the tangent
    frame (three-ring plus cubic terms at boundary vertices). Returns ambient
    3x3 operators with h(X, Y) = <dnu(X), Y>
    """
    if normals is None:
        normals = mesh.vertex_normals
    t1, t2 = tangent_frame(normals)
    two_ring = mesh.rings(2)
    three_ring = mesh.rings(3) if np.any(mesh.boundary_mask) else None
    h3 = np.zeros((mesh.n_vertices, 3, 3))
    V = mesh.vertices
    for i in range(mesh.n_vertices):
        boundary = mesh.boundary_mask[i]
        nbrs = three_ring[i] if boundary else two_ring[i]
        d = V[nbrs] - V[i]
        u, v, w = d @ t1[i], d @ t2[i], d @ normals[i]
        A = _fit_design(u, v, cubic=boundary)
        if len(nbrs) < A.shape[1]:
            A = _fit_design(u, v, cubic=False)
        if len(nbrs) < A.shape[1]:
            raise MeshError(f"vertex {i} has too few neighbours for a quadric fit")
        coef, *_ = np.linalg.lstsq(A, w, rcond=None)
        a, b, c = coef[:3]
        S = -np.array([[a, b], [b, c]])
        E = np.stack([t1[i], t2[i]], axis=1)
        h3[i] = E @ S @ E.T
    return h3


def cahn_hoffman_operators(mesh, aniso, normals):
    """
    Per-vertex shape operator recovered from the tangential derivative of the
    Cahn-Hoffman field nu_F = Phi(nu). The fit uses the same quadratic
    design as `shape_operators`, applied to nu_F over the two-ring; h_F is its
    linear part and h = A_F^-1 h_F on the tangent plane, symmetrised. Exact
    (up to roundoff) on Wulff shapes, where nu_F = x - omega0 E3
    """
    t1, t2 = tangent_frame(normals)
    nu_F = aniso.gradient(normals)
    AF = aniso.hessian(normals)
    AF = 0.5 * (AF + np.swapaxes(AF, -1, -2))
    two_ring = mesh.rings(2)
    h3 = np.zeros((mesh.n_vertices, 3, 3))
    V = mesh.vertices
    for i in range(mesh.n_vertices):
        nbrs = two_ring[i]
        E = np.stack([t1[i], t2[i]], axis=1)
        d = V[nbrs] - V[i]
        u, v = d @ t1[i], d @ t2[i]
        A = _fit_design(u, v, cubic=False)
        if len(nbrs) < A.shape[1]:
            A = A[:, 3:]
        if len(nbrs) < A.shape[1]:
            raise MeshError(f"vertex {i} has too few neighbours for a Cahn-Hoffman fit")
        dnuF = (nu_F[nbrs] - nu_F[i]) @ E
        coef, *_ = np.linalg.lstsq(A, dnuF, rcond=None)
        # columns of L are dnu_F(t1), dnu_F(t2) in the tangent frame
        L = coef[-2:].T
        S = np.linalg.solve(E.T @ AF[i] @ E, L)
        h3[i] = E @ (0.5 * (S + S.T)) @ E.T
    return h3


def wall_chords(mesh, index):
    """
    Sum of the wall edge vectors incident to each vertex in `index`, giving
    the direction of travel along the contact line
    """
    chords = np.zeros_like(mesh.vertices)
    he = mesh.wall_half_edges
    d = mesh.vertices[he[:, 1]] - mesh.vertices[he[:, 0]]
    np.add.at(chords, he[:, 0], d)
    np.add.at(chords, he[:, 1], d)
    return chords[index]


def contact_line_vertices(mesh):
    """
    Vertices on wall edges, including corners where the contact line meets a
    truncation cut
    """
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[mesh.wall_half_edges.ravel()] = True
    return np.flatnonzero(mask)


def wall_edge_weights(mesh, index):
    """
    Trapezoid weights (half the incident wall edge lengths) for the contact
    line integral
    """
    w = np.zeros(mesh.n_vertices)
    he = mesh.wall_half_edges
    lengths = np.linalg.norm(mesh.vertices[he[:, 1]] - mesh.vertices[he[:, 0]], axis=-1)
    np.add.at(w, he[:, 0], 0.5 * lengths)
    np.add.at(w, he[:, 1], 0.5 * lengths)
    return w[index]


def compute_state(mesh, aniso, config, curvature="auto"):
    """
    Geometric state of a mesh. `curvature` selects the shape operator
    estimate: "quadric" fits the surface heights, "cahn-hoffman" fits the
    Cahn-Hoffman field of the attached normals, and "auto" uses the latter
    whenever the mesh carries exact normals
    """
    if curvature not in CURVATURE_METHODS:
        raise NotImplementedError(f"curvature estimate {curvature!r}")
    mesh.check_invariants()
    normals = mesh.vertex_normals
    if curvature == "auto":
        curvature = "cahn-hoffman" if mesh.exact_normals is not None else "quadric"
    if curvature == "cahn-hoffman":
        h3 = cahn_hoffman_operators(mesh, aniso, normals)
    else:
        h3 = shape_operators(mesh, normals)
    index = contact_line_vertices(mesh)
    state = make_state(
        positions=mesh.vertices,
        normals=normals,
        h3=h3,
        aniso=aniso,
        config=config,
        areas=mesh.vertex_areas,
        boundary_index=index,
        chords=wall_chords(mesh, index),
        boundary_weights=wall_edge_weights(mesh, index),
    )
    logger.debug(
        f"state: mean H_F={np.mean(state.H_F):.6f},"
        f" max capillary residual={np.max(np.abs(state.capillary_residual), initial=0.0):.3e}"
    )
    return state


def orientation_check(state, center):
    """
    Smallest <nu, x - center>, positive for outward normals on a Wulff cap
    """
    return float(np.min(np.sum(state.normals * (state.positions - np.asarray(center)), axis=-1)))

