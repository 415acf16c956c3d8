"""
Mesh generators: truncated Wulff caps (optionally as radial graphs over
them), the closed Wulff shape and flat capillary half-disks, plus the mesh
operations used to prepare flow experiments
"""
import logging

import numpy as np
import scipy.optimize
import scipy.sparse
import scipy.sparse.csgraph

from ..anisotropy import admissible_interval
from ..errors import MeshError, ValidationError
from ..sphere import E2, E3, unit
from .mesh import CapillaryMesh

logger = logging.getLogger(__name__)


def _stitch(inner, inner_angles, outer, outer_angles, closed):
    """
    Triangulate the strip between two rings of vertex indices whose angles
    increase along the ring. Triangles are counterclockwise in the (radius,
    angle) parameter plane. Closed rings wrap around 2 pi, open rings run
    from their first to their last vertex
    """
    tris = []
    if len(inner) == 1:
        n = len(outer) if closed else len(outer) - 1
        for j in range(n):
            tris.append((inner[0], outer[j], outer[(j + 1) % len(outer)]))
        return tris
    if len(outer) == 1:
        n = len(inner) if closed else len(inner) - 1
        for i in range(n):
            tris.append((inner[i], outer[0], inner[(i + 1) % len(inner)]))
        return tris

    if closed:
        a = np.r_[inner_angles, inner_angles[0] + 2.0 * np.pi]
        b = np.r_[outer_angles, outer_angles[0] + 2.0 * np.pi]
        n_i, n_o = len(inner), len(outer)
    else:
        a, b = np.asarray(inner_angles), np.asarray(outer_angles)
        n_i, n_o = len(inner) - 1, len(outer) - 1

    i = j = 0
    while i < n_i or j < n_o:
        advance_outer = j < n_o and (
            i == n_i or 0.5 * (b[j] + b[j + 1]) < 0.5 * (a[i] + a[i + 1])
        )
        I0, I1 = inner[i % len(inner)], inner[(i + 1) % len(inner)]
        O0, O1 = outer[j % len(outer)], outer[(j + 1) % len(outer)]
        if advance_outer:
            tris.append((I0, O0, O1))
            j += 1
        else:
            tris.append((I0, O0, I1))
            i += 1
    return tris


def _polar_rings(n_rings):
    """
    Ring k of a hexagonal polar disk has 6k points at angles 2 pi j / 6k
    """
    return [np.array([0.0])] + [
        2.0 * np.pi * np.arange(6 * k) / (6 * k) for k in range(1, n_rings + 1)
    ]


def _triangulate_rings(ring_angles, closed=True):
    ids = []
    offset = 0
    for angles in ring_angles:
        ids.append(np.arange(offset, offset + len(angles)))
        offset += len(angles)
    tris = []
    for k in range(1, len(ring_angles)):
        tris += _stitch(ids[k - 1], ring_angles[k - 1], ids[k], ring_angles[k], closed)
    return np.array(tris, dtype=np.int64)


def _gauss_direction(theta, phi):
    return np.stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)],
        axis=-1,
    )


def boundary_polar_angle(aniso, omega0, phi, n_iter=64):
    """
    Polar angle (from +E3) of the Wulff normal z at the contact line in
    azimuth `phi` (array), the root of <Phi(z), E3> + omega0 = 0 along each
    meridian. The left-hand side decreases monotonically in the angle, so
    the root is bracketed by [0, pi] and found by bisection to machine
    precision
    """
    phi = np.asarray(phi, dtype=float)
    lo = np.zeros_like(phi)
    hi = np.full_like(phi, np.pi)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        above = aniso.gradient(_gauss_direction(mid, phi))[..., 2] + omega0 > 0.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


def build_radial_graph(aniso, config, resolution, eta=None):
    """
    Radial graph x = omega0 E3 + (1 + eta(s, phi)) Phi(z) over the truncated
    Wulff shape, parametrised by the Gauss-map polar coordinates
    z = z(s theta_b(phi), phi) with s in [0, 1] from the top (s = 0) to the
    contact line (s = 1). `eta` must vanish at s = 1. Exact normals are
    stored when `eta` is None
    """
    if resolution < 1:
        raise ValidationError(f"resolution must be >= 1, got {resolution}")
    omega0 = config.omega0
    lo, hi = admissible_interval(aniso)
    assert lo < omega0 < hi, "empty truncation"

    ring_angles = _polar_rings(resolution)
    s = np.concatenate(
        [np.full(len(angles), k / resolution) for k, angles in enumerate(ring_angles)]
    )
    phi = np.concatenate(ring_angles)
    on_boundary = s == 1.0
    theta = s * boundary_polar_angle(aniso, omega0, phi)

    z = _gauss_direction(theta, phi)
    Phi = aniso.gradient(z)
    if eta is None:
        vertices = omega0 * E3 + Phi
        normals = z
    else:
        eta_values = np.asarray(eta(s, phi), dtype=float)
        if np.max(np.abs(eta_values[on_boundary])) > 1e-12:
            raise ValidationError("radial perturbation eta must vanish on the contact line")
        vertices = omega0 * E3 + (1.0 + eta_values)[:, None] * Phi
        normals = None
    vertices[on_boundary, 2] = 0.0

    triangles = _triangulate_rings(ring_angles, closed=True)
    mesh = CapillaryMesh(vertices, triangles, normals=normals)
    logger.debug(f"truncated Wulff cap omega0={omega0}: {mesh}")
    return mesh


def build_truncated_wulff(aniso, config, resolution):
    """
    The Wulff shape translated by omega0 E3 and cut by the plane x_3 = 0,
    meshed with `resolution` rings (6 resolution^2 triangles)
    """
    return build_radial_graph(aniso, config, resolution, eta=None)


def resolution_for_faces(n_faces):
    return max(1, int(round(np.sqrt(n_faces / 6.0))))


def build_closed_wulff(aniso, resolution, center=(0.0, 0.0, 0.0)):
    """
    Closed Wulff shape Phi(S^2) meshed by Gauss-map polar rings from the north
    to the south pole (`resolution` rings per hemisphere)
    """
    n = resolution
    ring_angles = [
        2.0 * np.pi * np.arange(max(1, 6 * min(k, 2 * n - k))) / max(1, 6 * min(k, 2 * n - k))
        for k in range(2 * n + 1)
    ]
    theta = np.concatenate(
        [np.full(len(a), np.pi * k / (2 * n)) for k, a in enumerate(ring_angles)]
    )
    phi = np.concatenate(ring_angles)
    z = _gauss_direction(theta, phi)
    vertices = np.asarray(center, dtype=float) + aniso.gradient(z)
    triangles = _triangulate_rings(ring_angles, closed=True)
    return CapillaryMesh(vertices, triangles, normals=z)


def capillary_plane_normal(aniso, omega0):
    """
    Unit normal nu = (cos a, 0, sin a), a in (-pi/2, pi/2), of the tilted
    plane through the E2 axis satisfying the capillary condition
    <nu_F, -E3> = omega0
    """

    def _residual(alpha):
        nu = np.array([np.cos(alpha), 0.0, np.sin(alpha)])
        return float(-aniso.gradient(nu)[2] - omega0)

    eps = 1e-12
    alpha = scipy.optimize.brentq(
        _residual, -0.5 * np.pi + eps, 0.5 * np.pi - eps, xtol=1e-15, rtol=4 * np.finfo(float).eps
    )
    return np.array([np.cos(alpha), 0.0, np.sin(alpha)])


def graded_radii(r_core, r_max, n_core, anchor=None):
    """
    Ring radii that are uniform (spacing r_core / n_core) up to `r_core` and
    geometric beyond it, so elements stay shape regular on large samples.
    If `anchor` is given the geometric ratio is adjusted so that `anchor` is
    one of the radii
    """
    if not 0.0 < r_core < r_max:
        raise ValidationError(f"need 0 < r_core < r_max, got {r_core}, {r_max}")
    radii = list(r_core * np.arange(1, n_core + 1) / n_core)
    q = 1.0 + 1.0 / n_core
    if anchor is not None and r_core < anchor <= r_max:
        n_a = max(1, int(round(np.log(anchor / r_core) / np.log(q))))
        q = (anchor / r_core) ** (1.0 / n_a)
    while radii[-1] < r_max * (1.0 - 1e-12):
        radii.append(radii[-1] * q)
    radii = np.array(radii)
    if anchor is not None and r_core < anchor <= r_max:
        radii[np.argmin(np.abs(radii - anchor))] = anchor
    return radii


def build_capillary_plane(aniso, config, radius=1.0, resolution=8, radii=None):
    """
    Half-disk of the tilted capillary plane through the E2 axis,
    x = a E2 + b e_up with b >= 0 and e_up = (-nu_3, 0, nu_1). The diameter is
    the wetted boundary on the wall, the outer arc is a truncation cut.
    Rings sit at `radii` if given, otherwise uniformly at radius k/resolution
    """
    nu = capillary_plane_normal(aniso, config.omega0)
    e_up = np.array([-nu[2], 0.0, nu[0]])

    if radii is None:
        radii = radius * np.arange(1, resolution + 1) / resolution
    radii = np.asarray(radii, dtype=float)
    gaps = np.diff(np.r_[0.0, radii])
    if np.any(gaps <= 0.0):
        raise ValidationError("ring radii must be strictly increasing and positive")

    ring_angles = [np.array([0.0])]
    for r, dr in zip(radii, gaps):
        m = max(2, int(round(np.pi * r / dr)))
        ring_angles.append(np.pi * np.arange(m + 1) / m)
    rs = np.concatenate([[0.0]] + [np.full(len(a), r) for r, a in zip(radii, ring_angles[1:])])
    phi = np.concatenate(ring_angles)

    a = rs * np.cos(phi)
    b = rs * np.sin(phi)
    b[np.isclose(phi, 0.0) | np.isclose(phi, np.pi)] = 0.0
    vertices = a[:, None] * E2 + b[:, None] * e_up
    vertices[b == 0.0, 2] = 0.0
    triangles = _triangulate_rings(ring_angles, closed=False)
    normals = np.tile(nu, (len(vertices), 1))
    return CapillaryMesh(vertices, triangles, normals=normals)


def affine_transform(mesh, scale=(1.0, 1.0, 1.0), shift=(0.0, 0.0, 0.0)):
    """
    Diagonal scaling followed by a horizontal shift; the plane x_3 = 0 is
    preserved so the shift must have zero vertical component
    """
    scale = np.asarray(scale, dtype=float)
    shift = np.asarray(shift, dtype=float)
    if shift[2] != 0.0:
        raise ValidationError("shifts must be horizontal to keep the boundary on the plane")
    if np.any(scale <= 0.0):
        raise ValidationError("scale factors must be positive")
    normals = None
    if mesh.exact_normals is not None:
        normals = unit(mesh.exact_normals / scale)
    return CapillaryMesh(mesh.vertices * scale + shift, mesh.triangles, normals=normals)


def refine(mesh):
    """
    Uniform midpoint subdivision, each triangle split into four. Exact
    normals are not carried over
    """
    V = mesh.vertices
    t = mesh.triangles
    edges = mesh.edges
    n = mesh.n_vertices
    lookup = {(int(a), int(b)): n + k for k, (a, b) in enumerate(edges)}

    def _mid(a, b):
        return np.array([lookup[(min(i, j), max(i, j))] for i, j in zip(a, b)])

    m01 = _mid(t[:, 0], t[:, 1])
    m12 = _mid(t[:, 1], t[:, 2])
    m20 = _mid(t[:, 2], t[:, 0])
    mids = 0.5 * (V[edges[:, 0]] + V[edges[:, 1]])
    vertices = np.concatenate([V, mids])
    triangles = np.concatenate(
        [
            np.stack([t[:, 0], m01, m20], axis=1),
            np.stack([t[:, 1], m12, m01], axis=1),
            np.stack([t[:, 2], m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return CapillaryMesh(vertices, triangles)


def wall_graph_distance(mesh):
    """
    Number of edges from each vertex to the nearest wall or cut vertex
    """
    sources = np.flatnonzero(mesh.boundary_mask)
    if len(sources) == 0:
        return np.full(mesh.n_vertices, np.inf)
    return scipy.sparse.csgraph.dijkstra(
        mesh.adjacency, directed=False, indices=sources, min_only=True
    )


def smooth_field(mesh, values, n_iter=10):
    """
    Repeated neighbour averaging (umbrella smoothing) of a per-vertex field
    """
    A = mesh.adjacency
    deg = np.asarray(A.sum(axis=1)).ravel()
    values = np.asarray(values, dtype=float)
    for _ in range(n_iter):
        values = 0.5 * values + 0.5 * (A @ values) / deg
    return values


def perturb_mesh(mesh, amplitude, seed=0, n_smooth=10):
    """
    Displace vertices along their normals by smoothed random noise whose
    maximum is `amplitude` times the cap radius. The displacement is zero on
    the boundary and tapered over the first two rings next to it
    """
    if mesh.is_closed:
        raise MeshError("perturb_mesh expects a mesh with boundary")
    rng = np.random.default_rng(seed)
    noise = smooth_field(mesh, rng.standard_normal(mesh.n_vertices), n_iter=n_smooth)
    noise -= np.mean(noise)
    noise /= np.max(np.abs(noise))
    taper = np.clip(wall_graph_distance(mesh) / 2.0, 0.0, 1.0)
    radius = 0.5 * np.ptp(mesh.vertices[:, 0])
    offset = amplitude * radius * noise * taper
    vertices = mesh.vertices + offset[:, None] * mesh.vertex_normals
    return CapillaryMesh(vertices, mesh.triangles)
