"""
High-order finite-difference backend on closed-form charts (u, v) -> x.

The chart is sampled on a grid padded by 3m ghost nodes on every side (m =
order / 2, the stencil half width), so that quantities needing up to three
nested derivatives of the chart (the Jacobi operator applied to functions
of the normal) are available on the whole core grid. Stencil passes fill
NaN where they run off the padded grid; NaN reaching the core is a
`StencilError`.
"""
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ImmersionError, StencilError, ValidationError
from ..sphere import E3
from .generators import boundary_polar_angle
from .mesh import CapillaryMesh
from .state import make_state

logger = logging.getLogger(__name__)

FIRST_DERIVATIVE = {
    2: [-1 / 2, 0.0, 1 / 2],
    4: [1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12],
    6: [-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60],
}
SECOND_DERIVATIVE = {
    2: [1.0, -2.0, 1.0],
    4: [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12],
    6: [1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90],
}


def apply_stencil(f, weights, axis, h):
    """
    Centered stencil along `axis` of `f` (grid axes first), scaled by
    1/h^k. Nodes within the stencil half width of either end are NaN
    """
    m = len(weights) // 2
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.full_like(f, np.nan)
    n = f.shape[0]
    if n > 2 * m:
        acc = np.zeros_like(f[m : n - m])
        for k, w in enumerate(weights):
            if w != 0.0:
                acc += w * f[k : n - 2 * m + k]
        out[m : n - m] = acc
    order = 1 if weights[m] == 0.0 else 2
    return np.moveaxis(out / h**order, 0, axis)


@dataclass(frozen=True)
class ParametricPatch:
    """
    Closed-form chart over [u0, u1] x [v0, v1] sampled on an n_u x n_v grid.
    Periodic patches drop the v1 endpoint. With `wall_row` the u = u1 row is
    the contact line on the plane x_3 = 0 and the conormal points towards
    increasing u
    """

    chart: Callable
    u_range: tuple
    v_range: tuple
    n_u: int
    n_v: int
    periodic_v: bool = False
    wall_row: bool = False
    kind: str = "graph"

    @property
    def du(self):
        return (self.u_range[1] - self.u_range[0]) / (self.n_u - 1)

    @property
    def dv(self):
        if self.periodic_v:
            return (self.v_range[1] - self.v_range[0]) / self.n_v
        return (self.v_range[1] - self.v_range[0]) / (self.n_v - 1)

    def grid(self, pad=0):
        u = self.u_range[0] + self.du * np.arange(-pad, self.n_u + pad)
        v = self.v_range[0] + self.dv * np.arange(-pad, self.n_v + pad)
        return np.meshgrid(u, v, indexing="ij")

    def to_mesh(self):
        """
        Triangulate the core grid, two triangles per cell oriented like
        d_u x d_v. The wall row is snapped onto the plane
        """
        u, v = self.grid()
        X = np.array(self.chart(u, v), dtype=float)
        if self.wall_row:
            X[-1, :, 2] = 0.0
        n_u, n_v = self.n_u, self.n_v
        idx = np.arange(n_u * n_v).reshape(n_u, n_v)
        cols = n_v if self.periodic_v else n_v - 1
        i, j = np.meshgrid(np.arange(n_u - 1), np.arange(cols), indexing="ij")
        j1 = (j + 1) % n_v
        a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j1], idx[i, j1]
        triangles = np.concatenate(
            [np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)]
        )
        return CapillaryMesh(X.reshape(-1, 3), triangles)


def _sphere_dir(theta, phi):
    return np.stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)],
        axis=-1,
    )


def interior_bump(amplitude, u0, u1, mode=2):
    """
    Smooth radial perturbation supported in u0 < u < u1,
    eta(u, v) = amplitude b(t) (1 + cos(mode v) / 2) with t = (u - u0)/(u1 - u0)
    and b(t) = exp(4 - 1 / (t (1 - t))) the standard bump scaled to b(1/2) = 1.
    It vanishes to all orders at both ends
    """

    def _eta(u, v):
        t = (np.asarray(u, dtype=float) - u0) / (u1 - u0)
        inside = (t > 0.0) & (t < 1.0)
        ts = np.where(inside, t, 0.5)
        b = np.where(inside, np.exp(4.0 - 1.0 / (ts * (1.0 - ts))), 0.0)
        return amplitude * b * (1.0 + 0.5 * np.cos(mode * v))

    return _eta


def sphere_cap_patch(omega0=0.0, n=200, u_min=0.2, eta=None):
    """
    Rotational chart of the unit sphere centred at omega0 E3,
    x = omega0 E3 + (1 + eta) (sin u cos v, sin u sin v, cos u), over
    u in [u_min, arccos(-omega0)] so the u = u1 row is the contact line
    """
    u_b = float(np.arccos(-omega0))

    def _chart(u, v):
        r = 1.0 if eta is None else 1.0 + eta(u, v)
        return omega0 * E3 + np.asarray(r)[..., None] * _sphere_dir(u, v)

    return ParametricPatch(
        chart=_chart,
        u_range=(u_min, u_b),
        v_range=(0.0, 2.0 * np.pi),
        n_u=n,
        n_v=n,
        periodic_v=True,
        wall_row=True,
        kind="rotational",
    )


def graph_patch(height, half_width=0.5, n=101):
    """
    Graph x = (u, v, height(u, v)) over a square centred at the origin,
    oriented by the upward normal
    """

    def _chart(u, v):
        return np.stack([u, v, height(u, v)], axis=-1)

    return ParametricPatch(
        chart=_chart,
        u_range=(-half_width, half_width),
        v_range=(-half_width, half_width),
        n_u=n,
        n_v=n,
        kind="graph",
    )


def radial_wulff_patch(aniso, omega0, n=200, s_min=0.2, eta=None):
    """
    Radial graph over the truncated Wulff shape in Gauss-map polar
    coordinates, x = omega0 E3 + (1 + eta(s, phi)) Phi(z(s theta_b(phi), phi)),
    the same parametrisation the mesh generator uses. The s = 1 row is the
    contact line
    """

    def _chart(s, phi):
        theta = s * boundary_polar_angle(aniso, omega0, phi)
        Phi = aniso.gradient(_sphere_dir(theta, phi))
        r = 1.0 if eta is None else 1.0 + eta(s, phi)
        return omega0 * E3 + np.asarray(r)[..., None] * Phi

    return ParametricPatch(
        chart=_chart,
        u_range=(s_min, 1.0),
        v_range=(0.0, 2.0 * np.pi),
        n_u=n,
        n_v=n,
        periodic_v=True,
        wall_row=True,
        kind="radial_wulff",
    )


def _dot(a, b):
    return np.sum(a * b, axis=-1)


class ParametricState:
    """
    Geometry of a patch on the padded grid together with the differential
    operators needed by the identity checks. `state` is the
    `GeometricState` restricted to the core grid (flattened row-major)
    """

    def __init__(self, patch, aniso, config, order):
        if order not in FIRST_DERIVATIVE:
            raise ValidationError(f"order must be one of 2, 4, 6, got {order}")
        self.patch = patch
        self.aniso = aniso
        self.config = config
        self.order = order
        self.m = order // 2
        self.pad = 3 * self.m
        self.du = patch.du
        self.dv = patch.dv

        U, V = patch.grid(pad=self.pad)
        X = patch.chart(U, V)
        self.X = X
        self.Xu = self.d_u(X)
        self.Xv = self.d_v(X)
        Xuu = self._d2(X, 0, self.du)
        Xvv = self._d2(X, 1, self.dv)
        Xuv = self.d_u(self.Xv)

        n = np.cross(self.Xu, self.Xv)
        norm = np.linalg.norm(n, axis=-1)
        core_norm = self.core(norm)
        if np.any(core_norm < 1e-12 * np.nanmax(core_norm)):
            raise ImmersionError("chart Jacobian has rank < 2 on the grid")
        self.nu = n / norm[..., None]

        g11, g12, g22 = _dot(self.Xu, self.Xu), _dot(self.Xu, self.Xv), _dot(self.Xv, self.Xv)
        det = g11 * g22 - g12**2
        self.ginv = np.stack(
            [np.stack([g22, -g12], -1), np.stack([-g12, g11], -1)], -2
        ) / det[..., None, None]
        self.sqrt_det_g = np.sqrt(det)

        hc = -np.stack(
            [
                np.stack([_dot(self.nu, Xuu), _dot(self.nu, Xuv)], -1),
                np.stack([_dot(self.nu, Xuv), _dot(self.nu, Xvv)], -1),
            ],
            -2,
        )
        J = np.stack([self.Xu, self.Xv], axis=-1)
        self.J = J
        self.h3 = J @ self.ginv @ hc @ self.ginv @ np.swapaxes(J, -1, -2)

        nu_safe = np.where(np.isfinite(self.nu), self.nu, E3)
        AF = aniso.hessian(nu_safe)
        AF = 0.5 * (AF + np.swapaxes(AF, -1, -2))
        self.AF = np.where(np.isfinite(self.nu)[..., None], AF, np.nan)
        self.F = np.where(np.isfinite(norm), aniso.value(nu_safe), np.nan)
        self.nu_F = np.where(np.isfinite(self.nu), aniso.gradient(nu_safe), np.nan)
        self.hF = self.AF @ self.h3
        self.H_F = np.trace(self.hF, axis1=-2, axis2=-1)
        self.trace_hF2 = np.trace(self.hF @ self.hF, axis1=-2, axis2=-1)
        self.trace_AF_h2 = np.trace(self.AF @ self.h3 @ self.h3, axis1=-2, axis2=-1)

        self.state = self._core_state()

    # finite differences

    def d_u(self, f):
        return apply_stencil(f, FIRST_DERIVATIVE[self.order], 0, self.du)

    def d_v(self, f):
        return apply_stencil(f, FIRST_DERIVATIVE[self.order], 1, self.dv)

    def _d2(self, f, axis, h):
        return apply_stencil(f, SECOND_DERIVATIVE[self.order], axis, h)

    def core(self, f, check=True):
        p = self.pad
        out = f[p:-p, p:-p]
        if check and not np.all(np.isfinite(out)):
            raise StencilError(
                "finite-difference stencil ran out of the padded grid inside the"
                " patch; refine the grid or lower the order"
            )
        return out

    # surface calculus

    def gradient(self, f):
        """
        Surface gradient J g^-1 (f_u, f_v) as an ambient vector
        """
        df = np.stack([self.d_u(f), self.d_v(f)], axis=-1)
        return np.einsum("...ia,...ab,...b->...i", self.J, self.ginv, df)

    def divergence(self, Y):
        """
        Tangential divergence sum_ij g^ij <d_i Y, X_j>
        """
        dY = [self.d_u(Y), self.d_v(Y)]
        X = [self.Xu, self.Xv]
        div = 0.0
        for i in range(2):
            for j in range(2):
                div = div + self.ginv[..., i, j] * _dot(dY[i], X[j])
        return div

    def jacobi(self, f):
        """
        J_F f = div(A_F grad f) + tr(A_F h^2) f
        """
        Y = np.einsum("...ij,...j->...i", self.AF, self.gradient(f))
        return self.divergence(Y) + self.trace_AF_h2 * f

    def conormal_derivative(self, f):
        """
        <A_F grad f, mu> on the contact line
        """
        grad = self.core(self.gradient(f))[-1]
        AF = self.core(self.AF)[-1]
        return np.einsum("ni,nij,nj->n", self.state.mu, AF, grad)

    # fields

    @property
    def support(self):
        return _dot(self.X, self.nu)

    @property
    def psi(self):
        return self.F + self.config.omega0 * (self.nu @ self.config.EF)

    def weights(self):
        """
        Quadrature weights of the core grid (trapezoid, periodic in v when
        applicable) including the area element
        """
        wu = np.full(self.patch.n_u, self.du)
        wu[[0, -1]] *= 0.5
        wv = np.full(self.patch.n_v, self.dv)
        if not self.patch.periodic_v:
            wv[[0, -1]] *= 0.5
        return np.outer(wu, wv) * self.core(self.sqrt_det_g)

    def integrate(self, f):
        return float(np.sum(self.weights() * self.core(f)))

    def _core_state(self):
        n_u, n_v = self.patch.n_u, self.patch.n_v
        flat = lambda a: self.core(a).reshape((n_u * n_v,) + a.shape[2:])  # noqa
        boundary_index = np.zeros(0, dtype=np.int64)
        chords = np.zeros((0, 3))
        bweights = None
        if self.patch.wall_row:
            boundary_index = (n_u - 1) * n_v + np.arange(n_v)
            chords = self.core(self.Xv)[-1]
            bweights = np.linalg.norm(chords, axis=-1) * self.dv
        state = make_state(
            positions=flat(self.X),
            normals=flat(self.nu),
            h3=flat(self.h3),
            aniso=self.aniso,
            config=self.config,
            areas=self.weights().ravel(),
            boundary_index=boundary_index,
            chords=chords,
            boundary_weights=bweights,
        )
        if self.patch.wall_row:
            # conormal is the unit component of X_u orthogonal to X_v
            Xu = self.core(self.Xu)[-1]
            Xv = chords
            mu = Xu - (_dot(Xu, Xv) / _dot(Xv, Xv))[:, None] * Xv
            mu /= np.linalg.norm(mu, axis=-1)[:, None]
            if np.max(np.abs(mu - state.mu)) > 1e-6:
                logger.warning(
                    "contact-line conormal from the chart differs from the frame"
                    f" conormal by {np.max(np.abs(mu - state.mu)):.2e}"
                )
        return state


def parametric_state(patch, aniso, config, order=4):
    return ParametricState(patch, aniso, config, order)
