"""
Numerical checks of the pointwise Jacobi-operator identities, the contact
line identities and the second variation formula
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import NotMinimalError, StepUnderflowError, ValidationError
from ..geometry.parametric import ParametricPatch, parametric_state
from ..geometry.state import compute_state
from ..variational import energy
from .form import assemble

logger = logging.getLogger(__name__)

MINIMAL_TOL = 1e-6
CAPILLARY_TOL = 1e-6
MIN_RELATIVE_STEP = 1e-6


@dataclass
class IdentityResiduals:
    """
    Residual fields on the core grid (or the contact line), keyed by
    identity name
    """

    fields: dict
    order: int
    mesh_size: float

    def max_abs(self):
        return {k: float(np.max(np.abs(v))) for k, v in self.fields.items()}

    @property
    def worst(self):
        return max(self.max_abs().values())

    def to_dict(self):
        return dict(order=self.order, mesh_size=self.mesh_size, max_abs=self.max_abs())


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def jacobi_identity_residuals(patch, aniso, config, order=4):
    """
    Residuals of
        J_F F(nu) = <grad H_F, DF> + tr(h_F^2)
        J_F <EF, nu> = <EF, grad H_F>
        J_F <x, nu> = <x, grad H_F> + H_F
    which hold on any immersed surface
    """
    ps = parametric_state(patch, aniso, config, order)
    grad_H = ps.gradient(ps.H_F)
    EF = np.asarray(config.EF)
    support = ps.support
    fields = dict(
        F=ps.core(ps.jacobi(ps.F) - _dot(grad_H, ps.nu_F) - ps.trace_hF2),
        EF=ps.core(ps.jacobi(ps.nu @ EF) - grad_H @ EF),
        support=ps.core(ps.jacobi(support) - _dot(ps.X, grad_H) - ps.H_F),
    )
    res = IdentityResiduals(fields=fields, order=order, mesh_size=max(ps.du, ps.dv))
    logger.debug(f"Jacobi identity residuals: {res.max_abs()}")
    return res


def boundary_identity_residuals(patch, aniso, config, order=4, capillary_tol=CAPILLARY_TOL):
    """
    Residuals of <A_F grad <x, nu>, mu> = q_F <x, nu> and
    <A_F grad psi, mu> = q_F psi along the contact line, psi = F + omega0 <EF, nu>
    """
    if not patch.wall_row:
        raise ValidationError("patch has no contact line on the wall")
    ps = parametric_state(patch, aniso, config, order)
    state = ps.state
    cap = float(np.max(np.abs(state.capillary_residual)))
    if cap > capillary_tol:
        raise NotMinimalError(
            f"capillary residual {cap:.3e} exceeds {capillary_tol:.1e} on the contact line"
        )
    q = state.q_F
    fields = {}
    for name, f in (("support", ps.support), ("psi", ps.psi)):
        fields[name] = ps.conormal_derivative(f) - q * ps.core(f)[-1]
    res = IdentityResiduals(fields=fields, order=order, mesh_size=max(ps.du, ps.dv))
    logger.debug(f"boundary identity residuals: {res.max_abs()}")
    return res


@dataclass
class SecondVariationCheck:
    fd_value: float
    form_value: float
    steps: list
    quotients: list = field(default_factory=list)

    @property
    def discrepancy(self):
        return abs(self.fd_value - self.form_value) / max(abs(self.form_value), 1e-300)

    def to_dict(self):
        return dict(
            fd_value=self.fd_value,
            form_value=self.form_value,
            discrepancy=self.discrepancy,
            steps=list(self.steps),
            quotients=list(self.quotients),
        )


def admissible_variation(mesh, state, f):
    """
    Y = f nu, corrected at contact-line vertices by -(nu_3 / mu_3) f mu so
    that they stay on the wall; fixed cut vertices do not move
    """
    f = np.asarray(f, dtype=float)
    Y = f[:, None] * state.normals
    i = state.boundary_index
    Y[i] -= ((state.normals[i, 2] / state.mu[:, 2]) * f[i])[:, None] * state.mu
    Y[mesh.cut_mask] = 0.0
    return Y


def second_variation_fd_check(surface, aniso, config, f, steps=None):
    """
    Compare the extrapolated second difference quotient of E_F along x + tY
    with Q(f, f) from the assembled stability form. `surface` is a mesh or a
    `ParametricPatch`, which is triangulated on its grid; for a patch `f` may
    be given on the (n_u, n_v) grid
    """
    if isinstance(surface, ParametricPatch):
        mesh = surface.to_mesh()
        f = np.asarray(f, dtype=float).reshape(-1)
    else:
        mesh = surface
    state = compute_state(mesh, aniso, config)
    H_F = float(np.max(np.abs(state.H_F)))
    cap = float(np.max(np.abs(state.capillary_residual), initial=0.0))
    if H_F > MINIMAL_TOL or cap > MINIMAL_TOL:
        raise NotMinimalError(
            f"surface is not anisotropic capillary minimal (|H_F| = {H_F:.2e},"
            f" capillary residual = {cap:.2e})"
        )
    scale = mesh.bbox_diagonal
    if steps is None:
        steps = [4e-2 * scale, 2e-2 * scale, 1e-2 * scale]
    steps = sorted(float(s) for s in steps)[::-1]
    if min(steps) < MIN_RELATIVE_STEP * scale:
        raise StepUnderflowError(
            f"step {min(steps):.2e} is below {MIN_RELATIVE_STEP:.0e} of the mesh size"
        )

    f = np.where(mesh.cut_mask, 0.0, np.asarray(f, dtype=float))
    Y = admissible_variation(mesh, state, f)
    E0 = energy(mesh, aniso, config).total

    def _energy(s):
        return energy(mesh.with_vertices(mesh.vertices + s * Y), aniso, config).total

    quotients = [(_energy(s) - 2.0 * E0 + _energy(-s)) / s**2 for s in steps]
    s2 = np.array(steps) ** 2
    if len(steps) > 1:
        # polynomial extrapolation in s^2 to s = 0
        fd = float(np.polyval(np.polyfit(s2, quotients, len(steps) - 1), 0.0))
    else:
        fd = quotients[0]

    form = assemble(mesh, state, config)
    check = SecondVariationCheck(
        fd_value=fd, form_value=form.quadratic(f), steps=steps, quotients=quotients
    )
    logger.info(
        f"second variation: finite difference {check.fd_value:.8f},"
        f" form {check.form_value:.8f}"
    )
    return check
