import numpy as np
import pytest

from anisocap.anisotropy import Anisotropy, make_config
from anisocap.errors import ImmersionError, NotMinimalError, ValidationError
from anisocap.geometry.parametric import (
    ParametricPatch,
    graph_patch,
    interior_bump,
    parametric_state,
    radial_wulff_patch,
    sphere_cap_patch,
)
from anisocap.stability import boundary_identity_residuals, jacobi_identity_residuals

ISO = Anisotropy()
ELLIPSOIDAL = Anisotropy(family="ellipsoidal", Q=[[2.0, 0.3, 0.0], [0.3, 1.5, 0.0], [0.0, 0.0, 1.0]])


def _bumped_sphere(n):
    return sphere_cap_patch(0.0, n=n, eta=interior_bump(0.05, 0.5, 1.3))


def _bumped_wulff(n):
    return radial_wulff_patch(ELLIPSOIDAL, 0.2, n=n, eta=interior_bump(0.05, 0.35, 0.85))


def test_interior_bump_support():
    eta = interior_bump(0.1, 0.4, 0.8)
    u = np.array([0.0, 0.4, 0.6, 0.8, 1.0])
    values = eta(u, np.zeros_like(u))
    np.testing.assert_array_equal(values[[0, 1, 3, 4]], 0.0)
    assert values[2] == pytest.approx(0.15)


def test_sphere_patch_geometry():
    config = make_config(ISO, 0.3)
    ps = parametric_state(sphere_cap_patch(0.3, n=60), ISO, config)
    np.testing.assert_allclose(ps.state.H_F, 2.0, atol=1e-5)
    np.testing.assert_allclose(ps.state.capillary_residual, 0.0, atol=1e-5)
    # area of the cap between u = 0.2 and arccos(-0.3)
    area = 2.0 * np.pi * (np.cos(0.2) + 0.3)
    assert ps.integrate(np.ones_like(ps.F)) == pytest.approx(area, rel=1e-3)


@pytest.mark.parametrize(
    "aniso, omega0, make_patch", [(ISO, 0.0, _bumped_sphere), (ELLIPSOIDAL, 0.2, _bumped_wulff)]
)
def test_jacobi_identities_converge(aniso, omega0, make_patch):
    config = make_config(aniso, omega0)
    coarse = jacobi_identity_residuals(make_patch(60), aniso, config, order=4)
    fine = jacobi_identity_residuals(make_patch(120), aniso, config, order=4)
    assert fine.worst < 1e-3
    assert coarse.worst / fine.worst > 4.0
    assert set(fine.max_abs()) == {"F", "EF", "support"}
    assert fine.to_dict()["order"] == 4


def test_jacobi_identities_on_graph():
    config = make_config(ELLIPSOIDAL, 0.0)

    def height(u, v):
        return 0.3 * np.sin(2.0 * u) * np.cos(3.0 * v) + 0.2 * u * v

    coarse = jacobi_identity_residuals(graph_patch(height, n=41), ELLIPSOIDAL, config, order=6)
    fine = jacobi_identity_residuals(graph_patch(height, n=81), ELLIPSOIDAL, config, order=6)
    assert fine.worst < coarse.worst
    assert fine.worst < 1e-4


def test_boundary_identities_on_wulff_cap():
    config = make_config(ELLIPSOIDAL, 0.2)
    patch = radial_wulff_patch(ELLIPSOIDAL, 0.2, n=80)
    res = boundary_identity_residuals(patch, ELLIPSOIDAL, config, order=4, capillary_tol=1e-5)
    assert set(res.fields) == {"support", "psi"}
    assert res.worst < 1e-4


def test_boundary_identities_with_interior_bump():
    config = make_config(ISO, 0.0)
    coarse = boundary_identity_residuals(_bumped_sphere(60), ISO, config, capillary_tol=1e-5)
    fine = boundary_identity_residuals(_bumped_sphere(120), ISO, config, capillary_tol=1e-5)
    assert coarse.worst < 1e-3
    assert fine.worst < 1e-4


def test_boundary_identities_need_a_capillary_surface():
    # a cap meeting the wall at the angle for omega0 = 0.5, checked against omega0 = 0
    with pytest.raises(NotMinimalError):
        boundary_identity_residuals(sphere_cap_patch(0.5, n=40), ISO, make_config(ISO, 0.0))
    with pytest.raises(ValidationError):
        boundary_identity_residuals(
            graph_patch(lambda u, v: 0.0 * u), ISO, make_config(ISO, 0.0)
        )


def test_invalid_order():
    with pytest.raises(ValidationError):
        parametric_state(sphere_cap_patch(0.0, n=40), ISO, make_config(ISO, 0.0), order=3)


def test_degenerate_chart():
    def chart(u, v):
        return np.stack([u, u * v, np.zeros_like(u)], axis=-1)

    patch = ParametricPatch(
        chart=chart, u_range=(-0.5, 0.5), v_range=(-0.5, 0.5), n_u=21, n_v=21
    )
    with pytest.raises(ImmersionError):
        parametric_state(patch, ISO, make_config(ISO, 0.0))
