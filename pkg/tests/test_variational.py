import warnings

import numpy as np
import pytest

from anisocap.anisotropy import Anisotropy, make_config
from anisocap.geometry import compute_state
from anisocap.geometry.generators import affine_transform, build_truncated_wulff, perturb_mesh
from anisocap.utils import convergence_order
from anisocap.variational import (
    boundary_qF,
    constrain,
    directional_derivative,
    energy,
    energy_gradient,
    first_variation,
    minkowski_residual,
    weak_normal_residual,
    wetted_area,
)

ISO = Anisotropy()
ELLIPSOIDAL = Anisotropy(family="ellipsoidal", Q=np.diag([4.0, 1.0, 1.0]))


def _hemisphere(resolution):
    return build_truncated_wulff(ISO, make_config(ISO, 0.0), resolution)


def test_hemisphere_energy():
    mesh = _hemisphere(12)
    E = energy(mesh, ISO, make_config(ISO, 0.0))
    assert E.total == pytest.approx(2.0 * np.pi, rel=2e-2)
    assert E.wetted_area == pytest.approx(np.pi, rel=2e-2)
    assert E.volume == pytest.approx(2.0 * np.pi / 3.0, rel=2e-2)

    # the wetting term enters with the sign of omega0
    E = energy(mesh, ISO, make_config(ISO, 0.5))
    assert E.wetting_term == pytest.approx(0.5 * E.wetted_area)
    assert E.total == pytest.approx(2.5 * np.pi, rel=2e-2)
    assert set(E.to_dict()) == {"area_term", "wetting_term", "total", "volume", "wetted_area"}


def test_wetted_area_is_counterclockwise():
    mesh = _hemisphere(6)
    assert wetted_area(mesh) > 0.0


@pytest.mark.parametrize("aniso", [ISO, ELLIPSOIDAL])
def test_gradient_matches_finite_differences(aniso):
    config = make_config(aniso, 0.3)
    mesh = perturb_mesh(build_truncated_wulff(aniso, config, 5), 0.05, seed=2)
    mesh = affine_transform(mesh, scale=(1.2, 0.9, 1.0))
    rng = np.random.default_rng(4)
    d = constrain(mesh, rng.standard_normal(mesh.vertices.shape))
    g = energy_gradient(mesh, aniso, config)
    fd = directional_derivative(mesh, aniso, config, d)
    assert np.sum(g * d) == pytest.approx(fd, rel=1e-6)


def test_constrain():
    mesh = _hemisphere(4)
    v = constrain(mesh, np.ones_like(mesh.vertices))
    np.testing.assert_array_equal(v[mesh.wall_mask, 2], 0.0)
    np.testing.assert_array_equal(v[mesh.interior_mask], 1.0)


def test_volume_multiplier_on_scaled_hemisphere():
    mesh = affine_transform(_hemisphere(8), scale=(1.1, 1.1, 1.1))
    var = first_variation(mesh, ISO, make_config(ISO, 0.0))
    # mean curvature of the sphere of radius 1.1
    assert var.multiplier == pytest.approx(2.0 / 1.1, rel=3e-2)
    assert var.residual_norm < 0.2 * var.norm


def test_first_variation_converges():
    config = make_config(ISO, 0.0)
    coarse = first_variation(_hemisphere(6), ISO, config)
    fine = first_variation(_hemisphere(12), ISO, config)
    assert fine.residual_norm < coarse.residual_norm
    # the weak CAMC residual of sampled caps goes to zero under refinement
    assert fine.camc_residual < 0.75 * coarse.camc_residual
    assert np.max(fine.boundary_density) < np.max(coarse.boundary_density)
    assert len(fine.boundary_index) == 72


WULFF_CAPS = [(a, w) for a in (ISO, ELLIPSOIDAL) for w in (-0.4, 0.0, 0.5)]


@pytest.mark.parametrize("aniso, omega0", WULFF_CAPS)
def test_minkowski_residual_on_wulff_caps(aniso, omega0):
    config = make_config(aniso, omega0)
    mesh = build_truncated_wulff(aniso, config, 41)
    assert mesh.n_faces > 10000
    state = compute_state(mesh, aniso, config)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        result = minkowski_residual(state, mesh, config)
    assert abs(result.normalized) < 1e-2
    assert result.capillary_residual < 1e-10


@pytest.mark.parametrize("aniso, omega0", [(ISO, 0.5), (ELLIPSOIDAL, -0.4), (ELLIPSOIDAL, 0.5)])
def test_minkowski_residual_converges(aniso, omega0):
    config = make_config(aniso, omega0)
    errors, sizes = [], []
    for resolution in (10, 20):
        mesh = build_truncated_wulff(aniso, config, resolution)
        # height fits, so the residual carries a discretisation error
        state = compute_state(mesh, aniso, config, curvature="quadric")
        errors.append(abs(minkowski_residual(state, mesh, config).normalized))
        sizes.append(mesh.mean_edge_length)
    assert errors[1] < 1e-2
    assert convergence_order(errors[0], errors[1], sizes[0], sizes[1]) >= 1.5


def test_minkowski_residual_warns_off_capillary():
    config = make_config(ISO, 0.5)
    mesh = build_truncated_wulff(ISO, config, 6)
    # the wall contact angle of the hemisphere is wrong for omega0 = 0.5
    state = compute_state(_hemisphere(6), ISO, config)
    with pytest.warns(UserWarning):
        result = minkowski_residual(state, mesh, config)
    assert result.capillary_residual == pytest.approx(0.5)


def test_boundary_qF():
    config = make_config(ISO, 0.0)
    state = compute_state(_hemisphere(8), ISO, config)
    np.testing.assert_allclose(boundary_qF(state, config).q_F, 0.0, atol=1e-10)

    config = make_config(ELLIPSOIDAL, 0.3)
    state = compute_state(build_truncated_wulff(ELLIPSOIDAL, config, 10), ELLIPSOIDAL, config)
    robin = boundary_qF(state, config)
    assert robin.discrepancy < 1e-10
    assert np.all(robin.q_F < 0.0)


def test_weak_normal_residual_of_constant_density():
    mesh = _hemisphere(8)
    nu = mesh.vertex_normals
    assert weak_normal_residual(mesh, np.zeros_like(nu)) == 0.0
    # a lumped constant density c is measured as its RMS value
    r = 0.3 * mesh.vertex_areas[:, None] * nu
    assert weak_normal_residual(mesh, r) == pytest.approx(0.3, rel=0.1)
