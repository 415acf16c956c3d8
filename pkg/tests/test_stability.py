import numpy as np
import pytest

from anisocap.anisotropy import Anisotropy, make_config
from anisocap.errors import NotMinimalError, StepUnderflowError, ValidationError
from anisocap.geometry import compute_state
from anisocap.geometry.generators import (
    affine_transform,
    build_capillary_plane,
    build_truncated_wulff,
    capillary_plane_normal,
)
from anisocap.geometry.parametric import graph_patch
from anisocap.stability import (
    assemble,
    minkowski_test_function,
    q_phi,
    rigidity_gap,
    second_variation_fd_check,
    spectrum,
)
from anisocap.stability.rigidity import umbilicity_density

ISO = Anisotropy()
ELLIPSOIDAL = Anisotropy(family="ellipsoidal", Q=np.diag([4.0, 1.0, 1.0]))

# first Dirichlet eigenvalue of the unit disk, j_{0,1}^2
DISK_EIGENVALUE = 2.404825557695773**2


def _form(aniso, omega0, resolution, mesh=None):
    config = make_config(aniso, omega0)
    if mesh is None:
        mesh = build_truncated_wulff(aniso, config, resolution)
    state = compute_state(mesh, aniso, config)
    return mesh, state, assemble(mesh, state, config)


def _plane_bump(mesh, config, center_height=0.5, width=0.3):
    nu = capillary_plane_normal(config.aniso, config.omega0)
    center = center_height * np.array([-nu[2], 0.0, nu[0]])
    r2 = np.sum((mesh.vertices - center) ** 2, axis=-1) / width**2
    return np.clip(1.0 - r2, 0.0, None) ** 2


def test_form_is_symmetric():
    _, _, form = _form(ELLIPSOIDAL, 0.3, 6)
    assert abs(form.Q - form.Q.T).max() == 0.0
    assert abs(form.M - form.M.T).max() < 1e-15


def test_hemisphere_constant_mode():
    mesh, _, form = _form(ISO, 0.0, 10)
    ones = np.ones(mesh.n_vertices)
    # -int |h|^2 dA = -2 Area, the stiffness part annihilates constants
    assert form.quadratic(ones) == pytest.approx(-4.0 * np.pi, rel=5e-2)
    np.testing.assert_allclose(form.K @ ones, 0.0, atol=1e-12)
    assert form.mass(ones) == pytest.approx(mesh.total_area)
    np.testing.assert_allclose(form.boundary, 0.0, atol=1e-10)


def test_hemisphere_spectrum():
    _, _, form = _form(ISO, 0.0, 8)
    weak = spectrum(form, k=4, mode="weak")
    assert weak.stable
    assert weak.witness is None
    # horizontal translations are Jacobi fields
    assert weak.near_zero() >= 2

    strong = spectrum(form, k=4, mode="strong")
    assert not strong.stable
    assert strong.lambda_min == pytest.approx(-2.0, rel=5e-2)
    w = strong.witness
    assert np.all(w > 0.0) or np.all(w < 0.0)
    assert strong.to_dict()["verdict"] == "unstable"


@pytest.mark.parametrize("aniso, omega0", [(ISO, 0.5), (ISO, -0.3), (ELLIPSOIDAL, 0.3)])
def test_wulff_caps_are_weakly_stable(aniso, omega0):
    _, _, form = _form(aniso, omega0, 8)
    report = spectrum(form, k=4, mode="weak")
    assert report.stable
    assert report.verdict == "stable"
    # horizontal translations stay Jacobi fields off the hemisphere
    assert report.near_zero() >= 2
    assert abs(report.lambda_min) <= report.band


def test_flat_disk_strong_spectrum():
    config = make_config(ISO, 0.0)
    mesh = build_capillary_plane(ISO, config, radius=1.0, resolution=10)
    _, _, form = _form(ISO, 0.0, None, mesh=mesh)
    report = spectrum(form, k=3, mode="strong")
    # even reflection across the wall gives the Dirichlet problem on the disk
    assert report.lambda_min == pytest.approx(DISK_EIGENVALUE, rel=5e-2)
    assert report.stable
    # cut vertices carry Dirichlet conditions
    np.testing.assert_array_equal(report.eigenvectors[mesh.cut_mask], 0.0)


def test_spectrum_validation():
    _, _, form = _form(ISO, 0.0, 3)
    with pytest.raises(ValidationError):
        spectrum(form, k=0)
    with pytest.raises(NotImplementedError):
        spectrum(form, mode="robust")
    report = spectrum(form, k=10**6, mode="strong")
    assert len(report.eigenvalues) == int(np.sum(form.free))


def test_weak_eigenvectors_have_zero_mean():
    _, _, form = _form(ELLIPSOIDAL, 0.3, 6)
    report = spectrum(form, k=3, mode="weak")
    ones = np.ones(form.n)
    means = ones @ (form.M @ report.eigenvectors)
    np.testing.assert_allclose(means, 0.0, atol=1e-10)


def test_coo_export(tmp_path):
    _, _, form = _form(ISO, 0.5, 4)
    fn = tmp_path / "Q.coo"
    form.to_coo(fn)
    rows = np.loadtxt(fn)
    assert len(rows) == form.Q.nnz
    Q = np.zeros((form.n, form.n))
    Q[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    np.testing.assert_array_equal(Q, form.Q.toarray())


def test_report_json(tmp_path):
    _, _, form = _form(ISO, 0.0, 4)
    report = spectrum(form, k=2, mode="strong")
    fn = tmp_path / "spectrum.json"
    report.to_json(fn)
    text = fn.read_text()
    assert '"witness"' in text
    assert '"verdict": "unstable"' in text


@pytest.mark.parametrize(
    "aniso, omega0", [(a, w) for a in (ISO, ELLIPSOIDAL) for w in (-0.4, 0.0, 0.5)]
)
def test_rigidity_on_wulff_caps(aniso, omega0):
    mesh, state, form = _form(aniso, omega0, 41)
    assert mesh.n_faces > 10000
    config = make_config(aniso, omega0)
    phi = minkowski_test_function(state, config)
    assert abs(phi.normalized) < 1e-2
    assert abs(rigidity_gap(state, config)) / phi.area < 1e-2
    assert abs(q_phi(form, phi)) / phi.area < 1e-2


def test_rigidity_needs_exact_curvatures():
    # the same cap through height fits carries a small discretisation error
    config = make_config(ELLIPSOIDAL, 0.5)
    mesh = build_truncated_wulff(ELLIPSOIDAL, config, 16)
    exact = compute_state(mesh, ELLIPSOIDAL, config)
    fitted = compute_state(mesh, ELLIPSOIDAL, config, curvature="quadric")
    assert abs(rigidity_gap(exact, config)) < 1e-8
    assert abs(rigidity_gap(fitted, config)) > abs(rigidity_gap(exact, config))


def test_umbilicity_gap_on_stretched_cap():
    config = make_config(ISO, 0.0)
    mesh = affine_transform(build_truncated_wulff(ISO, config, 8), scale=(1.0, 1.0, 1.5))
    state = compute_state(mesh, ISO, config)
    assert np.all(umbilicity_density(state) >= -1e-10)
    assert rigidity_gap(state, config) > 0.1


def test_rigidity_gap_on_plane():
    config = make_config(ELLIPSOIDAL, 0.3)
    mesh = build_capillary_plane(ELLIPSOIDAL, config, resolution=5)
    state = compute_state(mesh, ELLIPSOIDAL, config)
    assert rigidity_gap(state, config) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("aniso, omega0", [(ISO, 0.3), (ELLIPSOIDAL, -0.2)])
def test_second_variation_on_flat_plane(aniso, omega0):
    config = make_config(aniso, omega0)
    mesh = build_capillary_plane(aniso, config, radius=1.0, resolution=10)
    f = _plane_bump(mesh, config)
    check = second_variation_fd_check(mesh, aniso, config, f)
    assert check.form_value > 0.0
    assert check.discrepancy < 1e-4
    assert len(check.quotients) == 3


def test_second_variation_on_graph_patch():
    patch = graph_patch(lambda u, v: 0.5 + 0.2 * u + 0.1 * v, n=21)
    config = make_config(ELLIPSOIDAL, 0.3)
    u, v = patch.grid()
    f = np.clip(1.0 - (u**2 + v**2) / 0.3**2, 0.0, None) ** 2
    check = second_variation_fd_check(patch, ELLIPSOIDAL, config, f)
    assert check.form_value > 0.0
    assert check.discrepancy < 1e-4


def test_second_variation_preconditions():
    config = make_config(ISO, 0.0)
    hemisphere = build_truncated_wulff(ISO, config, 4)
    with pytest.raises(NotMinimalError):
        second_variation_fd_check(hemisphere, ISO, config, np.ones(hemisphere.n_vertices))

    plane = build_capillary_plane(ISO, config, resolution=4)
    with pytest.raises(StepUnderflowError):
        second_variation_fd_check(plane, ISO, config, np.ones(plane.n_vertices), steps=[1e-12])
