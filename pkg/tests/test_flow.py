import numpy as np
import pytest

from anisocap.anisotropy import Anisotropy, make_config
from anisocap.errors import ConfigError, MeshDegenerationError
from anisocap.flow import (
    ENERGY_SLACK,
    FlowConfig,
    fit_truncated_wulff,
    flow_step,
    hausdorff,
    is_stationary,
    restore_volume,
    run_flow,
    sobolev_velocity,
    surface_distance,
)
from anisocap.geometry import CapillaryMesh
from anisocap.geometry.generators import affine_transform, build_truncated_wulff, perturb_mesh
from anisocap.geometry.mesh import enclosed_volume, read_off, volume_gradient
from anisocap.variational import constrain, energy, energy_gradient

ISO = Anisotropy()
ELLIPSOIDAL = Anisotropy(family="ellipsoidal", Q=np.diag([4.0, 1.0, 1.0]))


def _stretched_cap(aniso=ISO, omega0=0.0, resolution=4):
    config = make_config(aniso, omega0)
    cap = build_truncated_wulff(aniso, config, resolution)
    return affine_transform(cap, scale=(1.0, 1.0, 1.4)), config


def _without_normals(mesh):
    return CapillaryMesh(mesh.vertices, mesh.triangles)


def test_flow_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        FlowConfig(step=0.0)
    with pytest.raises(ConfigError):
        FlowConfig(step=0.6)
    with pytest.raises(ConfigError):
        FlowConfig(smoothing=0.2)
    with pytest.raises(ConfigError):
        FlowConfig(max_steps=-1)
    with pytest.raises(ConfigError):
        FlowConfig.from_dict(dict(steps=10))

    cfg = FlowConfig.from_dict(dict(step=1e-2, max_steps=3))
    assert FlowConfig.from_dict(cfg.to_dict()) == cfg

    fn = tmp_path / "flow.json"
    fn.write_text("{not json")
    with pytest.raises(ConfigError):
        FlowConfig.from_json(fn)


def _triangle(z=1.0):
    return CapillaryMesh(
        np.array([[0.0, 0.0, z], [1.0, 0.0, z], [0.0, 1.0, z]]), np.array([[0, 1, 2]])
    )


def test_surface_distance():
    points = [
        [0.2, 0.2, 2.0],  # above the face
        [2.0, 0.0, 1.0],  # beyond a corner
        [0.5, -1.0, 1.0],  # beside an edge
        [1.0, 1.0, 1.0],  # beside the hypotenuse
        [-1.0, -1.0, 1.0],
    ]
    expected = [1.0, 1.0, 1.0, np.sqrt(0.5), np.sqrt(2.0)]
    np.testing.assert_allclose(surface_distance(points, _triangle()), expected, atol=1e-14)


def test_hausdorff():
    assert hausdorff(_triangle(), _triangle(1.5)) == pytest.approx(0.5, rel=1e-12)
    config = make_config(ISO, 0.3)
    cap = build_truncated_wulff(ISO, config, 4)
    assert hausdorff(cap, cap) == 0.0
    # vertex-to-face distances do not depend on how finely the other side is sampled
    fine = build_truncated_wulff(ISO, config, 8)
    assert hausdorff(cap, fine) < 0.1


@pytest.mark.parametrize("aniso, omega0", [(ISO, 0.4), (ELLIPSOIDAL, -0.3)])
def test_fit_recovers_homothety(aniso, omega0):
    config = make_config(aniso, omega0)
    cap = build_truncated_wulff(aniso, config, 6)
    moved = affine_transform(cap, scale=(1.3, 1.3, 1.3), shift=(0.2, -0.1, 0.0))
    fit = fit_truncated_wulff(moved, aniso, config)
    assert fit.scale == pytest.approx(1.3, rel=1e-8)
    np.testing.assert_allclose(fit.shift, (0.2, -0.1), atol=1e-8)
    assert fit.gauge_rms < 1e-10
    assert fit.relative_hausdorff < 2e-2
    assert set(fit.to_dict()) == {"shift", "scale", "gauge_rms", "hausdorff", "relative_hausdorff"}


def test_restore_volume():
    config = make_config(ISO, 0.0)
    cap = build_truncated_wulff(ISO, config, 5)
    target = enclosed_volume(cap)
    grown = affine_transform(cap, scale=(1.05, 1.05, 1.05))
    restored = restore_volume(grown, target)
    assert enclosed_volume(restored) == pytest.approx(target, rel=1e-9)
    np.testing.assert_array_equal(restored.vertices[restored.wall_mask, 2], 0.0)


def test_sobolev_velocity_preserves_volume():
    mesh, config = _stretched_cap(ELLIPSOIDAL, 0.3)
    g = energy_gradient(mesh, ELLIPSOIDAL, config)
    vol_grad = constrain(mesh, volume_gradient(mesh))
    velocity, lam = sobolev_velocity(mesh, g, vol_grad)
    assert np.sum(velocity * vol_grad) == pytest.approx(0.0, abs=1e-12 * np.abs(velocity).max())
    np.testing.assert_array_equal(velocity[mesh.wall_mask, 2], 0.0)
    # a descent direction
    assert np.sum(velocity * g) < 0.0
    assert lam > 0.0


def test_flow_step_descends():
    mesh, config = _stretched_cap()
    flowcfg = FlowConfig()
    moved = flow_step(mesh, ISO, config, flowcfg)
    E0 = energy(mesh, ISO, config)
    E1 = energy(moved, ISO, config)
    assert E1.total < E0.total
    assert abs(E1.volume - E0.volume) / E0.volume <= flowcfg.volume_tol
    np.testing.assert_array_equal(moved.triangles, mesh.triangles)


@pytest.mark.parametrize(
    "aniso, omega0", [(ISO, 0.3), (ISO, -0.4), (ELLIPSOIDAL, 0.5), (ELLIPSOIDAL, -0.4)]
)
def test_wulff_cap_is_a_fixed_point(aniso, omega0):
    config = make_config(aniso, omega0)
    cap = build_truncated_wulff(aniso, config, 6)
    flowcfg = FlowConfig()
    assert is_stationary(cap, aniso, config, 1e-8)
    assert flow_step(cap, aniso, config, flowcfg) is cap

    trace = run_flow(cap, aniso, config, flowcfg)
    assert trace.converged
    assert len(trace.records) == 1
    assert trace.records[0]["camc_residual"] <= 1e-8
    assert trace.records[0]["capillary_residual"] <= 1e-8
    assert trace.mesh is cap
    assert trace.fit.relative_hausdorff < 2e-2


def test_sampled_cap_without_normals_is_not_stationary():
    config = make_config(ISO, 0.3)
    cap = _without_normals(build_truncated_wulff(ISO, config, 4))
    assert not is_stationary(cap, ISO, config, 1.0)


@pytest.mark.parametrize("aniso, omega0", [(ISO, 0.0), (ELLIPSOIDAL, 0.3)])
def test_flow_decreases_energy(aniso, omega0):
    mesh, config = _stretched_cap(aniso, omega0)
    flowcfg = FlowConfig(max_steps=8, camc_target=1e-12, hausdorff_every=4)
    with pytest.warns(UserWarning, match="flow stopped"):
        trace = run_flow(mesh, aniso, config, flowcfg)
    assert not trace.converged
    df = trace.to_dataframe()
    assert len(df) == 9
    energies = df.energy.values
    assert np.all(np.diff(energies) <= ENERGY_SLACK * np.abs(energies[:-1]))
    assert energies[-1] < energies[0]
    assert df.camc_residual.values[-1] < df.camc_residual.values[0]
    assert trace.volume_drift <= flowcfg.volume_tol
    assert np.isfinite(df.hausdorff.values[4])
    assert np.isfinite(df.hausdorff.values[-1])


@pytest.mark.parametrize("aniso", [ISO, ELLIPSOIDAL])
def test_perturbed_cap_flows_to_wulff(aniso):
    config = make_config(aniso, 0.3)
    cap = build_truncated_wulff(aniso, config, 8)
    mesh = perturb_mesh(cap, 0.05, seed=0)
    flowcfg = FlowConfig(max_steps=300, camc_target=1e-3, hausdorff_every=0)
    trace = run_flow(mesh, aniso, config, flowcfg)

    assert trace.converged
    last = trace.records[-1]
    assert last["camc_residual"] <= 1e-3
    assert last["capillary_residual"] <= 1e-2
    assert trace.fit.relative_hausdorff <= 2e-2
    assert trace.volume_drift <= flowcfg.volume_tol


def test_translated_cap_flows_back_to_wulff():
    config = make_config(ISO, 0.3)
    cap = build_truncated_wulff(ISO, config, 6)
    shifted = affine_transform(cap, shift=(0.3, 0.0, 0.0))

    # with exact normals the translate is itself a capillary CAMC surface
    trace = run_flow(shifted, ISO, config, FlowConfig())
    assert trace.converged
    assert len(trace.records) == 1

    flowcfg = FlowConfig(max_steps=200, hausdorff_every=0)
    trace = run_flow(_without_normals(shifted), ISO, config, flowcfg)
    assert trace.converged
    assert trace.records[-1]["camc_residual"] <= flowcfg.camc_target
    assert trace.fit.scale == pytest.approx(1.0, rel=1e-2)
    np.testing.assert_allclose(trace.fit.shift, (0.3, 0.0), atol=2e-2)
    assert trace.fit.relative_hausdorff <= 1e-2


def test_flow_checkpoints_and_refinement(tmp_path):
    mesh, config = _stretched_cap(resolution=3)
    flowcfg = FlowConfig(
        step=1e-2, max_steps=2, camc_target=1e-12, checkpoint_every=1, refine_every=2
    )
    with pytest.warns(UserWarning):
        trace = run_flow(mesh, ISO, config, flowcfg, checkpoint_dir=tmp_path / "checkpoints")
    assert trace.mesh.n_faces == 4 * mesh.n_faces
    assert read_off(tmp_path / "checkpoints" / "step_00001.off").n_faces == mesh.n_faces

    trace.to_csv(tmp_path / "trace.csv")
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert header.startswith("step,energy,volume,camc_residual")


def test_flow_detects_poor_triangles():
    mesh, config = _stretched_cap()
    with pytest.raises(MeshDegenerationError):
        flow_step(mesh, ISO, config, FlowConfig(min_quality=0.999))
