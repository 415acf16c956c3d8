import numpy as np
import pytest
import xarray as xr

from anisocap.anisotropy import Anisotropy
from anisocap.errors import ValidationError
from anisocap.pipeline import ResolutionLadder, add_convergence_orders
from anisocap.utils import convergence_order, dict_to_hash


def test_resolution_ladder(tmp_path):
    ds = (
        ResolutionLadder(Anisotropy(), omega0=0.3, output_dir=tmp_path)
        .with_resolutions(4)
        .with_resolutions(3, 4)
        .with_spectrum(k=3, mode="weak")
        .execute(quiet=True)
    )
    np.testing.assert_array_equal(ds.resolution.values, [3, 4])
    assert ds.eigenvalue.shape == (2, 3)
    assert "camc_residual_order" in ds.data_vars
    assert np.isnan(ds.minkowski_normalized_order.values[0])
    assert np.all(ds.stable.values == 1)
    assert len(list(tmp_path.glob("cap__*.off"))) == 2
    assert len(list(tmp_path.glob("cap__*.nc"))) == 2


def test_ladder_without_resolutions(tmp_path):
    ladder = ResolutionLadder(Anisotropy(), omega0=0.0, output_dir=tmp_path)
    with pytest.raises(ValidationError, match="No resolutions"):
        ladder.execute()
    with pytest.raises(ValidationError, match="serial"):
        ladder.with_resolutions(3).execute(parallel_tasks=2, debug=True)


def test_ladder_without_spectrum(tmp_path):
    ds = (
        ResolutionLadder(Anisotropy(), omega0=0.3, output_dir=tmp_path)
        .with_resolutions(3, 4)
        .with_spectrum(k=0)
        .execute(quiet=True)
    )
    assert "eigenvalue" not in ds
    assert "verdict" not in ds.attrs
    for name in ("state_camc_residual", "principal_residual", "frame_residual"):
        assert name in ds.data_vars
        assert f"{name}_order" in ds.data_vars
    # exact normals put the Cahn-Hoffman curvatures on the unit Wulff shape
    assert np.all(ds.state_camc_residual.values < 1e-8)
    assert len(list(tmp_path.glob("cap__*__weak_k0.nc"))) == 2


def test_add_convergence_orders():
    ds = xr.Dataset(
        dict(
            mesh_size=("resolution", [0.2, 0.1, 0.05]),
            camc_residual=("resolution", [1.6e-2, 4e-3, 1e-3]),
        ),
        coords=dict(resolution=[4, 8, 16]),
    )
    ds = add_convergence_orders(ds)
    np.testing.assert_allclose(ds.camc_residual_order.values[1:], 2.0)
    assert "q_phi_order" not in ds


def test_convergence_order():
    assert convergence_order(1e-2, 2.5e-3, 0.2, 0.1) == pytest.approx(2.0)
    assert np.isnan(convergence_order(0.0, 1e-3, 0.2, 0.1))
    assert np.isnan(convergence_order(np.nan, 1e-3, 0.2, 0.1))


def test_dict_to_hash():
    a = dict(aniso="iso", omega0=0.3)
    assert dict_to_hash(a) == dict_to_hash(dict(omega0=0.3, aniso="iso"))
    assert dict_to_hash(a) != dict_to_hash(dict(aniso="iso", omega0=0.4))
    nested = dict(aniso=dict(family="ellipsoidal", Q=[[2.0, 0.0], [0.0, 1.0]]), omega0=-0.2)
    assert dict_to_hash(nested) == dict_to_hash(dict(omega0=-0.2, aniso=nested["aniso"]))
    assert len(dict_to_hash(nested)) == 8
