import dataclasses
import json

import numpy as np
import pandas as pd
import pytest

from anisocap.anisotropy import Anisotropy, make_config
from anisocap.bernstein import (
    area_within,
    dirichlet_energy,
    growth_estimate,
    log_cutoff,
    psi_field,
    sample_extent,
)
from anisocap.errors import BoundViolationError, SampleExtentError, ValidationError
from anisocap.geometry import compute_state
from anisocap.geometry.generators import build_capillary_plane, build_truncated_wulff, graded_radii

ISO = Anisotropy()


@pytest.fixture(scope="module")
def graded_plane():
    config = make_config(ISO, 0.0)
    # geometric ratio 2 ** (1 / 8), so 4, 8, 16 and 32 are ring radii
    radii = graded_radii(2.0, 64.0, 11, anchor=32.0)
    mesh = build_capillary_plane(ISO, config, radii=radii)
    return mesh, config


def test_log_cutoff():
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [4.0, 0.0, 0.0], [0.0, 0.0, 9.0]])
    f = log_cutoff(points, 1.0, 4.0)
    np.testing.assert_allclose(f, [1.0, 1.0, 0.5, 0.0, 0.0], atol=1e-15)
    with pytest.raises(ValidationError):
        log_cutoff(points, 4.0, 1.0)


def test_area_within_half_disk():
    config = make_config(ISO, 0.5)
    mesh = build_capillary_plane(ISO, config, radius=2.0, resolution=12)
    assert area_within(mesh, 3.0) == pytest.approx(mesh.total_area)
    for r in (0.55, 1.0, 1.37):
        assert area_within(mesh, r) / r**2 == pytest.approx(np.pi / 2.0, rel=2e-2)
    assert sample_extent(mesh) == pytest.approx(2.0)
    assert sample_extent(build_truncated_wulff(ISO, config, 3)) == np.inf


def test_psi_on_tilted_plane():
    config = make_config(ISO, 0.5)
    mesh = build_capillary_plane(ISO, config, radius=1.0, resolution=4)
    state = compute_state(mesh, ISO, config)
    # F(nu) + omega0 <E3, nu> with nu_3 = -omega0
    np.testing.assert_allclose(psi_field(state, config), 0.75)

    narrow = dataclasses.replace(config, C1=0.9, C2=1.0)
    with pytest.raises(BoundViolationError):
        psi_field(state, narrow)
    np.testing.assert_allclose(psi_field(state, narrow, check=False), 0.75)


def test_dirichlet_energy_of_linear_field():
    config = make_config(ISO, 0.0)
    mesh = build_capillary_plane(ISO, config, radius=1.0, resolution=6)
    # the vertical plane through E2: x_2 has unit gradient
    f = mesh.vertices[:, 1]
    assert dirichlet_energy(mesh, f) == pytest.approx(mesh.total_area, rel=1e-10)


def test_growth_on_graded_plane(graded_plane, tmp_path):
    mesh, config = graded_plane
    report = growth_estimate(mesh, ISO, config, radii=[4.0, 8.0, 16.0, 32.0])
    np.testing.assert_allclose(report.growth_ratios, np.pi / 2.0, rtol=1e-2)
    assert report.growth_constant == max(report.growth_ratios)
    assert report.cutoff_radii == (4.0, 32.0)
    # half of the full-plane capacity 2 pi / ln(r2 / r1)
    assert report.dirichlet_integral == pytest.approx(np.pi / np.log(8.0), rel=1e-2)
    assert report.bound_constant == pytest.approx(1.0)
    assert abs(report.flatness_integral) < 1e-12
    assert report.flatness_integral <= report.cutoff_bound

    report.to_json(tmp_path / "growth.json")
    d = json.loads((tmp_path / "growth.json").read_text())
    assert d["cutoff_bound"] == pytest.approx(report.cutoff_bound)
    report.to_csv(tmp_path / "growth.csv")
    df = pd.read_csv(tmp_path / "growth.csv")
    assert list(df.columns) == ["radius", "growth_ratio"]
    assert len(df) == 4


def test_cutoff_shrinks_dirichlet_integral(graded_plane):
    mesh, config = graded_plane
    near = growth_estimate(mesh, ISO, config, radii=[4.0], cutoff=(4.0, 8.0))
    far = growth_estimate(mesh, ISO, config, radii=[4.0], cutoff=(4.0, 32.0))
    assert far.dirichlet_integral < near.dirichlet_integral


def test_growth_sample_extent(graded_plane):
    mesh, config = graded_plane
    with pytest.raises(SampleExtentError):
        growth_estimate(mesh, ISO, config, radii=[4.0, 128.0])
    with pytest.raises(ValidationError):
        growth_estimate(mesh, ISO, config, radii=[-1.0])


def test_graded_rings_hit_the_cutoff_radii():
    radii = graded_radii(2.0, 64.0, 11, anchor=32.0)
    for r in (4.0, 8.0, 16.0, 32.0):
        assert np.min(np.abs(radii - r)) < 1e-12
