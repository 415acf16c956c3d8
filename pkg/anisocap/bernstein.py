"""
Estimates for the Bernstein-type argument on compact samples of capillary
surfaces: area growth ratios, the weight psi, logarithmic cutoffs and both
sides of the stability estimate
    int f^2 tr(h_F^2) dA <= C2^2 / C1 * Lambda * int |grad f|^2 dA
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import BoundViolationError, SampleExtentError, ValidationError
from .geometry.fem import stiffness_matrix
from .geometry.state import compute_state

logger = logging.getLogger(__name__)

SUBDIVISIONS = 16


def psi_field(state, config, check=True):
    """
    psi = F(nu) + omega0 <EF, nu>, checked against the sampled bounds
    C1 <= psi <= C2
    """
    psi = state.psi
    if check:
        slack = max(1e-2 * (config.C2 - config.C1), 1e-9)
        lo, hi = float(np.min(psi)), float(np.max(psi))
        if lo < config.C1 - slack or hi > config.C2 + slack:
            raise BoundViolationError(
                f"psi range [{lo:.6f}, {hi:.6f}] leaves [C1, C2] ="
                f" [{config.C1:.6f}, {config.C2:.6f}]"
            )
    return psi


def log_cutoff(mesh, r1, r2):
    """
    1 on |x| <= r1, ln(r2/|x|) / ln(r2/r1) on the annulus and 0 beyond r2
    """
    if not 0.0 < r1 < r2:
        raise ValidationError(f"need 0 < r1 < r2, got r1={r1}, r2={r2}")
    points = getattr(mesh, "vertices", mesh)
    r = np.linalg.norm(points, axis=-1)
    with np.errstate(divide="ignore"):
        f = np.log(r2 / r) / np.log(r2 / r1)
    return np.clip(f, 0.0, 1.0)


def _subdivision_points(n):
    """
    Barycentric centroids of the n^2 subtriangles of a uniformly subdivided
    triangle
    """
    pts = []
    for i in range(n):
        for j in range(n - i):
            pts.append(((i + 1 / 3) / n, (j + 1 / 3) / n))
            if i + j < n - 1:
                pts.append(((i + 2 / 3) / n, (j + 2 / 3) / n))
    uv = np.array(pts)
    return np.column_stack([1.0 - uv.sum(axis=1), uv])


def area_within(mesh, r):
    """
    Area of the part of the mesh inside the ball B_r(0). Faces cut by the
    sphere are resolved on a uniform barycentric subdivision
    """
    V = mesh.vertices
    t = mesh.triangles
    dist = np.linalg.norm(V, axis=-1)[t]
    inside = np.all(dist <= r, axis=-1)
    straddle = np.any(dist <= r, axis=-1) & ~inside
    area = float(np.sum(mesh.face_areas[inside]))

    if np.any(straddle):
        bary = _subdivision_points(SUBDIVISIONS)
        corners = V[t[straddle]]
        points = np.einsum("sk,fkd->fsd", bary, corners)
        frac = np.mean(np.linalg.norm(points, axis=-1) <= r, axis=-1)
        area += float(np.sum(frac * mesh.face_areas[straddle]))
    return area


def dirichlet_energy(mesh, f):
    f = np.asarray(f, dtype=float)
    return float(f @ (stiffness_matrix(mesh) @ f))


def sample_extent(mesh):
    """
    Radius of the largest ball about the origin that stays inside the
    sample (distance to the nearest truncation vertex)
    """
    cut = mesh.cut_mask
    if not np.any(cut):
        return np.inf
    return float(np.min(np.linalg.norm(mesh.vertices[cut], axis=-1)))


@dataclass
class GrowthReport:
    radii: list
    growth_ratios: list
    growth_constant: float
    cutoff_radii: tuple
    flatness_integral: float
    dirichlet_integral: float
    bound_constant: float

    @property
    def cutoff_bound(self):
        return self.bound_constant * self.dirichlet_integral

    def to_dict(self):
        return dict(
            radii=list(self.radii),
            growth_ratios=list(self.growth_ratios),
            growth_constant=self.growth_constant,
            cutoff_radii=list(self.cutoff_radii),
            flatness_integral=self.flatness_integral,
            dirichlet_integral=self.dirichlet_integral,
            bound_constant=self.bound_constant,
            cutoff_bound=self.cutoff_bound,
        )

    def to_json(self, filepath):
        Path(filepath).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2))

    def to_dataframe(self):
        return pd.DataFrame(dict(radius=self.radii, growth_ratio=self.growth_ratios))

    def to_csv(self, filepath):
        self.to_dataframe().to_csv(filepath, index=False, float_format="%.12g")


def growth_estimate(mesh, aniso, config, radii, cutoff=None, state=None):
    """
    Area growth ratios Area(S cap B_r) / r^2 for every radius and both sides
    of the cutoff estimate for the logarithmic cutoff between `cutoff`
    (default: smallest and largest radius)
    """
    radii = sorted(float(r) for r in radii)
    if len(radii) == 0 or radii[0] <= 0.0:
        raise ValidationError("radii must be positive")
    r1, r2 = cutoff if cutoff is not None else (radii[0], radii[-1])
    extent = sample_extent(mesh)
    if max(radii[-1], r2) > extent:
        raise SampleExtentError(
            f"radius {max(radii[-1], r2):.4g} exceeds the sampled extent {extent:.4g}"
        )
    if state is None:
        state = compute_state(mesh, aniso, config)
    psi_field(state, config)

    ratios = [area_within(mesh, r) / r**2 for r in radii]
    f = log_cutoff(mesh, r1, r2)
    report = GrowthReport(
        radii=radii,
        growth_ratios=ratios,
        growth_constant=float(max(ratios)),
        cutoff_radii=(r1, r2),
        flatness_integral=float(np.sum(f**2 * state.trace_hF2 * state.areas)),
        dirichlet_integral=dirichlet_energy(mesh, f),
        bound_constant=config.C2**2 / config.C1 * config.Lambda,
    )
    logger.info(
        f"growth estimate: C={report.growth_constant:.6f} lhs={report.flatness_integral:.6e}"
        f" rhs={report.cutoff_bound:.6e}"
    )
    return report
