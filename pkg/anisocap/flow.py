"""
Volume-preserving gradient flow of the anisotropic capillary energy on
meshes, and comparison of the result with the best-fitting truncated Wulff
shape
"""
import dataclasses
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.optimize
from scipy.spatial import cKDTree
from tqdm import tqdm

from .anisotropy import wulff_gauge
from .errors import ConfigError, MeshDegenerationError, StepUnderflowError
from .geometry.fem import SobolevSolver, sobolev_length2, sobolev_matrix
from .geometry.generators import (
    affine_transform,
    build_truncated_wulff,
    resolution_for_faces,
    refine,
)
from .geometry.mesh import enclosed_volume, volume_gradient, write_off
from .geometry.state import compute_state
from .sphere import E3
from .variational import constrain, energy, energy_gradient, first_variation

logger = logging.getLogger(__name__)

MAX_HALVINGS = 40
STEP_GROWTH = 1.25
# steps are measured in units of the Sobolev length squared, Area / 4 pi
MAX_STEP = 0.5
MAX_SMOOTHING = 0.1
# tangential smoothing stays on while the CAMC residual exceeds this
# multiple of the target
SMOOTHING_CUTOFF = 10.0
# relative energy increase still accepted as a descent step (roundoff)
ENERGY_SLACK = 1e-13


@dataclass(frozen=True)
class FlowConfig:
    step: float = 0.25
    max_steps: int = 500
    camc_target: float = 1e-3
    volume_tol: float = 1e-4
    smoothing: float = 0.05
    refine_every: int = 0
    min_quality: float = 0.05
    checkpoint_every: int = 0
    hausdorff_every: int = 25

    def __post_init__(self):
        if not 0.0 < self.step <= MAX_STEP:
            raise ConfigError(f"step must lie in (0, {MAX_STEP}], got {self.step}")
        for name in ("camc_target", "volume_tol", "min_quality"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.smoothing <= MAX_SMOOTHING:
            raise ConfigError(
                f"smoothing weight must lie in [0, {MAX_SMOOTHING}], got {self.smoothing}"
            )
        if self.max_steps < 0:
            raise ConfigError("max_steps must be nonnegative")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown flow settings: {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def from_json(cls, filepath):
        try:
            d = json.loads(Path(filepath).read_text())
        except json.JSONDecodeError as ex:
            raise ConfigError(f"could not parse {filepath}: {ex}") from ex
        return cls.from_dict(d)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class WulffFit:
    """
    Truncated Wulff cap s (omega0 E3 + W) + t with t horizontal
    """

    shift: tuple
    scale: float
    gauge_rms: float
    hausdorff: float
    diameter: float

    @property
    def relative_hausdorff(self):
        return self.hausdorff / self.diameter

    def to_dict(self):
        return dict(
            shift=list(self.shift),
            scale=self.scale,
            gauge_rms=self.gauge_rms,
            hausdorff=self.hausdorff,
            relative_hausdorff=self.relative_hausdorff,
        )


def closest_points_on_triangles(p, a, b, c):
    """
    Closest point to p on triangle (a, b, c), row by row
    """
    ab, ac, ap = b - a, c - a, p - a
    bp, cp = p - b, p - c
    d1 = np.sum(ab * ap, axis=-1)
    d2 = np.sum(ac * ap, axis=-1)
    d3 = np.sum(ab * bp, axis=-1)
    d4 = np.sum(ac * bp, axis=-1)
    d5 = np.sum(ab * cp, axis=-1)
    d6 = np.sum(ac * cp, axis=-1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        out = a + ab * (vb / denom)[:, None] + ac * (vc / denom)[:, None]
        # edges, then vertices; later assignments take precedence
        e_bc = (d4 - d3) + (d5 - d6)
        w = (d4 - d3) / e_bc
        m = (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0)
        out[m] = (b + (c - b) * w[:, None])[m]
        w = d2 / (d2 - d6)
        m = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
        out[m] = (a + ac * w[:, None])[m]
        v = d1 / (d1 - d3)
        m = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
        out[m] = (a + ab * v[:, None])[m]
    m = (d6 >= 0.0) & (d5 <= d6)
    out[m] = c[m]
    m = (d3 >= 0.0) & (d4 <= d3)
    out[m] = b[m]
    m = (d1 <= 0.0) & (d2 <= 0.0)
    out[m] = a[m]
    return out


def surface_distance(points, mesh):
    """
    Distance from each point to the triangulated surface of `mesh`.
    Candidate faces are those whose centroid lies within the nearest
    centroid distance plus the largest centroid-to-vertex radius
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    corners = mesh.vertices[mesh.triangles]
    centroids = corners.mean(axis=1)
    reach = float(np.max(np.linalg.norm(corners - centroids[:, None], axis=-1)))
    tree = cKDTree(centroids)
    d0, _ = tree.query(points)
    out = np.empty(len(points))
    for i, (p, r) in enumerate(zip(points, d0)):
        faces = tree.query_ball_point(p, r + reach)
        tri = corners[faces]
        a, b, c = tri.transpose(1, 0, 2)
        q = closest_points_on_triangles(np.broadcast_to(p, a.shape), a, b, c)
        out[i] = np.min(np.linalg.norm(q - p, axis=-1))
    return out


def hausdorff(mesh_a, mesh_b):
    """
    Symmetric Hausdorff distance between two triangulated surfaces, measured
    from the vertices of each to the faces of the other
    """
    d_ab = surface_distance(mesh_a.vertices, mesh_b)
    d_ba = surface_distance(mesh_b.vertices, mesh_a)
    return float(max(np.max(d_ab), np.max(d_ba)))


def _gauge_residual(params, points, aniso, omega0):
    t1, t2, s = params
    y = (points - np.array([t1, t2, 0.0])) / s - omega0 * E3
    return wulff_gauge(aniso, y) - 1.0


def fit_truncated_wulff(mesh, aniso, config, resolution=None):
    """
    Least-squares fit of horizontal translation and homothety of the
    truncated Wulff cap to the mesh vertices, measured by the Wulff gauge
    """
    V = mesh.vertices
    top = config.omega0 + float(aniso.value(E3))
    s0 = float(np.max(V[:, 2]) / top) if top > 0.0 else 1.0
    x0 = [float(np.mean(V[:, 0])), float(np.mean(V[:, 1])), max(s0, 1e-3)]
    result = scipy.optimize.least_squares(
        _gauge_residual,
        x0,
        args=(V, aniso, config.omega0),
        bounds=([-np.inf, -np.inf, 1e-9], [np.inf, np.inf, np.inf]),
        xtol=1e-12,
        ftol=1e-12,
    )
    t1, t2, s = result.x

    if resolution is None:
        resolution = max(8, 2 * resolution_for_faces(mesh.n_faces))
    reference = affine_transform(
        build_truncated_wulff(aniso, config, resolution), scale=(s, s, s), shift=(t1, t2, 0.0)
    )
    fit = WulffFit(
        shift=(float(t1), float(t2)),
        scale=float(s),
        gauge_rms=float(np.sqrt(np.mean(result.fun**2))),
        hausdorff=hausdorff(mesh, reference),
        diameter=mesh.bbox_diagonal,
    )
    logger.debug(f"Wulff fit: {fit.to_dict()}")
    return fit


def _tangential_smoothing(mesh, weight):
    """
    Umbrella-operator displacement of interior vertices with its normal
    component removed
    """
    if weight == 0.0:
        return np.zeros_like(mesh.vertices)
    A = mesh.adjacency
    deg = np.asarray(A.sum(axis=1)).ravel()
    lap = (A @ mesh.vertices) / deg[:, None] - mesh.vertices
    nu = mesh.vertex_normals
    lap -= np.sum(lap * nu, axis=-1)[:, None] * nu
    lap[mesh.boundary_mask] = 0.0
    return weight * lap


def restore_volume(mesh, volume, n_iter=3, rtol=1e-10):
    """
    Uniform offset along the admissible normal directions so that the
    enclosed volume equals `volume`
    """
    for _ in range(n_iter):
        dV = volume - enclosed_volume(mesh)
        if abs(dV) <= rtol * abs(volume):
            break
        d = constrain(mesh, mesh.vertex_normals)
        rate = float(np.sum(volume_gradient(mesh) * d))
        if rate == 0.0:
            break
        mesh = mesh.with_vertices(mesh.vertices + (dV / rate) * d)
    return mesh


def sobolev_velocity(mesh, gradient, vol_grad, S=None):
    """
    Volume-preserving H^1 gradient -S^-1 (g - lambda grad V) for S = M + l^2 K.
    Each coordinate is solved with its own Dirichlet set: cut vertices are
    fixed, wall vertices keep x3. lambda is chosen so that <grad V, v> = 0
    """
    if S is None:
        S = sobolev_matrix(mesh)
    horizontal = SobolevSolver(S, mesh.cut_mask)
    vertical = SobolevSolver(S, mesh.cut_mask | mesh.wall_mask)
    Sg = np.zeros_like(gradient)
    Sv = np.zeros_like(vol_grad)
    for k, solver in enumerate((horizontal, horizontal, vertical)):
        Sg[:, k] = solver.solve(gradient[:, k])
        Sv[:, k] = solver.solve(vol_grad[:, k])
    denom = float(np.sum(vol_grad * Sv))
    lam = float(np.sum(gradient * Sv)) / denom if denom != 0.0 else 0.0
    return -(Sg - lam * Sv), lam


def is_stationary(mesh, aniso, config, target):
    """
    Exact-normal stationarity: with normals attached, the surface is a
    capillary CAMC surface when sup |H_F - mean H_F| (Cahn-Hoffman estimate)
    and the capillary residual are both within `target`. Meshes without
    normals never pass
    """
    if mesh.exact_normals is None:
        return False
    state = compute_state(mesh, aniso, config, curvature="cahn-hoffman")
    cap = float(np.max(np.abs(state.capillary_residual), initial=0.0))
    return state.camc_residual() <= target and cap <= target


@dataclass
class StepResult:
    mesh: object
    energy: float
    step: float
    halvings: int


def _descend(mesh, aniso, config, flowcfg, step, camc=None):
    E0 = energy(mesh, aniso, config)
    length2 = sobolev_length2(mesh)
    g = energy_gradient(mesh, aniso, config)
    vol_grad = constrain(mesh, volume_gradient(mesh))
    velocity, _ = sobolev_velocity(mesh, g, vol_grad)

    weight = flowcfg.smoothing
    if camc is not None and camc <= SMOOTHING_CUTOFF * flowcfg.camc_target:
        weight = 0.0
    smoothing = _tangential_smoothing(mesh, weight)

    for halvings in range(MAX_HALVINGS + 1):
        moved = mesh.with_vertices(mesh.vertices + step * length2 * velocity + smoothing)
        moved = restore_volume(moved, E0.volume)
        E1 = energy(moved, aniso, config)
        drift = abs(E1.volume - E0.volume) / abs(E0.volume)
        if E1.total <= E0.total + ENERGY_SLACK * abs(E0.total) and drift <= flowcfg.volume_tol:
            break
        step *= 0.5
        if halvings == 1 and weight:
            # smoothing alone may raise the energy near a critical point
            smoothing = np.zeros_like(smoothing)
    else:
        raise StepUnderflowError(
            f"no energy decrease after {MAX_HALVINGS} step halvings (step {step:.3e})"
        )

    quality = float(np.min(moved.triangle_quality))
    if quality < flowcfg.min_quality:
        raise MeshDegenerationError(
            f"minimum triangle quality {quality:.3e} fell below {flowcfg.min_quality}"
        )
    return StepResult(mesh=moved, energy=E1.total, step=step, halvings=halvings)


def flow_step(mesh, aniso, config, flowcfg, step=None):
    """
    One accepted descent step: move along the volume-preserving Sobolev
    gradient with wall vertices sliding on the plane and cut vertices fixed,
    restore the volume, and halve the step until the energy does not
    increase. Stationary meshes (see `is_stationary`) are returned unchanged
    """
    if step is None:
        step = flowcfg.step
    if is_stationary(mesh, aniso, config, flowcfg.camc_target):
        return mesh
    return _descend(mesh, aniso, config, flowcfg, step).mesh


@dataclass
class FlowTrace:
    records: list = field(default_factory=list)
    mesh: object = None
    converged: bool = False
    fit: WulffFit = None

    def to_dataframe(self):
        return pd.DataFrame.from_records(self.records)

    def to_csv(self, filepath):
        self.to_dataframe().to_csv(filepath, index=False, float_format="%.12g")

    @property
    def volume_drift(self):
        volumes = [r["volume"] for r in self.records]
        return abs(volumes[-1] - volumes[0]) / abs(volumes[0])


def _record(i, mesh, aniso, config, step, fit=None, stationary=False):
    E = energy(mesh, aniso, config)
    var = first_variation(mesh, aniso, config)
    camc, cap = var.camc_residual, var.capillary_residual
    if stationary:
        state = compute_state(mesh, aniso, config, curvature="cahn-hoffman")
        camc = state.camc_residual()
        cap = float(np.max(np.abs(state.capillary_residual), initial=0.0))
    return dict(
        step=i,
        energy=E.total,
        volume=E.volume,
        camc_residual=camc,
        capillary_residual=cap,
        multiplier=var.multiplier,
        step_size=step,
        hausdorff=fit.relative_hausdorff if fit is not None else np.nan,
    )


def run_flow(mesh, aniso, config, flowcfg, checkpoint_dir=None, progress=False):
    """
    Iterate descent steps until the CAMC residual reaches the target or
    `max_steps` is exhausted. A mesh with exact normals that already passes
    `is_stationary` is returned after zero steps. Non-convergence is reported
    through the trace and a warning
    """
    trace = FlowTrace()
    step = flowcfg.step
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(exist_ok=True, parents=True)

    stationary = is_stationary(mesh, aniso, config, flowcfg.camc_target)
    record = _record(0, mesh, aniso, config, step, stationary=stationary)
    trace.records.append(record)
    for i in tqdm(range(1, flowcfg.max_steps + 1), desc="flow", disable=not progress):
        if stationary or record["camc_residual"] <= flowcfg.camc_target:
            trace.converged = True
            break
        if flowcfg.refine_every and i % flowcfg.refine_every == 0:
            mesh = refine(mesh)
        result = _descend(mesh, aniso, config, flowcfg, step, camc=record["camc_residual"])
        mesh = result.mesh
        step = min(result.step * STEP_GROWTH, MAX_STEP)

        fit = None
        if flowcfg.hausdorff_every and i % flowcfg.hausdorff_every == 0:
            fit = fit_truncated_wulff(mesh, aniso, config)
        record = _record(i, mesh, aniso, config, result.step, fit)
        trace.records.append(record)
        logger.debug(
            f"flow step {i}: E={record['energy']:.10f} camc={record['camc_residual']:.3e}"
            f" halvings={result.halvings}"
        )
        if checkpoint_dir is not None and flowcfg.checkpoint_every:
            if i % flowcfg.checkpoint_every == 0:
                write_off(mesh, checkpoint_dir / f"step_{i:05d}.off")
    else:
        trace.converged = stationary or record["camc_residual"] <= flowcfg.camc_target

    trace.mesh = mesh
    trace.fit = fit_truncated_wulff(mesh, aniso, config)
    trace.records[-1]["hausdorff"] = trace.fit.relative_hausdorff
    if not trace.converged:
        warnings.warn(
            f"flow stopped after {len(trace.records) - 1} steps with CAMC residual"
            f" {record['camc_residual']:.3e} above target {flowcfg.camc_target:.1e}"
        )
    logger.info(
        f"flow finished: converged={trace.converged} steps={len(trace.records) - 1}"
        f" relative Hausdorff={trace.fit.relative_hausdorff:.3e}"
    )
    return trace
