"""
Second variation of the capillary energy as a quadratic form on piecewise
linear scalar fields, and its constrained generalized eigenproblem
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse

from ..errors import EigenSolveError, MeshError, ValidationError
from ..geometry.fem import mass_matrix, stiffness_matrix

logger = logging.getLogger(__name__)

# spectral acceptance band is BAND_CONSTANT * mean edge length
BAND_CONSTANT = 1.5
RESIDUAL_TOL = 1e-8
MODES = ("weak", "strong")


@dataclass
class StabilityForm:
    """
    Q = K - diag(tr(A_F h^2) A_i) - diag(q_F s_i) over all vertices, with M
    the consistent P1 mass matrix. Cut vertices carry Dirichlet conditions
    and are excluded through `free`
    """

    Q: scipy.sparse.csr_matrix
    M: scipy.sparse.csr_matrix
    K: scipy.sparse.csr_matrix
    potential: np.ndarray
    boundary: np.ndarray
    free: np.ndarray
    mesh_size: float

    @property
    def n(self):
        return self.Q.shape[0]

    def quadratic(self, f, g=None):
        f = np.asarray(f, dtype=float)
        g = f if g is None else np.asarray(g, dtype=float)
        return float(f @ (self.Q @ g))

    def mass(self, f):
        f = np.asarray(f, dtype=float)
        return float(f @ (self.M @ f))

    def to_coo(self, filepath, which="Q"):
        """
        Write a matrix as `row col value` lines
        """
        A = getattr(self, which).tocoo()
        order = np.lexsort((A.col, A.row))
        with open(filepath, "w") as fh:
            for r, c, v in zip(A.row[order], A.col[order], A.data[order]):
                fh.write(f"{r} {c} {v:.17g}\n")


def assemble(mesh, state, config):
    """
    Q(f, f) = int <A_F grad f, grad f> - tr(A_F h^2) f^2 dA - oint q_F f^2 ds
    with A_F at face normals, the curvature potential lumped at vertices and
    the Robin term integrated by the trapezoid rule along the contact line
    """
    AF = config.aniso.hessian(mesh.face_normals)
    AF = 0.5 * (AF + np.swapaxes(AF, -1, -2))
    K = stiffness_matrix(mesh, AF)
    M = mass_matrix(mesh)

    potential = state.trace_AF_h2 * state.areas
    boundary = np.zeros(mesh.n_vertices)
    if len(state.boundary_index):
        np.add.at(boundary, state.boundary_index, state.q_F * state.boundary_weights)
    Q = (K - scipy.sparse.diags(potential) - scipy.sparse.diags(boundary)).tocsr()
    Q = 0.5 * (Q + Q.T)

    if not (np.all(np.isfinite(Q.data)) and np.all(np.isfinite(M.data))):
        raise MeshError("non-finite entries in the stability form (degenerate geometry)")
    form = StabilityForm(
        Q=Q.tocsr(),
        M=M,
        K=K,
        potential=potential,
        boundary=boundary,
        free=mesh.free_mask.copy(),
        mesh_size=mesh.mean_edge_length,
    )
    logger.debug(f"assembled stability form on {int(np.sum(form.free))} free vertices")
    return form


def _householder(c):
    """
    Householder vector w with (I - 2 w w^T) e_0 parallel to c
    """
    c = c / np.linalg.norm(c)
    w = c.copy()
    w[0] += np.copysign(1.0, c[0]) if c[0] != 0.0 else 1.0
    return w / np.linalg.norm(w)


def _reflect(A, w):
    """
    H A H for H = I - 2 w w^T
    """
    Aw = A @ w
    wAw = w @ Aw
    return A - 2.0 * np.outer(w, Aw) - 2.0 * np.outer(Aw, w) + 4.0 * wAw * np.outer(w, w)


def spectrum(form, k=6, mode="weak", band_constant=BAND_CONSTANT):
    """
    Lowest `k` eigenpairs of Q f = lambda M f on the free vertices. In weak
    mode trial functions are M-orthogonal to constants (volume preserving
    variations); strong mode is unconstrained
    """
    if mode not in MODES:
        raise NotImplementedError(mode)
    if k < 1:
        raise ValidationError("k must be at least 1")
    free = np.flatnonzero(form.free)
    Q = form.Q[free][:, free].toarray()
    M = form.M[free][:, free].toarray()

    if mode == "weak":
        w = _householder(M @ np.ones(len(free)))
        Qz = _reflect(Q, w)[1:, 1:]
        Mz = _reflect(M, w)[1:, 1:]
    else:
        Qz, Mz = Q, M
    k = min(k, Qz.shape[0])

    try:
        lam, Y = scipy.linalg.eigh(Qz, Mz, subset_by_index=[0, k - 1])
    except (np.linalg.LinAlgError, ValueError) as ex:
        raise EigenSolveError(f"generalized eigensolve failed: {ex}") from ex

    # |Q v - lambda M v| per unit |v|
    residuals = np.linalg.norm(Qz @ Y - (Mz @ Y) * lam, axis=0) / np.linalg.norm(Y, axis=0)
    if np.any(residuals > RESIDUAL_TOL):
        raise EigenSolveError(
            f"eigenpair residual {np.max(residuals):.2e} |v| exceeds {RESIDUAL_TOL:.1e} |v|"
        )

    if mode == "weak":
        Y = np.vstack([np.zeros((1, k)), Y])
        Y = Y - 2.0 * np.outer(w, w @ Y)
    vectors = np.zeros((form.n, k))
    vectors[free] = Y

    band = band_constant * form.mesh_size
    report = StabilityReport(
        eigenvalues=lam,
        eigenvectors=vectors,
        residuals=residuals,
        mode=mode,
        band=band,
    )
    if not report.stable:
        report.witness = vectors[:, 0].copy()
    logger.info(
        f"{mode} spectrum: lambda_min={report.lambda_min:.6f} band={band:.4f}"
        f" verdict={report.verdict}"
    )
    return report


@dataclass
class StabilityReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    mode: str
    band: float
    witness: np.ndarray = None
    phi_value: float = None
    rigidity_gap: float = None
    extra: dict = field(default_factory=dict)

    @property
    def lambda_min(self):
        return float(self.eigenvalues[0])

    @property
    def stable(self):
        return self.lambda_min >= -self.band

    @property
    def verdict(self):
        return "stable" if self.stable else "unstable"

    def near_zero(self):
        return int(np.sum(np.abs(self.eigenvalues) <= self.band))

    def to_dict(self):
        d = dict(
            mode=self.mode,
            eigenvalues=self.eigenvalues.tolist(),
            residuals=self.residuals.tolist(),
            band=self.band,
            verdict=self.verdict,
            lambda_min=self.lambda_min,
            n_near_zero=self.near_zero(),
        )
        if self.phi_value is not None:
            d["q_phi"] = self.phi_value
        if self.rigidity_gap is not None:
            d["rigidity_gap"] = self.rigidity_gap
        if self.witness is not None:
            d["witness"] = self.witness.tolist()
        d.update(self.extra)
        return d

    def to_json(self, filepath):
        Path(filepath).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2))
