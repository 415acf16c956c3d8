"""
Admissible anisotropies F on the unit sphere and the half-space constants
derived from them.

Every family is evaluated through its one-homogeneous extension to R^3, so
the ambient gradient of F at a unit vector z is the Wulff point
Phi(z) = F(z) z + DF(z) and the ambient Hessian at z is the operator A_F(z)
(it annihilates z and acts as D^2F + F Id on the tangent plane).
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, DerivativeCheckError, ValidationError
from .sphere import E3, check_unit, fibonacci_sphere, tangent_frame, unit

logger = logging.getLogger(__name__)

FAMILIES = ("isotropic", "ellipsoidal", "perturbed")

# p(x) restricted to the sphere, and the degree used for the homogeneous
# extension F(x) = |x| + eps p(x) |x|^(1 - degree)
PERTURBATION_POLYNOMIALS = dict(cubic=4, tilt=3)

ADMISSIBILITY_SAMPLES = 2000


def _poly(name, x):
    """
    value, gradient and Hessian of the perturbation polynomial at ambient
    points `x` (shape (..., 3))
    """
    if name == "cubic":
        value = np.sum(x**4, axis=-1)
        grad = 4.0 * x**3
        hess = np.zeros(x.shape + (3,))
        for i in range(3):
            hess[..., i, i] = 12.0 * x[..., i] ** 2
    elif name == "tilt":
        value = x[..., 2] ** 3
        grad = np.zeros_like(x)
        grad[..., 2] = 3.0 * x[..., 2] ** 2
        hess = np.zeros(x.shape + (3,))
        hess[..., 2, 2] = 6.0 * x[..., 2]
    else:
        raise NotImplementedError(name)
    return value, grad, hess


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


@dataclass(frozen=True)
class Anisotropy:
    """
    One of three analytic families of surface energy densities:

    isotropic:   F(x) = |x|
    ellipsoidal: F(x) = sqrt(x^T Q x) for symmetric positive definite Q
    perturbed:   F(x) = |x| + eps p(x) |x|^(1-d), i.e. F = 1 + eps p on the
                 sphere, with p one of `PERTURBATION_POLYNOMIALS`
    """

    family: str = "isotropic"
    Q: tuple = None
    eps: float = 0.0
    poly: str = "cubic"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(
                f"unknown anisotropy family `{self.family}`, choose from"
                f" {', '.join(FAMILIES)}"
            )
        if self.family == "ellipsoidal":
            if self.Q is None:
                raise ValidationError("ellipsoidal anisotropy needs a matrix Q")
            Q = np.asarray(self.Q, dtype=float)
            if Q.shape != (3, 3):
                raise ValidationError(f"Q must be 3x3, got shape {Q.shape}")
            if not np.allclose(Q, Q.T, atol=1e-14, rtol=0.0):
                raise AdmissibilityError("Q is not symmetric")
            if np.min(np.linalg.eigvalsh(Q)) <= 0.0:
                raise AdmissibilityError(
                    f"Q is not positive definite, eigenvalues {np.linalg.eigvalsh(Q)}"
                )
            # store as nested tuples so instances stay hashable
            object.__setattr__(self, "Q", tuple(tuple(float(v) for v in row) for row in Q))
        elif self.family == "perturbed":
            if self.poly not in PERTURBATION_POLYNOMIALS:
                raise ValidationError(
                    f"unknown perturbation polynomial `{self.poly}`, choose from"
                    f" {', '.join(PERTURBATION_POLYNOMIALS)}"
                )
            object.__setattr__(self, "eps", float(self.eps))
            self._check_admissible()

    def _check_admissible(self):
        z = fibonacci_sphere(ADMISSIBILITY_SAMPLES)
        F = self.value(z)
        if np.min(F) <= 0.0:
            raise AdmissibilityError(
                f"F is not positive on the sphere (min {np.min(F):.3e}) for eps={self.eps}"
            )
        t1, t2 = tangent_frame(z)
        H = self.hessian(z)
        a11 = np.einsum("...i,...ij,...j", t1, H, t1)
        a12 = np.einsum("...i,...ij,...j", t1, H, t2)
        a22 = np.einsum("...i,...ij,...j", t2, H, t2)
        lam_min = 0.5 * (a11 + a22) - np.sqrt(0.25 * (a11 - a22) ** 2 + a12**2)
        if np.min(lam_min) <= 0.0:
            i = int(np.argmin(lam_min))
            raise AdmissibilityError(
                f"A_F is not positive definite at z={z[i]} (smallest tangent"
                f" eigenvalue {lam_min[i]:.3e}), eps={self.eps} is not admissible"
            )

    @property
    def matrix(self):
        return np.asarray(self.Q, dtype=float)

    @property
    def is_even(self):
        """
        F(-z) = F(z) for every z
        """
        return self.family != "perturbed" or self.poly == "cubic"

    def value(self, x):
        """
        F at ambient points `x` (shape (..., 3)), one-homogeneous
        """
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if self.family == "isotropic":
            return r
        elif self.family == "ellipsoidal":
            Qx = x @ self.matrix
            return np.sqrt(np.sum(x * Qx, axis=-1))
        else:
            p, _, _ = _poly(self.poly, x)
            d = PERTURBATION_POLYNOMIALS[self.poly]
            return r + self.eps * p * r ** (1.0 - d)

    def on_sphere(self, z):
        """
        F restricted to the sphere, without normalising `z`. Used for finite
        difference checks where the restriction must be evaluated exactly
        """
        z = np.asarray(z, dtype=float)
        if self.family == "isotropic":
            return np.ones(z.shape[:-1])
        elif self.family == "ellipsoidal":
            return np.sqrt(np.sum(z * (z @ self.matrix), axis=-1))
        else:
            p, _, _ = _poly(self.poly, z)
            return 1.0 + self.eps * p

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)[..., None]
        if self.family == "isotropic":
            return x / r
        elif self.family == "ellipsoidal":
            Qx = x @ self.matrix
            F = np.sqrt(np.sum(x * Qx, axis=-1))[..., None]
            return Qx / F
        else:
            p, dp, _ = _poly(self.poly, x)
            k = 1.0 - PERTURBATION_POLYNOMIALS[self.poly]
            p = p[..., None]
            grad_g = dp * r**k + k * p * r ** (k - 2.0) * x
            return x / r + self.eps * grad_g

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)[..., None, None]
        eye = np.eye(3)
        xx = _outer(x, x)
        hess_r = (eye - xx / r**2) / r
        if self.family == "isotropic":
            return hess_r
        elif self.family == "ellipsoidal":
            Q = self.matrix
            Qx = x @ Q
            F = np.sqrt(np.sum(x * Qx, axis=-1))[..., None, None]
            return (Q - _outer(Qx, Qx) / F**2) / F
        else:
            p, dp, ddp = _poly(self.poly, x)
            k = 1.0 - PERTURBATION_POLYNOMIALS[self.poly]
            p = p[..., None, None]
            hess_g = (
                ddp * r**k
                + k * r ** (k - 2.0) * (_outer(dp, x) + _outer(x, dp))
                + p * (k * r ** (k - 2.0) * eye + k * (k - 2.0) * r ** (k - 4.0) * xx)
            )
            return hess_r + self.eps * hess_g

    def scaled(self, c):
        """
        The anisotropy c F, expressed as an ellipsoidal family
        """
        if c <= 0.0:
            raise ValidationError(f"scale must be positive, got {c}")
        if self.family == "isotropic":
            return Anisotropy(family="ellipsoidal", Q=c**2 * np.eye(3))
        elif self.family == "ellipsoidal":
            return Anisotropy(family="ellipsoidal", Q=c**2 * self.matrix)
        raise NotImplementedError("scaling of the perturbed family")

    def to_dict(self):
        d = dict(family=self.family)
        if self.family == "ellipsoidal":
            d["Q"] = [list(row) for row in self.Q]
        elif self.family == "perturbed":
            d["eps"] = self.eps
            d["poly"] = self.poly
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        family = d.pop("family", "isotropic")
        unknown = set(d) - {"Q", "eps", "poly"}
        if unknown:
            raise ValidationError(f"unknown anisotropy fields: {', '.join(sorted(unknown))}")
        return cls(family=family, **d)

    @classmethod
    def parse(cls, s):
        """
        Parse the command-line shorthand: `iso`, `ellipsoidal:4,1,1` (diagonal
        Q) or `perturbed:0.05[:tilt]`
        """
        parts = s.split(":")
        kind = parts[0]
        if kind in ("iso", "isotropic"):
            return cls()
        elif kind in ("ell", "ellipsoidal"):
            try:
                diag = [float(v) for v in parts[1].split(",")]
            except (IndexError, ValueError):
                raise ValidationError(f"could not parse ellipsoidal anisotropy `{s}`")
            if len(diag) != 3:
                raise ValidationError(f"ellipsoidal shorthand needs 3 values, got `{s}`")
            return cls(family="ellipsoidal", Q=np.diag(diag))
        elif kind in ("pert", "perturbed"):
            try:
                eps = float(parts[1])
            except (IndexError, ValueError):
                raise ValidationError(f"could not parse perturbed anisotropy `{s}`")
            poly = parts[2] if len(parts) > 2 else "cubic"
            return cls(family="perturbed", eps=eps, poly=poly)
        raise ValidationError(f"unknown anisotropy `{s}`")


def eval_with_derivatives(aniso, z):
    """
    F(z), the sphere gradient DF(z) and the operator A_F(z) for unit `z`
    (shape (3,) or (N, 3))
    """
    z = check_unit(z)
    F = aniso.value(z)
    Phi = aniso.gradient(z)
    DF = Phi - F[..., None] * z
    AF = aniso.hessian(z)
    # symmetrise away roundoff
    AF = 0.5 * (AF + np.swapaxes(AF, -1, -2))
    return F, DF, AF


def wulff_point(aniso, z):
    z = check_unit(z)
    return aniso.gradient(z)


def anisotropic_normal(aniso, nu):
    """
    nu_F = DF(nu) + F(nu) nu, which coincides with the Wulff point Phi(nu)
    """
    return wulff_point(aniso, nu)


def gauss_preimage(aniso, theta, tol=1e-14, max_iter=50):
    """
    Unit normal z with Phi(z) parallel to (and in the direction of) `theta`,
    i.e. the outward normal of the Wulff shape at its point in direction
    theta
    """
    theta = unit(theta)
    if aniso.family == "isotropic":
        return theta
    elif aniso.family == "ellipsoidal":
        return unit(theta @ np.linalg.inv(aniso.matrix))

    t1, t2 = tangent_frame(theta)
    a = np.zeros(theta.shape[:-1])
    b = np.zeros(theta.shape[:-1])
    for _ in range(max_iter):
        w = theta + a[..., None] * t1 + b[..., None] * t2
        wn = np.linalg.norm(w, axis=-1)[..., None]
        z = w / wn
        Phi = aniso.gradient(z)
        r1 = np.sum(Phi * t1, axis=-1)
        r2 = np.sum(Phi * t2, axis=-1)
        if max(np.max(np.abs(r1)), np.max(np.abs(r2))) < tol:
            break
        H = aniso.hessian(z)
        # dz/da = P_z t1 / |w|
        dza = (t1 - np.sum(z * t1, axis=-1)[..., None] * z) / wn
        dzb = (t2 - np.sum(z * t2, axis=-1)[..., None] * z) / wn
        Hda = np.einsum("...ij,...j->...i", H, dza)
        Hdb = np.einsum("...ij,...j->...i", H, dzb)
        j11 = np.sum(t1 * Hda, axis=-1)
        j12 = np.sum(t1 * Hdb, axis=-1)
        j21 = np.sum(t2 * Hda, axis=-1)
        j22 = np.sum(t2 * Hdb, axis=-1)
        det = j11 * j22 - j12 * j21
        a = a - (j22 * r1 - j12 * r2) / det
        b = b - (-j21 * r1 + j11 * r2) / det
    else:
        warnings.warn("gauss_preimage Newton iteration did not reach tolerance")
    w = theta + a[..., None] * t1 + b[..., None] * t2
    return unit(w)


def radial_function(aniso, theta):
    """
    Distance from the origin to the Wulff shape along direction `theta`
    """
    z = gauss_preimage(aniso, theta)
    return np.linalg.norm(aniso.gradient(z), axis=-1)


def wulff_gauge(aniso, x):
    """
    Gauge of the Wulff shape, F°(x) = <x, z> / F(z) with z the Wulff normal
    in direction x. Equals 1 exactly on the Wulff shape
    """
    x = np.asarray(x, dtype=float)
    z = gauss_preimage(aniso, x)
    return np.sum(x * z, axis=-1) / aniso.value(z)


@dataclass(frozen=True, eq=False)
class HalfSpaceConfig:
    """
    Contact parameter omega0 together with the constant vector EF = E^F_{n+1}
    and the sampled bounds C1 <= F(z) + omega0 <EF, z> <= C2 and Lambda = max
    eigenvalue of A_F
    """

    aniso: Anisotropy
    omega0: float
    EF: np.ndarray
    C1: float
    C2: float
    Lambda: float
    sphere_samples: int

    def psi(self, nu):
        """
        F(nu) + omega0 <EF, nu>
        """
        return self.aniso.value(nu) + self.omega0 * (np.asarray(nu) @ self.EF)

    def to_dict(self):
        return dict(
            aniso=self.aniso.to_dict(),
            omega0=float(self.omega0),
            EF=[float(v) for v in self.EF],
            C1=float(self.C1),
            C2=float(self.C2),
            Lambda=float(self.Lambda),
            sphere_samples=int(self.sphere_samples),
        )

    @classmethod
    def from_dict(cls, d):
        # derived constants are recomputed rather than trusted
        return make_config(
            Anisotropy.from_dict(d["aniso"]),
            omega0=d["omega0"],
            sphere_samples=d.get("sphere_samples", 4000),
        )


def admissible_interval(aniso):
    return -float(aniso.value(E3)), float(aniso.value(-E3))


def make_config(aniso, omega0, sphere_samples=4000):
    if sphere_samples < 1000:
        raise ValidationError(f"need at least 1000 sphere samples, got {sphere_samples}")
    omega0 = float(omega0)
    lo, hi = admissible_interval(aniso)
    if not lo < omega0 < hi:
        raise AdmissibilityError(
            f"omega0={omega0} is outside the admissible interval ({lo}, {hi})"
        )

    # tie at omega0 = 0 goes to the first branch
    if omega0 >= 0.0:
        EF = -aniso.gradient(-E3) / aniso.value(-E3)
    else:
        EF = aniso.gradient(E3) / aniso.value(E3)
    assert abs(EF @ E3 - 1.0) < 1e-12

    z = fibonacci_sphere(sphere_samples)
    psi = aniso.value(z) + omega0 * (z @ EF)
    C1, C2 = float(np.min(psi)), float(np.max(psi))
    if C1 <= 0.0:
        raise AdmissibilityError(f"F + omega0 <EF, z> is not positive (min {C1})")
    Lambda = float(np.max(np.linalg.eigvalsh(aniso.hessian(z))))
    logger.debug(f"config omega0={omega0}: C1={C1:.6f} C2={C2:.6f} Lambda={Lambda:.6f}")

    return HalfSpaceConfig(
        aniso=aniso,
        omega0=omega0,
        EF=EF,
        C1=C1,
        C2=C2,
        Lambda=Lambda,
        sphere_samples=sphere_samples,
    )


@dataclass
class DerivativeReport:
    passed: bool
    tol: float
    n_points: int
    max_err_DF: float
    max_err_AF: float
    worst_point: np.ndarray

    def to_dict(self):
        return dict(
            passed=self.passed,
            tol=self.tol,
            n_points=self.n_points,
            max_err_DF=self.max_err_DF,
            max_err_AF=self.max_err_AF,
            worst_point=[float(v) for v in self.worst_point],
        )


def _geodesic(z, t, s):
    return np.cos(s) * z + np.sin(s) * t


def validate_derivatives(aniso, tol=1e-6, n_points=1000, step=1e-4, raise_on_failure=True):
    """
    Compare the analytic DF and A_F against central differences of F along
    great circles through `n_points` sphere samples
    """
    z = fibonacci_sphere(n_points)
    F, DF, AF = eval_with_derivatives(aniso, z)
    t1, t2 = tangent_frame(z)
    td = (t1 + t2) / np.sqrt(2.0)

    def _second(t):
        fp = aniso.on_sphere(_geodesic(z, t, step))
        fm = aniso.on_sphere(_geodesic(z, t, -step))
        first = (fp - fm) / (2.0 * step)
        second = (fp - 2.0 * aniso.on_sphere(z) + fm) / step**2
        return first, second

    d1, s1 = _second(t1)
    d2, s2 = _second(t2)
    _, sd = _second(td)

    # <A_F t, t> = (d^2/ds^2) F(geodesic) + F
    a11 = s1 + F
    a22 = s2 + F
    a12 = sd + F - 0.5 * (a11 + a22)

    err_DF = np.maximum(
        np.abs(np.sum(DF * t1, axis=-1) - d1), np.abs(np.sum(DF * t2, axis=-1) - d2)
    )
    q = lambda u, v: np.einsum("...i,...ij,...j", u, AF, v)  # noqa
    err_AF = np.max(
        np.abs(
            np.stack(
                [q(t1, t1) - a11, q(t2, t2) - a22, q(t1, t2) - a12, q(t2, t1) - a12,
                 np.linalg.norm(np.einsum("...ij,...j->...i", AF, z), axis=-1)]
            )
        ),
        axis=0,
    )
    err = np.maximum(err_DF, err_AF)
    i = int(np.argmax(err))
    report = DerivativeReport(
        passed=bool(err[i] <= tol),
        tol=tol,
        n_points=len(z),
        max_err_DF=float(np.max(err_DF)),
        max_err_AF=float(np.max(err_AF)),
        worst_point=z[i],
    )
    if not report.passed and raise_on_failure:
        exc = DerivativeCheckError(
            f"analytic derivatives disagree with finite differences by {err[i]:.3e}"
            f" > {tol:.1e}, worst at z={z[i]}"
        )
        exc.report = report
        raise exc
    return report
