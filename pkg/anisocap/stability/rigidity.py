"""
Minkowski-type test function and the anisotropic umbilicity gap used to show
that weakly stable capillary surfaces are truncated Wulff shapes
"""
import logging
from dataclasses import dataclass

import numpy as np

from ..variational import DIMENSION

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TestFunction:
    values: np.ndarray
    integral: float
    area: float

    # keep pytest from collecting this class
    __test__ = False

    @property
    def normalized(self):
        return self.integral / self.area


def minkowski_test_function(state, config):
    """
    phi = n (F(nu) + omega0 <EF, nu>) - H_F <x, nu>, whose integral vanishes
    on capillary surfaces
    """
    phi = DIMENSION * state.psi - state.H_F * state.support
    return TestFunction(
        values=phi,
        integral=float(np.sum(phi * state.areas)),
        area=float(np.sum(state.areas)),
    )


def q_phi(form, phi):
    """
    Q(phi, phi) with phi restricted to the free vertices
    """
    values = getattr(phi, "values", phi)
    f = np.where(form.free, values, 0.0)
    return form.quadratic(f)


def umbilicity_density(state):
    """
    n tr(h_F^2) - H_F^2, nonnegative with equality exactly where h_F is a
    multiple of the identity
    """
    return DIMENSION * state.trace_hF2 - state.H_F**2


def rigidity_gap(state, config):
    gap = float(np.sum(state.psi * umbilicity_density(state) * state.areas))
    logger.debug(f"rigidity gap {gap:.6e}")
    return gap
