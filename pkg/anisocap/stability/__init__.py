from .form import StabilityForm, StabilityReport, assemble, spectrum  # noqa
from .identities import (  # noqa
    boundary_identity_residuals,
    jacobi_identity_residuals,
    second_variation_fd_check,
)
from .rigidity import minkowski_test_function, q_phi, rigidity_gap  # noqa
