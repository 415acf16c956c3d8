from . import bernstein, flow, stability, variational  # noqa
from .anisotropy import Anisotropy, HalfSpaceConfig, make_config  # noqa
from .geometry import CapillaryMesh, compute_state, load_mesh, save_mesh  # noqa
