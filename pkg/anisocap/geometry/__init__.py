from .mesh import CapillaryMesh, load_mesh, save_mesh  # noqa
from .state import GeometricState, compute_state  # noqa
from .parametric import ParametricPatch, parametric_state  # noqa
