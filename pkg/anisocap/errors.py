class AnisocapError(Exception):
    pass


class ValidationError(AnisocapError):
    """
    Raised for bad input: inadmissible parameters, malformed meshes, bad
    configuration. The command line maps these to exit code 2
    """

    pass


class AcceptanceError(AnisocapError):
    """
    A computation finished but its result failed a requested acceptance test
    (exit code 3 on the command line)
    """

    pass


class NonUnitVectorError(ValidationError):
    pass


class AdmissibilityError(ValidationError):
    pass


class DerivativeCheckError(AnisocapError):
    pass


class MeshError(ValidationError):
    pass


class TransversalityError(ValidationError):
    pass


class StencilError(AnisocapError):
    pass


class ImmersionError(ValidationError):
    pass


class EigenSolveError(AnisocapError):
    pass


class NotMinimalError(ValidationError):
    pass


class StepUnderflowError(AnisocapError):
    pass


class MeshDegenerationError(AnisocapError):
    pass


class SampleExtentError(ValidationError):
    pass


class BoundViolationError(AnisocapError):
    pass


class ConfigError(ValidationError):
    pass


class PipelineError(AnisocapError):
    """
    A task of the luigi resolution ladder failed
    """

    pass
