class NematicError(ValueError):
    """Base class for solver input and state errors."""


class ParameterError(NematicError):
    pass


class ProfileError(NematicError):
    pass


class MeshError(NematicError):
    pass


class StabilityError(NematicError):
    """Raised when a second variation that must be positive definite is not."""


class CheckpointError(NematicError):
    pass


class TensorError(NematicError):
    pass
