"""Exception hierarchy shared by all toolkit modules."""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class InputError(ToolkitError):
    """Malformed or out-of-contract input (non-square matrix, empty subset, ...)."""


class NonintegrableError(ToolkitError):
    """Radial profile whose tail decays too slowly for a finite-mass solution."""


class StiffnessError(ToolkitError):
    """ODE integrator step underflow / failure."""


class InconsistentTailError(ToolkitError):
    """Tail of a radial profile disagrees with its fitted far-field form."""


class PohozaevSurfaceError(InputError):
    """Mass target does not satisfy the Pohozaev constraint."""

    def __init__(self, message, defect):
        super().__init__(message)
        self.defect = defect


class NonconvergenceError(ToolkitError):
    """Iterative solver stalled; carries the residual trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class SingularityError(ToolkitError):
    """Green's function requested at coincident points."""


class ConfigurationError(InputError):
    """Invalid blowup configuration (coincident points, bad masses, ...)."""


class MergeError(ToolkitError):
    """Location iteration drove two points closer than the separation floor."""


class DegenerateConfigurationError(ToolkitError):
    """Location Jacobian singular beyond the expected gauge directions."""


class WrongRegimeError(ToolkitError):
    """Operation called outside its mass regime (m < 4 vs all m_i = 4)."""


class ResolutionError(ToolkitError):
    """Quadrature or grid refinement failed to converge."""


class AmplitudeError(ToolkitError):
    """Field amplitude overflowed the exponential nonlinearity."""


class SeparationError(ToolkitError):
    """Detected bubble disks overlap for the requested radius."""


class FoldSignal(ToolkitError):
    """Near-singular Jacobian at a continuation step: likely fold point."""
