"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller violated an operation's precondition (shapes, ranges, sizes)."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared where every value must stay finite.

    ``where`` names the offending location (layer index, training step or
    ODE node) so the failure can be reported without a traceback dive.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class TrainingDivergedError(NonFiniteError):
    pass


class IntegrationError(NonFiniteError):
    pass
