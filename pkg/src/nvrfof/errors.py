"""Exception types shared across the toolkit."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class DegenerateFitError(RuntimeError):
    """Raised when the least-squares normal matrix is singular.

    ``parameters`` lists the names of the collinear parameters.
    """

    def __init__(self, parameters):
        self.parameters = list(parameters)
        super().__init__(
            "singular normal matrix; collinear parameters: " + ", ".join(self.parameters)
        )
