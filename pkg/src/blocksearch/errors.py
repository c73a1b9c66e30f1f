"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class ContractError(ValueError):
    """A documented precondition was violated."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration, detected before compute."""


class ParseError(ValueError):
    """Architecture string rejected by the grammar.

    Carries the byte offset of the offending character.
    """

    def __init__(self, offset: int, message: str):
        super().__init__(f"parse error at offset {offset}: {message}")
        self.offset = offset
        self.reason = message


class TrainingAbort(RuntimeError):
    """Raised when a training loop hits a non-finite loss."""

    def __init__(self, step: int, lr: float, grad_norm: float):
        super().__init__(
            f"non-finite loss at step {step} (lr={lr:g}, grad_norm={grad_norm:g})"
        )
        self.step = step
        self.lr = lr
        self.grad_norm = grad_norm
