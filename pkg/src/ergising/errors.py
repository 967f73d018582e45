"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid parameters or inputs (bad parity, mismatched sizes, ...)."""


class CeilingExceeded(RuntimeError):
    """A computation was refused because it exceeds a configured resource ceiling."""

    def __init__(self, what: str, requested: int, ceiling: int):
        self.what = what
        self.requested = requested
        self.ceiling = ceiling
        super().__init__(
            f"{what}: N={requested} exceeds the ceiling N<={ceiling} "
            f"(raise it explicitly to proceed)"
        )
