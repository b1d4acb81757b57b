"""Exception types shared across the package."""


class DlrError(Exception):
    """Base class; ``code`` is the short machine-readable tag used by the CLI."""

    code = "error"


class ShapeError(DlrError, ValueError):
    code = "shape_mismatch"


class InvalidParameters(DlrError, ValueError):
    code = "invalid_parameters"


class UnstableSpectrum(DlrError, ValueError):
    code = "unstable_spectrum"


class NotDiagonalizable(DlrError, ValueError):
    code = "not_diagonalizable"


class SingularSystem(DlrError, ValueError):
    code = "singular_system"

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class DegenerateBaseline(DlrError, ValueError):
    code = "degenerate_baseline"


class Diverged(DlrError, RuntimeError):
    code = "diverged"


class LayoutInfeasible(DlrError, RuntimeError):
    code = "layout_infeasible"


class ParseError(DlrError, ValueError):
    code = "parse_error"

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at token {position}")
        self.position = position
