"""Error types raised by the lanczos-kn library."""

from typing import Optional, Sequence


class KnError(Exception):
    """Base class for every library error."""


class RankDeficient(KnError, ArithmeticError):
    def __init__(self, smallest_sv: float, largest_sv: float = 0.0):
        self.smallest_sv = smallest_sv
        self.largest_sv = largest_sv
        super().__init__(
            f"block is rank deficient: smallest singular value {smallest_sv:.3e} "
            f"(largest {largest_sv:.3e})"
        )


class NonHermitian(KnError, ValueError):
    def __init__(self, asymmetry: float):
        self.asymmetry = asymmetry
        super().__init__(f"matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")


class NotSpd(KnError, ValueError):
    def __init__(self, name: str, min_eig: float):
        self.name = name
        self.min_eig = min_eig
        super().__init__(f"{name} is not SPD (smallest eigenvalue {min_eig:.3e})")


class Breakdown(KnError, ArithmeticError):
    def __init__(self, step: int, smallest_sv: float):
        self.step = step
        self.smallest_sv = smallest_sv
        super().__init__(f"Lanczos breakdown at step {step} (smallest singular value {smallest_sv:.3e})")


class DimensionMismatch(KnError, ValueError):
    pass


class SingularGamma(KnError, ArithmeticError):
    def __init__(self, index: int, min_eig: float, max_eig: float):
        self.index = index
        super().__init__(
            f"gamma_{index}^-1 is numerically singular or indefinite "
            f"(eigenvalues in [{min_eig:.3e}, {max_eig:.3e}])"
        )


class MissingTail(KnError, ValueError):
    def __init__(self):
        super().__init__("decomposition carries no residual block beta_{m+1}")


class ShiftOnSpectrum(KnError, ArithmeticError):
    def __init__(self, shift: complex):
        self.shift = shift
        super().__init__(f"shift {shift} hits the spectrum of the shifted matrix")


class SingularStep(KnError, ArithmeticError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"inner inverse at step {index} is numerically singular")


class SingularUpdate(KnError, ArithmeticError):
    def __init__(self, shift: complex):
        self.shift = shift
        super().__init__(f"low-rank update is singular at shift {shift}")


class TooFewRitzValues(KnError, ValueError):
    def __init__(self, available: int, required: int):
        self.available = available
        self.required = required
        super().__init__(f"contour window needs {required} Ritz values, only {available} available")


class DegenerateWindow(KnError, ValueError):
    def __init__(self, count: int):
        self.count = count
        super().__init__(f"all {count} Ritz values in the contour window coincide; no gap to size the contour")


class AllNodesSkipped(KnError, ArithmeticError):
    def __init__(self, n_nodes: int):
        self.n_nodes = n_nodes
        super().__init__(f"Re F is indefinite at all {n_nodes} contour nodes")


class EmptyHistory(KnError, ValueError):
    def __init__(self):
        super().__init__("phi history is empty")


class SingularPencil(KnError, ArithmeticError):
    def __init__(self, shift: complex):
        self.shift = shift
        super().__init__(f"first-order pencil is singular at shift {shift}")


class MissingBasis(KnError, ValueError):
    def __init__(self):
        super().__init__("decomposition was computed without keep_basis; the Lanczos basis is unavailable")


class NonPositiveSigma(KnError, ValueError):
    def __init__(self, min_value: float):
        self.min_value = min_value
        super().__init__(f"sigma must be positive everywhere (minimum {min_value})")


class DuplicateNode(KnError, ValueError):
    def __init__(self, node: Sequence[int]):
        self.node = tuple(node)
        super().__init__(f"two source locations snap to the same grid node {self.node}")


class OutsideInterior(KnError, ValueError):
    def __init__(self, location: Sequence[float]):
        self.location = tuple(location)
        super().__init__(f"source location {self.location} lies outside the interior region")


class ParseError(KnError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class NotSymmetricHeader(KnError, ValueError):
    def __init__(self, header: str):
        self.header = header
        super().__init__(f"expected a 'coordinate real symmetric' Matrix Market header, got: {header.strip()}")


class SingularShift(KnError, ArithmeticError):
    def __init__(self, shift: complex):
        self.shift = shift
        super().__init__(f"A + sI is singular at s = {shift}")


class ConfigError(KnError, ValueError):
    pass
