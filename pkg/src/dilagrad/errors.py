"""Exception types raised by dilagrad."""


class DilagradError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(DilagradError, ValueError):
    pass


class TopologyError(DilagradError):
    """Mesh is non-conforming or otherwise topologically invalid."""

    def __init__(self, message, face=None):
        super().__init__(message)
        self.face = face


class DegenerateCellError(DilagradError):
    """The level set vanishes identically on a cell."""

    def __init__(self, cell_id):
        super().__init__(f"level set vanishes identically on cell {cell_id}")
        self.cell_id = cell_id


class AlignmentError(DilagradError):
    """A mesh face is aligned with the zero level set."""

    def __init__(self, face_id):
        super().__init__(
            f"face {face_id} lies in the zero level set; use the one-sided limit path"
        )
        self.face_id = face_id


class SingularLevelSetError(DilagradError):
    pass


class AccuracyError(DilagradError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, estimate, error_estimate):
        super().__init__(message)
        self.estimate = estimate
        self.error_estimate = error_estimate


class TangledMeshError(DilagradError):
    def __init__(self, cell_id, volume):
        super().__init__(f"cell {cell_id} has non-positive volume {volume:.3e}")
        self.cell_id = cell_id
        self.volume = volume


class ConstraintError(DilagradError):
    pass


class SolverError(DilagradError):
    def __init__(self, message, min_cut_fraction=None):
        super().__init__(message)
        self.min_cut_fraction = min_cut_fraction


class AmbiguousLimitError(DilagradError):
    pass


class UnsupportedRenderError(DilagradError):
    pass
