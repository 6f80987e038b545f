"""Exception taxonomy shared across the package."""


class SemnavError(Exception):
    """Base class for all package-specific errors."""


class DegenerateInput(SemnavError):
    """Input too degenerate to process (e.g. all points collinear)."""


class DegeneratePolygon(SemnavError):
    """Polygon fails validity requirements (too few vertices, zero area, ...)."""


class DegenerateVertex(SemnavError):
    """Triangulation cannot proceed because of a degenerate vertex."""


class TopologyError(SemnavError):
    """Boolean operation produced (or received) unsupported topology, e.g. holes."""


class NegativeRadius(SemnavError):
    """Dilation radius must be non-negative."""


class NoBoundaryAdjacentTriangle(SemnavError):
    """Boundary-touching tree requested but no triangle edge lies on the boundary."""


class SingularPoint(SemnavError):
    """Query point coincides with a non-smooth point (polygon vertex)."""


class SingularDenominator(SemnavError):
    """Deforming factor denominator vanished; indicates an invalid collar."""


class InadmissibleCollar(SemnavError):
    """No admissible convex collar could be constructed for a purge step."""


class OutOfDomain(SemnavError):
    """Point lies inside a mapped obstacle, outside the map's domain."""


class SingularJacobian(SemnavError):
    """Map Jacobian not invertible at the query point."""


class EmptyCell(SemnavError):
    """Local freespace cell collapsed to the empty set."""


class GoalAtCenter(SemnavError):
    """Saddle formula degenerate: transformed goal coincides with a disk center."""


class LeftFreespace(SemnavError):
    """Robot state left the freespace: safety violation."""


class ParseError(SemnavError):
    """Scenario file could not be parsed or failed schema validation."""
