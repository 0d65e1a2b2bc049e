"""Exception hierarchy shared by all modules."""


class CircleLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(CircleLabError, ValueError):
    """An argument lies outside the domain of an operation."""


class DegenerateFitError(DomainError):
    """Too few points, or no spread in the abscissae, for a least-squares line."""


class DegenerateSampleError(DomainError):
    """Repeated sample points where distinct points are required."""


class ConstructionError(DomainError):
    """Map parameters violate the family's invariants."""


class ResourceError(CircleLabError, MemoryError):
    """A requested orbit or search exceeds the configured budget."""


class PeriodicOrbitError(CircleLabError):
    """The marked point returned exactly onto itself: rational rotation number."""

    def __init__(self, q, p, message=None):
        self.q = q
        self.p = p
        super().__init__(message or f"periodic orbit detected: rotation number {p}/{q}")


class ModeLockingError(CircleLabError):
    """The target rotation number is rational and realized on a whole parameter interval."""

    def __init__(self, p, q, interval):
        self.p = p
        self.q = q
        self.interval = interval
        lo, hi = interval
        super().__init__(
            f"rotation number {p}/{q} is locked on the parameter interval "
            f"[{float(lo):.12g}, {float(hi):.12g}]"
        )


class CombinatoricsError(CircleLabError):
    """Orbit order disagrees with the rigid rotation (wrong rho or precision too low)."""


class InconsistentRotationError(CombinatoricsError):
    """Conjugacy samples do not induce the same circular order as the rotation."""


class VerificationError(CircleLabError):
    """An exact identity failed beyond its rounding tolerance."""
