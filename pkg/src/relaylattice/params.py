"""Problem data shared by every module."""

from __future__ import annotations

from dataclasses import asdict, dataclass


class PreconditionError(ValueError):
    """Input violates a standing assumption of the model."""


@dataclass(frozen=True)
class Params:
    """Problem data.

    Attributes
    ----------
    c : float
        Curvature of the initial profile ``u_n(0) = -c n^2``.
    h1 : float
        Relay output before switching; must satisfy ``h1 > 2c``.
    h2 : float
        Magnitude of the output after switching (``0`` in the standard regime).
    tau0 : float
        Reference time for the large-time Green function estimates.
    """

    c: float
    h1: float
    h2: float = 0.0
    tau0: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise PreconditionError(f"c must be positive, got {self.c}")
        if not self.h1 > 2.0 * self.c:
            raise PreconditionError(f"need h1 > 2c, got h1={self.h1}, c={self.c}")
        if not self.h2 >= 0:
            raise PreconditionError(f"h2 must be nonnegative, got {self.h2}")
        if not self.tau0 > 0:
            raise PreconditionError(f"tau0 must be positive, got {self.tau0}")

    @property
    def drop(self) -> float:
        """Decrease of the drive when a node switches."""
        return self.h1 + self.h2

    def as_dict(self) -> dict:
        return asdict(self)
