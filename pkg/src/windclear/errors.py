"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: domain and validation
problems exit 1, file and format problems exit 2, solver failures
exit 3.  Library callers can catch them individually.
"""


class WindclearError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(WindclearError):
    """A domain object violates its invariants.

    Carries the list of violations so callers can report all of them
    at once instead of fixing one field at a time.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConvexityError(WindclearError):
    """Price schedule breaks the sell <= purchase condition.

    The transaction cost is concave in the committed quantity wherever
    the sell price exceeds the purchase price, so the clearing problem
    would not be a convex program.  Refusing to solve is the only safe
    response.
    """


class SchemaError(WindclearError):
    """An input file parsed but does not match the documented schema."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class DigestMismatchError(WindclearError):
    """A referenced input file changed since the manifest recorded it."""


class SolverError(WindclearError):
    """The QP engine failed in a way that does not map to a clean status."""
