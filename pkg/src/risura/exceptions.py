"""Error types shared across the package."""


class ContractViolation(ValueError):
    """An input failed a structural precondition (shape, symmetry, ...)."""


class DomainError(ValueError):
    """A numeric argument is outside the domain of the requested operation."""


class SingularSystemError(ValueError):
    """A linear system is rank deficient beyond the configured tolerance."""


class SdpInfeasibleError(RuntimeError):
    """The semidefinite program has an empty feasible set."""


class ConfigError(ValueError):
    """A configuration file or override could not be parsed/validated."""
