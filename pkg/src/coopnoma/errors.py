"""Exception types shared across the package."""


class InputDomainError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed or physically invalid."""


class ContractViolation(RuntimeError):
    """An allocation or intermediate result breaks a documented invariant."""
