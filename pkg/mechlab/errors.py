class InfeasiblePolytopeError(ValueError):
    """A predicted polytope (or partition cell) contains no type."""


class MechanismDomainError(ValueError):
    """Parameters or types for which a mechanism is undefined."""


class ConfigError(ValueError):
    """An experiment config that cannot be read or is inconsistent."""


class UnboundedProgramError(ValueError):
    pass
