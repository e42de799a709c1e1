"""Exception hierarchy shared by every module of the simulator."""


class QkdSimError(Exception):
    """Base class of all simulator errors."""


class InvalidArgument(QkdSimError, ValueError):
    """An input violates a documented precondition."""


class ConfigError(InvalidArgument):
    """A configuration document is malformed or out of range."""


class ModelError(QkdSimError, ArithmeticError):
    """The physical model cannot be evaluated for the given inputs."""


class TransmittanceViolation(ModelError):
    """An eigenmode transmittance exceeds one (unphysical channel gain)."""


class UnphysicalEigenvalue(ModelError):
    """A symplectic eigenvalue fell below the vacuum bound of one."""


class NumericalDegeneracy(ModelError):
    """A discriminant is negative beyond round-off tolerance."""


class NumericalRankError(ModelError):
    """A Gram matrix that must be inverted is numerically singular."""
