"""Exception types raised across partsim."""


class PartsimError(Exception):
    pass


class DomainError(PartsimError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(PartsimError, ValueError):
    pass


class ConstructionError(PartsimError, ValueError):
    pass


class NumericalError(PartsimError, ArithmeticError):
    pass


class CapacityError(PartsimError, MemoryError):
    pass


class ModelError(PartsimError, RuntimeError):
    pass


class IntegrityError(PartsimError, ValueError):
    pass


class SchemaError(PartsimError, KeyError):
    pass
