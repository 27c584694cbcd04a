"""Exception hierarchy shared by all modules."""


class BanditError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(BanditError):
    """Bad user input: malformed instance/experiment files or parameters."""


class InstanceError(ConfigError):
    pass


class NumericalError(BanditError):
    """A numerical routine could not produce a trustworthy answer."""


class Singular(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class NonUniqueOptimum(NumericalError):
    pass


class InfeasibleNumerics(NumericalError):
    pass


class HorizonExceeded(BanditError):
    pass


class BadArmIndex(BanditError, IndexError):
    pass
