class OvmmError(Exception):
    pass


class ConfigError(OvmmError):
    pass


class GenerationFailed(OvmmError):
    pass


class InvalidAction(OvmmError):
    pass


class UnknownClass(ConfigError):
    pass


class UnknownCluster(OvmmError):
    pass


class NoGoals(OvmmError):
    pass


class Unreachable(OvmmError):
    pass


class UnsupportedFormat(OvmmError):
    pass
