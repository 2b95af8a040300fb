"""Exception hierarchy shared across the package."""


class FedFuseError(Exception):
    """Base class for every error raised by fedfuse."""


class ShapeMismatch(FedFuseError, ValueError):
    pass


class IncompatibleParameterSets(FedFuseError, ValueError):
    pass


class EmptyFusionInput(FedFuseError, ValueError):
    pass


class CheckpointFormatError(FedFuseError, ValueError):
    pass


class EmptyDataset(FedFuseError, ValueError):
    pass


class EmptyInput(FedFuseError, ValueError):
    pass


class LengthMismatch(FedFuseError, ValueError):
    pass


class UnknownLabel(FedFuseError, ValueError):
    def __init__(self, label, adapter=None):
        self.label = label
        self.adapter = adapter
        where = f" for adapter {adapter!r}" if adapter else ""
        super().__init__(f"unknown source label {label!r}{where}")


class MalformedRow(FedFuseError, ValueError):
    def __init__(self, line, reason=""):
        self.line = line
        super().__init__(f"malformed row at line {line}" + (f": {reason}" if reason else ""))


class MissingColumn(FedFuseError, ValueError):
    pass


class TooFewClients(FedFuseError, ValueError):
    pass


class UnknownClient(FedFuseError, KeyError):
    pass


class PrivacyViolation(FedFuseError, RuntimeError):
    """Raised when anything other than parameters is about to cross a client boundary."""


class ConfigError(FedFuseError, ValueError):
    pass


class DatasetError(FedFuseError, ValueError):
    pass
