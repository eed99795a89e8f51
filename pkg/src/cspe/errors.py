class CspeError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(CspeError, ValueError):
    pass


class DataError(CspeError, ValueError):
    pass


class SamplerError(CspeError, RuntimeError):
    pass
