"""Exception types raised by gradsim."""


class GradsimError(Exception):
    """Base class for all gradsim errors."""


class ValidationError(GradsimError, ValueError):
    """An input value violates a profile invariant.

    ``field`` holds the offending field name, or a dotted path such as
    ``network.bandwidth_gbps`` when raised while loading a document.
    """

    def __init__(self, field, message):
        self.field = field
        self.detail = message
        super().__init__(f"{field}: {message}")


class ConfigurationError(GradsimError, ValueError):
    """A scheme or analysis is missing the inputs it needs."""


class UndefinedRatioError(ConfigurationError):
    """A compression ratio was requested for a scheme that sends nothing."""


class ProfileParseError(GradsimError, ValueError):
    """A profile document could not be parsed."""
