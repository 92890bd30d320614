"""Exception taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so engines should raise the
most specific class that applies.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent problem/run configuration."""


class NumericalError(RuntimeError):
    """A numerical procedure could not produce a trustworthy result."""


class ResourceError(RuntimeError):
    """A dimension/memory/time guard was exceeded."""
