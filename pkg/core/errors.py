# ************************************************************
#  core/errors.py
# ************************************************************

"""
Errors module.

Exception hierarchy shared by the core package and the command-line front end.
"""


class BmoSplinesError(Exception):
    """Base class for every error raised by the toolkit."""


class PartitionError(BmoSplinesError, ValueError):
    """A multilevel partition violates one of its defining conditions."""


class DomainError(BmoSplinesError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class FunctionError(BmoSplinesError, ValueError):
    """A function could not be resolved or ingested."""


class DecompositionError(BmoSplinesError, ValueError):
    """A decomposition is inconsistent with its partition."""


class StructureError(BmoSplinesError, ValueError):
    """A nested structure is unsuitable for the requested operation."""


class ConfigError(BmoSplinesError, ValueError):
    """The run configuration is invalid."""
