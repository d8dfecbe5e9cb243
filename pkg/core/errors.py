"""Exception types raised across the pipeline.

The CLI maps InputValidationError (and its subclasses) to exit code 2 and
everything else to exit code 1.
"""


class RnaDesignError(Exception):
    """Base class for all pipeline errors."""


class InputValidationError(RnaDesignError, ValueError):
    """Bad user input: malformed files, inconsistent lengths, invalid options."""


class DimensionError(InputValidationError):
    """Tensor or array extents do not match what an operation requires."""


class PdbParseError(InputValidationError):
    """A PDB file could not be turned into an RNA structure."""


class TrainingDivergedError(RnaDesignError, RuntimeError):
    """Loss or gradients became non-finite during optimization."""
