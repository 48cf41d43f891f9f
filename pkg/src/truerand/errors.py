"""Exception types shared across the toolkit."""

from __future__ import annotations


class DomainError(ValueError):
    """Input violates a documented precondition."""


class NumericError(ArithmeticError):
    """A numerical procedure failed to produce a valid result."""


class InsufficientEntropyError(ValueError):
    """Planning produced a non-positive output length.

    ``deficit`` is the number of additional min-entropy bits per block
    needed before at least one output bit can be extracted.
    """

    def __init__(self, message: str, deficit: float, raw_length: float):
        super().__init__(message)
        self.deficit = deficit
        self.raw_length = raw_length


class SeedFormatError(ValueError):
    """A seed file is malformed (bad magic, sizes or payload length)."""


class SourceExhaustedError(ValueError):
    """An entropy source delivered fewer bits than requested."""


class StreamReadError(OSError):
    """Reading an input stream failed; ``block_index`` marks where."""

    def __init__(self, message: str, block_index: int):
        super().__init__(message)
        self.block_index = block_index
