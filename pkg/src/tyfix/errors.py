"""Exception taxonomy for the fix-template engine.

Every domain failure raises a subclass of :class:`TyfixError` so callers can
catch engine errors without masking programming mistakes.  Plain
``SyntaxError`` from the stdlib parser is deliberately reused for unparseable
source text.
"""

from __future__ import annotations


class TyfixError(Exception):
    """Base class for all engine errors."""


class UnparseError(TyfixError):
    """A tree node has no rendering rule or is too damaged to render."""


class EmptyResult(TyfixError):
    """A line query touched no statement (blank lines, comments only)."""


class SchemaError(TyfixError):
    """A serialized document does not conform to the template schema."""


class InvalidPattern(TyfixError):
    """A fix pattern violates its own well-formedness rules."""


class OversizeCommit(TyfixError):
    """A commit modifies more lines than the configured limit."""


class UnparseableDiff(TyfixError):
    """A unified diff could not be parsed or applied."""


class EmptyChange(TyfixError):
    """Before and after versions are identical once normalized."""


class ResultEmptyPattern(TyfixError):
    """Abstraction erased both pattern trees (or a required attachment)."""


class NoMatchSite(TyfixError):
    """A template reported as matching yielded no concrete edit site."""


class GrammarViolation(TyfixError):
    """A tree cannot be completed into grammatically valid code."""


class TooManyMasks(TyfixError):
    """A prompt would need more mask tokens than the configured cap."""


class NoTemplateMatched(TyfixError):
    """No template in the forest matched the buggy program view."""


class EmptyMatch(TyfixError):
    """Ranking was asked to order an empty match set."""


class FillerError(TyfixError):
    """A mask filler failed at the transport or protocol level."""


class ValidationTimeout(TyfixError):
    """A candidate's test run exceeded the configured timeout."""


class SandboxError(TyfixError):
    """The validation sandbox could not be prepared or used."""
