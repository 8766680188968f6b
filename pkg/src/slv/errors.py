"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument broke a documented precondition or invariant."""


class RecordError(ValueError):
    """A serialized record (JSONL line, PGM file, sidecar) is malformed."""
