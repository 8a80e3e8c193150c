"""Exception types raised across the package."""


class L2SError(Exception):
    """Base class; ``kind`` is the machine-readable tag used by the CLI."""

    kind = "error"


class InvalidArgumentError(L2SError, ValueError):
    kind = "invalid-argument"


class NumericOverflowError(L2SError, ArithmeticError):
    kind = "numeric-overflow"


class DegenerateReferencesError(L2SError, ValueError):
    kind = "degenerate-references"


class ParseError(L2SError, ValueError):
    kind = "parse-error"

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class DuplicateIdError(L2SError, ValueError):
    kind = "duplicate-id"

    def __init__(self, record_id, path=None):
        super().__init__(f"duplicate id {record_id!r}" + (f" in {path}" if path else ""))
        self.record_id = record_id


class TokenCountMismatchError(L2SError, ValueError):
    kind = "token-count-mismatch"


class MissingTokenCountError(L2SError, KeyError):
    kind = "missing-token-count"

    def __str__(self):
        return self.args[0] if self.args else "missing token_count"


class UnmappedSourceError(L2SError, KeyError):
    kind = "unmapped-source"

    def __init__(self, sources):
        self.sources = sorted(sources)
        super().__init__(f"no difficulty rule for source(s): {', '.join(self.sources)}")

    def __str__(self):
        return self.args[0]


class EmptyPoolError(L2SError, ValueError):
    kind = "empty-pool"


class NoQualifyingCheckpointError(L2SError, LookupError):
    kind = "no-qualifying-checkpoint"


class ConfigError(L2SError, ValueError):
    kind = "config-error"


class ProtocolError(L2SError, RuntimeError):
    """External trainer misbehaved; ``transcript`` holds the recent exchange."""

    kind = "protocol-error"

    def __init__(self, message, transcript=()):
        self.transcript = list(transcript)
        excerpt = " | ".join(self.transcript[-6:])
        super().__init__(f"{message} [transcript: {excerpt}]" if excerpt else message)
