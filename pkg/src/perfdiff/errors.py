"""Exception hierarchy. Everything user-facing derives from PerfdiffError."""


class PerfdiffError(Exception):
    """Base class for all data/validation errors raised by this package."""


class AstFormatError(PerfdiffError):
    """Malformed AST-JSON: bad JSON, wrong types, unknown keys."""


class AstStructureError(PerfdiffError):
    """Tree invariant violated: cycle, orphan, duplicate id, missing root."""


class NormalizeError(PerfdiffError):
    """Normalization produced an empty tree (no function definitions)."""


class LexError(PerfdiffError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at {line}:{col}")
        self.line = line
        self.col = col


class ParseError(PerfdiffError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at {line}:{col}")
        self.line = line
        self.col = col


class VocabError(PerfdiffError):
    """Node kind not registered and no reserved unknown slot available."""


class PairError(PerfdiffError):
    """Invalid pair-generation request (too few submissions, bad split...)."""


class ModelFormatError(PerfdiffError):
    """Model/checkpoint file rejected: bad magic, version, or checksum."""


class TrainingDiverged(PerfdiffError):
    """Loss became non-finite during optimization."""


class SynthError(PerfdiffError):
    """Synthetic corpus generation could not satisfy its constraints."""


class EvalError(PerfdiffError):
    """Evaluation request invalid (e.g., empty pair set, unknown tag)."""
