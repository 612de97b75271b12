"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A linear-algebra step failed beyond recovery (e.g. factorization
    still failing at the maximum allowed diagonal jitter)."""


class SchemaError(ValueError):
    """An input file violates its expected schema.

    Carries enough context to name the offending file, line and field.
    """

    def __init__(self, message, *, path=None, line=None, field=None):
        parts = []
        if path is not None:
            parts.append(f"file {path}")
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field {field!r}")
        where = ", ".join(parts)
        super().__init__(f"{message} ({where})" if where else message)
        self.path = path
        self.line = line
        self.field = field
