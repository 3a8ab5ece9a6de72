"""Exception types shared across the package."""


class GmxError(Exception):
    """Base class for all package errors."""


class ConfigError(GmxError):
    """Invalid configuration value or malformed config file."""


class DimensionError(GmxError):
    """Array shapes incompatible with the requested operation."""

    def __init__(self, message, *shapes):
        if shapes:
            message = f"{message}: shapes {', '.join(str(tuple(s)) for s in shapes)}"
        super().__init__(message)


class NumericError(GmxError):
    """A non-finite value was produced; names the offending op."""

    def __init__(self, op_name, detail=""):
        msg = f"non-finite value produced by op '{op_name}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.op_name = op_name


class PayloadKindError(GmxError):
    """Operation requires a different payload kind (vector vs image)."""


class RoleError(GmxError):
    """Dataset has the wrong domain role for this operation."""


class QuarantineError(GmxError):
    """Client-side code attempted to read quarantined target labels."""


class MissingLabelsError(GmxError):
    """Evaluation requested on a dataset without labels."""


class SetupInvalidError(GmxError):
    """A theorem-setup assumption does not hold; names the assumption."""

    def __init__(self, assumption, detail=""):
        msg = f"setup violates assumption: {assumption}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.assumption = assumption
