'''
Exceptions raised across the audit pipeline.

Everything derives from AuditError (a ValueError) so the per-point worker can
catch one type and record the point as skipped.
'''


class AuditError(ValueError):
    pass


class JetArgumentError(AuditError):
    pass


class JetSingularityError(AuditError):
    pass


class JetTruncationError(AuditError):
    pass


class ChartDomainError(AuditError):
    pass


class DegenerateParametrizationError(AuditError):
    pass


class InconsistencyError(AuditError):
    pass


class StructureViolationError(AuditError):
    pass


class NotASpaceFormProductError(AuditError):
    pass


class SpecValidationError(AuditError):
    pass


class SpecParseError(AuditError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class NullFormSignal(AuditError):
    """The cubic form vanishes on the requested subspace."""
    pass
