class GridSimError(Exception):
    pass


class InvalidSpecError(GridSimError, ValueError):
    """Raised with every violated invariant, not just the first."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NoRouteError(GridSimError):
    pass


class NoCandidateError(GridSimError):
    pass


class InvalidScheduleError(GridSimError, ValueError):
    pass


class InsufficientSharesError(GridSimError):
    pass


class VersionConflictError(GridSimError):
    pass


class ChecksumError(GridSimError):
    pass


class IncomparableInputError(GridSimError, ValueError):
    pass
