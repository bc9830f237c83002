"""Exception types raised across the solver stack."""


class ExactDesignError(Exception):
    """Base class for all package errors."""


class DomainError(ExactDesignError):
    """The information matrix is singular (x lies outside dom f)."""


class EmptySet(ExactDesignError):
    """The capped simplex {e'x = N, lower <= x <= upper} is empty."""


class DegenerateSet(ExactDesignError):
    """No exchange pair exists because the feasible set is a single point."""


class Infeasible(ExactDesignError):
    """The design problem admits no budget-exact design within the caps."""


class AllIntegral(ExactDesignError):
    """Branching was requested on a relaxation solution with no fractional entry."""


class TooLarge(ExactDesignError):
    """Brute-force enumeration would exceed its candidate cap."""


class ParseError(ExactDesignError):
    """Malformed instance file."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class RankError(ExactDesignError):
    """The experiment matrix does not have full column rank."""
