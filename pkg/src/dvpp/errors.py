"""Exception types shared across the package."""


class DvppError(Exception):
    """Base class for model and runtime errors."""


class ValidationError(DvppError):
    """Input failed a structural or invariant check."""

    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


class SingularNetwork(DvppError):
    """The susceptance matrix cannot be solved (disconnected graph)."""

    def __init__(self, components):
        self.components = components
        detail = "; ".join(str(sorted(c)) for c in components)
        super().__init__(f"network is disconnected; buses without the slack: {detail}")


class IslandingOutage(DvppError):
    """Removing a line would split the network."""

    def __init__(self, line_index):
        self.line_index = line_index
        super().__init__(f"outage of line {line_index} islands the network")


class ZeroInertiaConfig(DvppError):
    pass


class NoHeadroom(DvppError):
    pass


class AllUnitsFailed(DvppError):
    pass


class InfeasibleProfile(DvppError):
    pass


class NoDisturbance(DvppError):
    pass


class LPError(DvppError):
    pass


class InfeasibleLP(LPError):
    pass


class UnboundedLP(LPError):
    pass
