"""Exception types raised across the package.

Kept in one flat module so that loaders, the planner and the simulator can
share reference errors (unknown domain, unknown microservice) without import
cycles.
"""


class EdgeplaneError(Exception):
    """Base class for every error raised by this package."""


# --- infrastructure model ---------------------------------------------------


class TopologyError(EdgeplaneError):
    pass


class DanglingReference(TopologyError):
    """An id refers to an entity that does not exist in the topology."""

    def __init__(self, missing_id: str, context: str = ""):
        self.missing_id = missing_id
        detail = f" ({context})" if context else ""
        super().__init__(f"unresolved reference {missing_id!r}{detail}")


class DuplicateId(TopologyError):
    pass


class EmptyTopology(TopologyError):
    pass


class InvalidTopology(TopologyError):
    """Structurally parseable topology with out-of-range or malformed values."""


class UnknownDomain(EdgeplaneError):
    pass


class UnknownNode(EdgeplaneError):
    pass


# --- application model ------------------------------------------------------


class AppModelError(EdgeplaneError):
    pass


class CycleDetected(AppModelError):
    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__(" -> ".join(self.cycle))


class UnreachableMicroservice(AppModelError):
    pass


class UnknownIngress(AppModelError):
    pass


class InvalidApplication(AppModelError):
    pass


class InvalidRequest(AppModelError):
    """A placement request that does not fit the application or topology."""


class MissingLocality(AppModelError):
    """No locality level resolves for a microservice or consumer edge."""


class UnknownMicroservice(EdgeplaneError):
    pass


# --- policy engine ----------------------------------------------------------


class PolicyError(EdgeplaneError):
    pass


class DuplicateRule(PolicyError):
    pass


class NonIngressIotRule(PolicyError):
    """IoT locality rules may only target ingress microservices."""


class NonEdgeMsRule(PolicyError):
    """Service-to-service locality rules must reference an application DAG edge."""


class UnknownPolicyType(PolicyError):
    pass


class MissingAnchor(PolicyError):
    """A domain- or region-scoped query was issued without an anchor domain."""


# --- planning ---------------------------------------------------------------


class PlanningError(EdgeplaneError):
    pass


class InfeasiblePlacement(PlanningError):
    """The planner proved no compliant placement exists (or exhausted its search).

    Carries the microservice and anchor scope that could not be satisfied, the
    failure cause ("policy-empty scope" or "insufficient capacity") and the
    partial mapping reached on the deepest search path, for diagnosis.
    """

    def __init__(self, microservice: str, anchor: str, cause: str, partial: dict | None = None):
        self.microservice = microservice
        self.anchor = anchor
        self.cause = cause
        self.partial = partial or {}
        super().__init__(f"cannot place {microservice!r} for anchor {anchor!r}: {cause}")


class InsufficientCapacity(PlanningError):
    def __init__(self, shortfall: int, detail: str = ""):
        self.shortfall = shortfall
        suffix = f" ({detail})" if detail else ""
        super().__init__(f"{shortfall} instance(s) could not be assigned{suffix}")


class NoDestinationInScope(PlanningError):
    """A consumer holds instances in a domain whose locality scope contains no target instance."""


# --- simulation -------------------------------------------------------------


class SimulationError(EdgeplaneError):
    pass


class MissingRoute(SimulationError):
    """A positive flow has no matching routing rule; the plan is inconsistent."""


# --- scenario files ---------------------------------------------------------


class ScenarioParseError(EdgeplaneError):
    """The scenario document could not be read or is not structurally a scenario."""
