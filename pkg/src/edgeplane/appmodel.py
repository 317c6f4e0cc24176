"""Application model: a microservice DAG plus the demand offered to it.

Traffic enters at ingress microservices (fed directly by IoT device groups)
and propagates along DAG edges, each hop scaled by the edge's rate ratio.
Fan-in sums and fan-out duplicates.  Rates are kept as ``Fraction`` end to
end so propagation, instance arithmetic and flow conservation are exact.

Microservices flagged ``placed_on_iot`` live on the devices themselves: they
are never scheduled, consume no modeled resources, and act purely as traffic
sources for the ingress set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .errors import (
    CycleDetected,
    DuplicateId,
    InvalidApplication,
    InvalidRequest,
    MissingLocality,
    UnknownDomain,
    UnknownMicroservice,
)
from .locality import LocalityLevel


def as_rate(value) -> Fraction:
    """Normalize a document number to an exact rate.

    Floats go through their shortest decimal repr, so a YAML ``0.1`` becomes
    exactly 1/10 rather than the binary approximation.
    """
    if isinstance(value, bool) or not isinstance(value, (int, float, Fraction)):
        raise InvalidRequest(f"expected a number, got {value!r}")
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


def rate_to_number(value: Fraction):
    """Render a rate for documents: int when integral, float otherwise."""
    if value.denominator == 1:
        return int(value)
    return float(value)


@dataclass(frozen=True)
class Microservice:
    id: str
    cpu_req: int  # millicores per instance
    mem_req: int  # MiB per instance
    capacity_rps: Fraction  # rated throughput per instance
    placed_on_iot: bool = False

    def __post_init__(self):
        if self.placed_on_iot:
            return
        if self.cpu_req <= 0 or self.mem_req <= 0:
            raise InvalidApplication(f"microservice {self.id!r} needs positive resource requests")
        if self.capacity_rps <= 0:
            raise InvalidApplication(f"microservice {self.id!r} needs positive capacity_rps")


@dataclass(frozen=True)
class AppEdge:
    """Directed call edge; ``rate_ratio`` scales upstream rate into downstream rate."""

    from_ms: str
    to_ms: str
    rate_ratio: Fraction = Fraction(1)

    def __post_init__(self):
        if self.rate_ratio < 0:
            raise InvalidApplication(f"edge {self.from_ms}->{self.to_ms} ratio must be >= 0")


@dataclass
class ApplicationDag:
    id: str
    microservices: dict[str, Microservice]
    edges: tuple[AppEdge, ...]
    ingress_ids: frozenset[str]
    _topo: list[str] = field(default_factory=list, repr=False)

    def predecessors(self, ms_id: str) -> list[AppEdge]:
        return [e for e in self.edges if e.to_ms == ms_id]

    def successors(self, ms_id: str) -> list[AppEdge]:
        return [e for e in self.edges if e.from_ms == ms_id]

    def topological_order(self) -> list[str]:
        if not self._topo:
            self._topo = _topo_sort(self)
        return list(self._topo)

    def topo_rank(self) -> dict[str, int]:
        return {ms: i for i, ms in enumerate(self.topological_order())}


def _topo_sort(app: ApplicationDag) -> list[str]:
    indegree = {ms: 0 for ms in app.microservices}
    for edge in app.edges:
        indegree[edge.to_ms] += 1
    order: list[str] = []
    ready = sorted(ms for ms, deg in indegree.items() if deg == 0)
    while ready:
        ms = ready.pop(0)
        order.append(ms)
        changed = False
        for edge in app.edges:
            if edge.from_ms == ms:
                indegree[edge.to_ms] -= 1
                if indegree[edge.to_ms] == 0:
                    ready.append(edge.to_ms)
                    changed = True
        if changed:
            ready.sort()
    if len(order) != len(app.microservices):
        raise CycleDetected(_find_cycle(app, {ms for ms, deg in indegree.items() if deg > 0}))
    return order


def _find_cycle(app: ApplicationDag, candidates: set[str]) -> list[str]:
    succ: dict[str, list[str]] = {ms: [] for ms in candidates}
    for edge in app.edges:
        if edge.from_ms in candidates and edge.to_ms in candidates:
            succ[edge.from_ms].append(edge.to_ms)
    start = sorted(candidates)[0]
    path, seen = [start], {start}
    node = start
    while True:
        node = sorted(succ[node])[0]
        if node in seen:
            return path[path.index(node):] + [node]
        path.append(node)
        seen.add(node)


def validate_app(app: ApplicationDag) -> ApplicationDag:
    """Check DAG structure.

    Raises:
        CycleDetected: the edges are not acyclic (self-edges included).
        UnknownMicroservice: an edge endpoint is not declared.
        UnknownIngress: an ingress id is undeclared, or names an IoT-placed
            microservice.
        InvalidApplication: an ingress microservice has a non-IoT predecessor.
        UnreachableMicroservice: a schedulable microservice is not reachable
            from any ingress.
    """
    from .errors import UnknownIngress, UnreachableMicroservice

    for edge in app.edges:
        for endpoint in (edge.from_ms, edge.to_ms):
            if endpoint not in app.microservices:
                raise UnknownMicroservice(f"edge endpoint {endpoint!r} not declared")
        if edge.from_ms == edge.to_ms:
            raise CycleDetected([edge.from_ms, edge.to_ms])
    if len({(e.from_ms, e.to_ms) for e in app.edges}) != len(app.edges):
        raise InvalidApplication("duplicate edge in application DAG")

    for ingress in app.ingress_ids:
        if ingress not in app.microservices:
            raise UnknownIngress(f"ingress {ingress!r} not declared")
        if app.microservices[ingress].placed_on_iot:
            raise UnknownIngress(f"ingress {ingress!r} is placed on IoT devices")
        for edge in app.predecessors(ingress):
            if not app.microservices[edge.from_ms].placed_on_iot:
                raise InvalidApplication(
                    f"ingress {ingress!r} has non-IoT predecessor {edge.from_ms!r}"
                )

    app.topological_order()  # raises CycleDetected on cycles

    reachable = set(app.ingress_ids)
    frontier = list(app.ingress_ids)
    while frontier:
        ms = frontier.pop()
        for edge in app.successors(ms):
            if edge.to_ms not in reachable:
                reachable.add(edge.to_ms)
                frontier.append(edge.to_ms)
    for ms_id, ms in sorted(app.microservices.items()):
        if not ms.placed_on_iot and ms_id not in reachable:
            raise UnreachableMicroservice(f"{ms_id!r} is not reachable from any ingress")
    return app


def app_from_doc(doc: dict) -> ApplicationDag:
    """Parse and validate the application fragment of a scenario document."""
    if not isinstance(doc, dict):
        raise InvalidApplication("application fragment must be a mapping")
    app_id = doc.get("id")
    if not isinstance(app_id, str) or not app_id:
        raise InvalidApplication("application id must be a non-empty string")

    microservices: dict[str, Microservice] = {}
    for entry in doc.get("microservices") or []:
        ms_id = entry.get("id")
        if not isinstance(ms_id, str) or not ms_id:
            raise InvalidApplication(f"microservice id must be a non-empty string, got {ms_id!r}")
        if ms_id in microservices:
            raise DuplicateId(f"microservice id {ms_id!r} already used")
        iot = bool(entry.get("iot", False))
        microservices[ms_id] = Microservice(
            id=ms_id,
            cpu_req=int(entry.get("cpu_m", 0)),
            mem_req=int(entry.get("mem_mi", 0)),
            capacity_rps=as_rate(entry.get("capacity_rps", 0)),
            placed_on_iot=iot,
        )
    if not microservices:
        raise InvalidApplication("application declares no microservices")

    edges = tuple(
        AppEdge(
            from_ms=entry.get("from"),
            to_ms=entry.get("to"),
            rate_ratio=as_rate(entry.get("ratio", 1)),
        )
        for entry in doc.get("edges") or []
    )
    ingress = frozenset(doc.get("ingress") or ())

    app = ApplicationDag(id=app_id, microservices=microservices, edges=edges, ingress_ids=ingress)
    return validate_app(app)


@dataclass
class PlacementRequest:
    """Offered ingress load: per attachment domain, rps per ingress microservice."""

    app: ApplicationDag
    demand: dict[str, dict[str, Fraction]]

    def normalized_demand(self) -> dict[str, dict[str, Fraction]]:
        return {
            domain: {ms: as_rate(rps) for ms, rps in sorted(per.items())}
            for domain, per in sorted(self.demand.items())
        }

    def validate_against(self, graph) -> "PlacementRequest":
        attachment_domains = set(graph.attachment_domains())
        for domain, per in self.demand.items():
            if domain not in graph.domains:
                raise UnknownDomain(domain)
            if domain not in attachment_domains:
                raise InvalidRequest(f"demand domain {domain!r} has no IoT attachment")
            for ms_id, rps in per.items():
                if ms_id not in self.app.ingress_ids:
                    raise InvalidRequest(f"demand names non-ingress microservice {ms_id!r}")
                if as_rate(rps) < 0:
                    raise InvalidRequest(f"demand for {ms_id!r} in {domain!r} must be >= 0")
        return self


def demand_from_doc(app: ApplicationDag, doc: dict) -> PlacementRequest:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise InvalidRequest("demand fragment must be a mapping")
    demand: dict[str, dict[str, Fraction]] = {}
    for domain, per in doc.items():
        if not isinstance(per, dict):
            raise InvalidRequest(f"demand for domain {domain!r} must map microservices to rps")
        demand[str(domain)] = {str(ms): as_rate(rps) for ms, rps in per.items()}
    return PlacementRequest(app=app, demand=demand)


@dataclass
class DemandProfile:
    """Per microservice: aggregated rps keyed by locality anchor.

    Anchors are domain ids (strict-domain scope), region ids (strict-region)
    or the pooled ``"global"`` key.  Static propagation only ever coarsens
    anchors; it cannot split an upstream pool back into finer anchors, so a
    microservice fed from a coarser pool keeps the coarse anchor.  The planner
    refines those cases from actual upstream instance locations instead.
    """

    per_ms: dict[str, dict[str, Fraction]]

    def total(self, ms_id: str) -> Fraction:
        return sum(self.per_ms.get(ms_id, {}).values(), Fraction(0))


LocalityResolver = Callable[[str], tuple[LocalityLevel, Callable[[str], str]]]


def propagate_demand(app: ApplicationDag, request: PlacementRequest, locality_of: LocalityResolver) -> DemandProfile:
    """Push ingress demand through the DAG, aggregating at each hop.

    ``locality_of`` maps a microservice id to ``(level, anchor_of)`` where
    ``anchor_of`` folds a source anchor into this microservice's anchor key.
    Each microservice is visited exactly once, in topological order; incoming
    contributions sum and each is scaled by its edge's rate ratio.
    """
    demand = request.normalized_demand()
    profile: dict[str, dict[str, Fraction]] = {}
    for ms_id in app.topological_order():
        if app.microservices[ms_id].placed_on_iot:
            continue
        resolved = locality_of(ms_id)
        if resolved is None:
            raise MissingLocality(f"no locality resolves for {ms_id!r}")
        _level, anchor_of = resolved
        acc: dict[str, Fraction] = {}
        if ms_id in app.ingress_ids:
            for domain, per in demand.items():
                rps = per.get(ms_id)
                if rps is None:
                    continue
                anchor = anchor_of(domain)
                acc[anchor] = acc.get(anchor, Fraction(0)) + rps
        else:
            for edge in app.predecessors(ms_id):
                if app.microservices[edge.from_ms].placed_on_iot:
                    continue  # device-side sources feed ingress only
                for src_anchor, rps in profile.get(edge.from_ms, {}).items():
                    anchor = anchor_of(src_anchor)
                    acc[anchor] = acc.get(anchor, Fraction(0)) + rps * edge.rate_ratio
        profile[ms_id] = dict(sorted(acc.items()))
    return DemandProfile(per_ms=profile)
