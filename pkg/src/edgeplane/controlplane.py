"""Control plane: demand-driven placement, routing rules, validation, replans.

Placement walks the application DAG frontier (a microservice becomes placeable
once every predecessor is placed), strictest locality first.  For each
microservice the offered demand is anchored per consumer edge: strict-domain
edges anchor at each domain where the consumer holds instances, strict-region
edges at each such region, and global edges pool everything.  Instance counts
are the ceiling of anchored demand over per-instance capacity, and nodes are
chosen first-fit over the anchor's eligible domains, ordered by descending
free cpu with node-id tie-breaks.

The greedy pass is the first branch of a backtracking search: when a greedy
choice strands a later, stricter microservice, earlier node choices are
revisited before the request is declared infeasible.  All ordering is
deterministic, so identical inputs produce identical plans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .appmodel import ApplicationDag, DemandProfile, PlacementRequest, as_rate
from .errors import (
    InfeasiblePlacement,
    InsufficientCapacity,
    NoDestinationInScope,
    PlanningError,
    UnknownDomain,
    UnknownNode,
)
from .locality import LocalityLevel
from .policy import PolicySet, eligible_domains_for_anchor
from .topology import GLOBAL_ANCHOR, InfrastructureGraph

#: Routing-rule consumer marker for traffic entering from IoT device groups.
IOT_SOURCE = "iot"

#: Upper bound on placement assignments explored before the search gives up.
SEARCH_BUDGET = 200_000


# --- plan data types ---------------------------------------------------------


@dataclass
class AnchorPlacement:
    """Instances serving one demand anchor of one microservice.

    ``slots`` preserves assignment order; scale-down removes from the tail so
    the newest instances go first.
    """

    anchor: str  # domain id, region id, or the pooled "global" key
    level: LocalityLevel
    demand_rps: Fraction
    slots: list[tuple[str, int]]  # (node id, instance count), in placement order

    @property
    def total_instances(self) -> int:
        return sum(k for _, k in self.slots)

    def by_node(self) -> dict[str, int]:
        agg: dict[str, int] = {}
        for node_id, k in self.slots:
            agg[node_id] = agg.get(node_id, 0) + k
        return dict(sorted(agg.items()))


@dataclass
class PlacementMapping:
    per_ms: dict[str, dict[str, AnchorPlacement]]
    order: tuple[str, ...] = ()

    def microservice_ids(self) -> list[str]:
        ordered = [ms for ms in self.order if ms in self.per_ms]
        ordered += sorted(set(self.per_ms) - set(ordered))
        return ordered

    def instances_of(self, ms_id: str) -> dict[str, int]:
        agg: dict[str, int] = {}
        for ap in self.per_ms.get(ms_id, {}).values():
            for node_id, k in ap.slots:
                agg[node_id] = agg.get(node_id, 0) + k
        return dict(sorted(agg.items()))

    def total_instances(self, ms_id: str) -> int:
        return sum(self.instances_of(ms_id).values())

    def domains_with_instances(self, ms_id: str, graph: InfrastructureGraph) -> list[str]:
        return sorted({graph.nodes[n].domain_id for n in self.instances_of(ms_id)})

    def clone(self) -> "PlacementMapping":
        return PlacementMapping(
            per_ms={
                ms: {
                    anchor: AnchorPlacement(ap.anchor, ap.level, ap.demand_rps, list(ap.slots))
                    for anchor, ap in anchors.items()
                }
                for ms, anchors in self.per_ms.items()
            },
            order=self.order,
        )

    def slots_view(self) -> dict:
        return {
            ms: {anchor: list(ap.slots) for anchor, ap in anchors.items()}
            for ms, anchors in self.per_ms.items()
        }


@dataclass(frozen=True)
class RoutingRule:
    """Weighted destinations for one (source domain, consumer, target) key."""

    domain_id: str
    consumer: str  # consuming microservice id, or IOT_SOURCE for ingress traffic
    target_ms: str
    level: LocalityLevel
    destinations: tuple[tuple[str, int], ...]  # (node id, weight = instance count)


@dataclass
class RoutingRuleSet:
    rules: tuple[RoutingRule, ...]
    _index: dict[tuple[str, str, str], RoutingRule] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {(r.domain_id, r.consumer, r.target_ms): r for r in self.rules}

    def lookup(self, domain_id: str, consumer: str, target_ms: str) -> RoutingRule | None:
        return self._index.get((domain_id, consumer, target_ms))

    def for_domain(self, domain_id: str) -> list[RoutingRule]:
        return [r for r in self.rules if r.domain_id == domain_id]


@dataclass
class DeploymentPlan:
    """A placement mapping plus the routing rules derived from it.

    Carries the demand snapshot it was planned for, so replans triggered by
    drain or overload alerts can re-derive per-anchor requirements without
    external state.  ``revision`` increments on every accepted replan.
    """

    app_id: str
    revision: int
    mapping: PlacementMapping
    routes: RoutingRuleSet
    demand: dict[str, dict[str, Fraction]]

    def demand_profile(self) -> DemandProfile:
        return DemandProfile(per_ms={
            ms: {anchor: ap.demand_rps for anchor, ap in sorted(anchors.items())}
            for ms, anchors in self.mapping.per_ms.items()
        })


ALERT_KINDS = {
    "demand_change": ("demand",),
    "node_drain": ("node",),
    "overload": ("node", "utilization"),
}


@dataclass(frozen=True)
class Alert:
    kind: str
    payload: dict
    tick: int = 0

    def __post_init__(self):
        if self.kind not in ALERT_KINDS:
            raise PlanningError(f"unknown alert kind {self.kind!r}")
        missing = [k for k in ALERT_KINDS[self.kind] if k not in self.payload]
        if missing:
            raise PlanningError(f"{self.kind} alert payload missing {missing}")


@dataclass(frozen=True)
class PlacementStep:
    """Trace record: one frontier refresh and the microservice chosen from it."""

    microservice: str
    level: LocalityLevel
    frontier: tuple[str, ...]


@dataclass(frozen=True)
class Violation:
    kind: str  # "placement" | "locality" | "capacity" | "route"
    subject: str
    detail: str


@dataclass
class ComplianceReport:
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_doc(self) -> dict:
        return {
            "violations": [
                {"kind": v.kind, "subject": v.subject, "detail": v.detail}
                for v in self.violations
            ]
        }


# --- capacity bookkeeping ----------------------------------------------------


class _Ledger:
    """Working copy of node free capacities; committed to the graph on success."""

    def __init__(self, cpu: dict[str, int], mem: dict[str, int]):
        self.cpu = cpu
        self.mem = mem

    @classmethod
    def from_graph(cls, graph: InfrastructureGraph) -> "_Ledger":
        return cls(
            cpu={n.id: n.cpu_free for n in graph.nodes.values()},
            mem={n.id: n.mem_free for n in graph.nodes.values()},
        )

    def max_fit(self, node_id: str, cpu_req: int, mem_req: int) -> int:
        return min(self.cpu[node_id] // cpu_req, self.mem[node_id] // mem_req)

    def take(self, node_id: str, cpu: int, mem: int):
        self.cpu[node_id] -= cpu
        self.mem[node_id] -= mem

    def give(self, node_id: str, cpu: int, mem: int):
        self.cpu[node_id] += cpu
        self.mem[node_id] += mem

    def commit(self, graph: InfrastructureGraph):
        for node in graph.nodes.values():
            node.cpu_free = self.cpu[node.id]
            node.mem_free = self.mem[node.id]


class _BudgetExhausted(Exception):
    pass


class _Budget:
    def __init__(self, limit: int):
        self.left = limit

    def spend(self):
        self.left -= 1
        if self.left < 0:
            raise _BudgetExhausted


class _Failure:
    """Deepest point the search reached before running out of options."""

    def __init__(self):
        self.depth = -1
        self.ms: str | None = None
        self.anchor: str | None = None
        self.cause: str | None = None
        self.partial: dict = {}

    def note(self, ms_index: int, anchor_index: int, ms_id: str, anchor: str, cause: str, mapping: dict):
        depth = ms_index * 10_000 + anchor_index
        if depth > self.depth:
            self.depth = depth
            self.ms, self.anchor, self.cause = ms_id, anchor, cause
            self.partial = {
                ms: {a: list(ap.slots) for a, ap in anchors.items()}
                for ms, anchors in mapping.items()
            }


# --- core arithmetic ----------------------------------------------------------


def required_instances(demand_rps, capacity_rps) -> int:
    """Ceiling of demand over per-instance capacity; zero demand needs zero."""
    demand = as_rate(demand_rps)
    capacity = as_rate(capacity_rps)
    if capacity <= 0:
        raise PlanningError("capacity_rps must be positive")
    if demand <= 0:
        return 0
    return math.ceil(demand / capacity)


def _ordered_nodes(
    graph: InfrastructureGraph,
    domains: list[str],
    ledger: _Ledger,
    prefer_domain: str | None = None,
) -> list[str]:
    nodes = [
        node
        for domain_id in domains
        for node in graph.nodes_of_domain(domain_id)
        if not node.drained
    ]
    if prefer_domain is not None:
        region = graph.domains[prefer_domain].region_id

        def tier(node) -> int:
            if node.domain_id == prefer_domain:
                return 0
            return 1 if graph.domains[node.domain_id].region_id == region else 2

        nodes.sort(key=lambda n: (tier(n), -ledger.cpu[n.id], n.id))
    else:
        nodes.sort(key=lambda n: (-ledger.cpu[n.id], n.id))
    return [n.id for n in nodes]


def _first_fit(node_ids, cpu_req: int, mem_req: int, count: int, ledger: _Ledger):
    """Greedy packing in the given node order; returns (slots, shortfall)."""
    slots: list[tuple[str, int]] = []
    remaining = count
    for node_id in node_ids:
        if remaining == 0:
            break
        k = min(remaining, ledger.max_fit(node_id, cpu_req, mem_req))
        if k > 0:
            slots.append((node_id, k))
            remaining -= k
    if remaining > 0:
        return None, remaining
    return slots, 0


def select_nodes(graph: InfrastructureGraph, domain_set, cpu_req: int, mem_req: int, instances: int) -> list[tuple[str, int]]:
    """First-fit assignment of ``instances`` across the given domains.

    Nodes are considered in (descending free cpu, node id) order and each
    takes as many instances as its free capacity allows.  The decrement is
    transactional: on InsufficientCapacity no free capacity changes.
    """
    domains = sorted(domain_set)
    for domain_id in domains:
        if domain_id not in graph.domains:
            raise UnknownDomain(domain_id)
    ledger = _Ledger.from_graph(graph)
    node_ids = _ordered_nodes(graph, domains, ledger)
    slots, shortfall = _first_fit(node_ids, cpu_req, mem_req, instances, ledger)
    if slots is None:
        raise InsufficientCapacity(shortfall, f"{instances} requested across {len(domains)} domain(s)")
    for node_id, k in slots:
        ledger.take(node_id, cpu_req * k, mem_req * k)
    ledger.commit(graph)
    return slots


# --- demand anchoring ----------------------------------------------------------


def _anchor_of(graph: InfrastructureGraph, domain_id: str, level: LocalityLevel) -> str:
    if level is LocalityLevel.STRICT_DOMAIN:
        return domain_id
    if level is LocalityLevel.STRICT_REGION:
        return graph.domains[domain_id].region_id
    return GLOBAL_ANCHOR


def _emission(graph: InfrastructureGraph, anchors: dict[str, AnchorPlacement]) -> dict[str, Fraction]:
    """Per-domain output rate of a placed microservice.

    Within an anchor, proportional load balancing spreads traffic evenly per
    instance, so a domain emits the anchor's demand weighted by its share of
    the anchor's instances.
    """
    out: dict[str, Fraction] = {}
    for anchor in sorted(anchors):
        ap = anchors[anchor]
        total = ap.total_instances
        if total == 0 or ap.demand_rps <= 0:
            continue
        for node_id, k in ap.slots:
            domain_id = graph.nodes[node_id].domain_id
            out[domain_id] = out.get(domain_id, Fraction(0)) + ap.demand_rps * Fraction(k, total)
    return out


def _anchor_demand(
    graph: InfrastructureGraph,
    app: ApplicationDag,
    pset: PolicySet,
    demand: dict[str, dict[str, Fraction]],
    ms_id: str,
    per_ms_mapping: dict[str, dict[str, AnchorPlacement]],
) -> dict[str, tuple[LocalityLevel, Fraction]]:
    """Anchored demand for one microservice given its consumers' placements.

    Ingress microservices anchor the request demand at each attachment domain
    per their IoT locality level.  Everything else sums consumer emissions per
    edge, anchored at that edge's locality level.  Zero contributions are
    dropped, so every returned anchor needs at least one instance.
    """
    acc: dict[str, tuple[LocalityLevel, Fraction]] = {}

    def add(anchor: str, level: LocalityLevel, rps: Fraction):
        if rps <= 0:
            return
        if anchor in acc:
            acc[anchor] = (level, acc[anchor][1] + rps)
        else:
            acc[anchor] = (level, rps)

    if ms_id in app.ingress_ids:
        level = pset.iot_level(ms_id)
        for domain in sorted(demand):
            rps = demand[domain].get(ms_id, Fraction(0))
            add(_anchor_of(graph, domain, level), level, rps)
    else:
        for edge in sorted(app.predecessors(ms_id), key=lambda e: e.from_ms):
            if app.microservices[edge.from_ms].placed_on_iot:
                continue
            level = pset.edge_level(edge.from_ms, ms_id)
            emission = _emission(graph, per_ms_mapping.get(edge.from_ms, {}))
            for domain, rps in sorted(emission.items()):
                add(_anchor_of(graph, domain, level), level, rps * edge.rate_ratio)
    return acc


def _ms_strictness(pset: PolicySet, app: ApplicationDag, ms_id: str) -> LocalityLevel:
    if ms_id in app.ingress_ids:
        return pset.iot_level(ms_id)
    incoming = [
        pset.edge_level(e.from_ms, e.to_ms)
        for e in app.predecessors(ms_id)
        if not app.microservices[e.from_ms].placed_on_iot
    ]
    if not incoming:
        return pset.default_locality
    return min(incoming, key=lambda level: level.strictness)


def _placement_sequence(app: ApplicationDag, pset: PolicySet, trace: list | None = None) -> list[str]:
    """Frontier order: all predecessors placed, strictest locality first.

    Ties break on topological rank, then id.  IoT-placed microservices seed
    the placed set and are never scheduled themselves.
    """
    rank = app.topo_rank()
    placed = {ms_id for ms_id, ms in app.microservices.items() if ms.placed_on_iot}
    remaining = set(app.microservices) - placed
    sequence: list[str] = []
    while remaining:
        frontier = sorted(
            (ms_id for ms_id in remaining
             if all(e.from_ms in placed for e in app.predecessors(ms_id))),
            key=lambda m: (_ms_strictness(pset, app, m).strictness, rank[m], m),
        )
        if not frontier:
            raise PlanningError("placement frontier stalled; application DAG not validated")
        pick = frontier[0]
        if trace is not None:
            trace.append(PlacementStep(pick, _ms_strictness(pset, app, pick), tuple(frontier)))
        sequence.append(pick)
        placed.add(pick)
        remaining.remove(pick)
    return sequence


# --- placement search ----------------------------------------------------------


def _distributions(node_ids, cpu_req: int, mem_req: int, count: int, ledger: _Ledger, budget: _Budget):
    """All ways to split ``count`` instances across the nodes, greedy-first.

    The first yielded assignment packs each node to its maximum in order,
    which is exactly the first-fit result; later assignments peel instances
    off earlier nodes so the surrounding search can backtrack.
    """

    def rec(i: int, remaining: int):
        if remaining == 0:
            budget.spend()
            yield []
            return
        if i == len(node_ids):
            return
        available = 0
        for node_id in node_ids[i:]:
            available += ledger.max_fit(node_id, cpu_req, mem_req)
            if available >= remaining:
                break
        if available < remaining:
            return
        node_id = node_ids[i]
        top = min(remaining, ledger.max_fit(node_id, cpu_req, mem_req))
        for k in range(top, -1, -1):
            head = [(node_id, k)] if k else []
            for rest in rec(i + 1, remaining - k):
                yield head + rest

    yield from rec(0, count)


def place_application(
    graph: InfrastructureGraph,
    app: ApplicationDag,
    request: PlacementRequest,
    policies: PolicySet,
    *,
    trace: list | None = None,
    search_budget: int = SEARCH_BUDGET,
) -> DeploymentPlan:
    """Compute a compliant deployment plan for the offered demand.

    Walks the frontier sequence; for each microservice, derives anchored
    demand from the consumers already placed, computes the instance count per
    anchor and assigns nodes first-fit within the anchor's eligible domains
    (locality scope intersected with the placement restriction policy).  Node
    choices backtrack when a later microservice cannot be placed.  On success,
    node free capacities are decremented and routing rules generated.

    Raises InfeasiblePlacement naming the first unsatisfiable microservice
    and anchor, with the cause and the deepest partial mapping.
    """
    request.validate_against(graph)
    demand = request.normalized_demand()
    sequence = _placement_sequence(app, policies, trace=trace)
    ledger = _Ledger.from_graph(graph)
    budget = _Budget(search_budget)
    failure = _Failure()
    acc: dict[str, dict[str, AnchorPlacement]] = {}

    def place_ms(idx: int) -> bool:
        if idx == len(sequence):
            return True
        ms_id = sequence[idx]
        ms = app.microservices[ms_id]
        anchors = _anchor_demand(graph, app, policies, demand, ms_id, acc)
        items = sorted(anchors.items())
        placements: dict[str, AnchorPlacement] = {}
        acc[ms_id] = placements

        def place_anchor(j: int) -> bool:
            if j == len(items):
                return place_ms(idx + 1)
            anchor, (level, rps) = items[j]
            count = required_instances(rps, ms.capacity_rps)
            domains = eligible_domains_for_anchor(policies, ms_id, anchor, graph)
            if not domains:
                failure.note(idx, j, ms_id, anchor, "policy-empty scope", acc)
                return False
            node_ids = _ordered_nodes(graph, domains, ledger)
            for dist in _distributions(node_ids, ms.cpu_req, ms.mem_req, count, ledger, budget):
                for node_id, k in dist:
                    ledger.take(node_id, ms.cpu_req * k, ms.mem_req * k)
                placements[anchor] = AnchorPlacement(anchor, level, rps, list(dist))
                if place_anchor(j + 1):
                    return True
                placements.pop(anchor, None)
                for node_id, k in dist:
                    ledger.give(node_id, ms.cpu_req * k, ms.mem_req * k)
            failure.note(idx, j, ms_id, anchor, "insufficient capacity", acc)
            return False

        if place_anchor(0):
            return True
        acc.pop(ms_id, None)
        return False

    try:
        solved = place_ms(0)
    except _BudgetExhausted:
        raise InfeasiblePlacement(
            failure.ms or sequence[-1],
            failure.anchor or GLOBAL_ANCHOR,
            "insufficient capacity (search budget exhausted)",
            failure.partial,
        ) from None
    if not solved:
        raise InfeasiblePlacement(failure.ms, failure.anchor, failure.cause, failure.partial)

    ledger.commit(graph)
    mapping = PlacementMapping(
        per_ms={ms_id: acc[ms_id] for ms_id in sequence if acc.get(ms_id)},
        order=tuple(sequence),
    )
    routes = generate_routes(graph, app, mapping, policies)
    return DeploymentPlan(app_id=app.id, revision=1, mapping=mapping, routes=routes, demand=demand)


# --- routing -------------------------------------------------------------------


def generate_routes(
    graph: InfrastructureGraph,
    app: ApplicationDag,
    mapping: PlacementMapping,
    pset: PolicySet,
) -> RoutingRuleSet:
    """Derive weighted routing rules from a placement mapping.

    One rule per (source domain, consumer, target): destinations are the
    target's instances inside the locality scope anchored at the source
    domain, weighted by instance count.  Ingress rules anchor at each IoT
    attachment domain whose scope holds instances; consumer rules anchor at
    every domain where the consumer holds instances, and raise
    NoDestinationInScope when such a domain's scope is starved.
    """
    rules: list[RoutingRule] = []

    def scope_instances(target_ms: str, anchor_domain: str, level: LocalityLevel):
        allowed = set(graph.scope_domains(anchor_domain, level))
        return tuple(sorted(
            (node_id, count)
            for node_id, count in mapping.instances_of(target_ms).items()
            if graph.nodes[node_id].domain_id in allowed
        ))

    for ms_id in sorted(app.ingress_ids):
        level = pset.iot_level(ms_id)
        for domain_id in graph.attachment_domains():
            dest = scope_instances(ms_id, domain_id, level)
            if dest:
                rules.append(RoutingRule(domain_id, IOT_SOURCE, ms_id, level, dest))

    for edge in sorted(app.edges, key=lambda e: (e.from_ms, e.to_ms)):
        if app.microservices[edge.from_ms].placed_on_iot:
            continue
        level = pset.edge_level(edge.from_ms, edge.to_ms)
        for domain_id in mapping.domains_with_instances(edge.from_ms, graph):
            dest = scope_instances(edge.to_ms, domain_id, level)
            if not dest:
                if edge.rate_ratio > 0:
                    raise NoDestinationInScope(
                        f"{edge.from_ms} in {domain_id} has no {edge.to_ms} instance "
                        f"within its {level.value} scope"
                    )
                continue
            rules.append(RoutingRule(domain_id, edge.from_ms, edge.to_ms, level, dest))

    ordered = tuple(sorted(rules, key=lambda r: (r.domain_id, r.target_ms, r.consumer)))
    return RoutingRuleSet(ordered)


# --- independent validation ------------------------------------------------------


def _rule_key(rule: RoutingRule) -> str:
    return f"{rule.domain_id}/{rule.consumer}->{rule.target_ms}"


def validate_plan(
    graph: InfrastructureGraph,
    app: ApplicationDag,
    pset: PolicySet,
    plan: DeploymentPlan,
) -> ComplianceReport:
    """Re-check a plan against the policies from scratch.

    Deliberately does not reuse the planner's eligibility machinery: the
    restriction rules are re-evaluated from their raw data and locality scopes
    are recomputed directly from domain/region records, so a defect in the
    planner cannot hide itself here.
    """
    violations: list[Violation] = []

    counts: dict[tuple[str, str], int] = {}
    for ms_id, anchors in plan.mapping.per_ms.items():
        for ap in anchors.values():
            for node_id, k in ap.slots:
                counts[(ms_id, node_id)] = counts.get((ms_id, node_id), 0) + k

    def restriction_ok(ms_id: str, domain_id: str) -> bool:
        rule = pset.restriction.get(ms_id)
        if rule is None:
            return True
        if rule.mode == "allow":
            return domain_id in rule.domains
        return domain_id not in rule.domains

    cpu_used: dict[str, int] = {}
    mem_used: dict[str, int] = {}
    for (ms_id, node_id), k in sorted(counts.items()):
        if ms_id not in app.microservices:
            violations.append(Violation("placement", ms_id, "unknown microservice"))
            continue
        if node_id not in graph.nodes:
            violations.append(Violation("placement", f"{ms_id}@{node_id}", "unknown node"))
            continue
        node = graph.nodes[node_id]
        if not restriction_ok(ms_id, node.domain_id):
            violations.append(Violation(
                "placement", f"{ms_id}@{node_id}",
                f"placement restriction forbids {ms_id} in {node.domain_id}",
            ))
        if node.drained:
            violations.append(Violation(
                "capacity", f"{ms_id}@{node_id}", f"node {node_id} is drained",
            ))
        ms = app.microservices[ms_id]
        cpu_used[node_id] = cpu_used.get(node_id, 0) + ms.cpu_req * k
        mem_used[node_id] = mem_used.get(node_id, 0) + ms.mem_req * k

    for node_id in sorted(cpu_used):
        node = graph.nodes[node_id]
        if cpu_used[node_id] > node.cpu_capacity or mem_used[node_id] > node.mem_capacity:
            violations.append(Violation(
                "capacity", node_id,
                f"requested {cpu_used[node_id]}m/{mem_used[node_id]}Mi exceeds "
                f"{node.cpu_capacity}m/{node.mem_capacity}Mi",
            ))

    for rule in plan.routes.rules:
        if rule.consumer == IOT_SOURCE:
            if rule.target_ms not in pset.ingress_ids:
                violations.append(Violation("route", _rule_key(rule), "ingress rule for non-ingress target"))
                continue
            level = pset.iot_level(rule.target_ms)
        else:
            if (rule.consumer, rule.target_ms) not in pset.edge_pairs:
                violations.append(Violation("route", _rule_key(rule), "rule does not match an application edge"))
                continue
            level = pset.edge_level(rule.consumer, rule.target_ms)

        anchor = rule.domain_id
        if anchor not in graph.domains:
            violations.append(Violation("route", _rule_key(rule), f"unknown domain {anchor!r}"))
            continue
        if level is LocalityLevel.STRICT_DOMAIN:
            in_scope = {anchor}
        elif level is LocalityLevel.STRICT_REGION:
            region_id = graph.domains[anchor].region_id
            in_scope = {d for d, dom in graph.domains.items() if dom.region_id == region_id}
        else:
            in_scope = set(graph.domains)

        if not rule.destinations:
            violations.append(Violation("route", _rule_key(rule), "rule has no destinations"))
            continue
        for node_id, _weight in rule.destinations:
            node = graph.nodes.get(node_id)
            if node is None:
                violations.append(Violation("route", _rule_key(rule), f"unknown node {node_id!r}"))
                continue
            if node.domain_id not in in_scope:
                violations.append(Violation(
                    "locality", _rule_key(rule),
                    f"destination {node_id} in {node.domain_id} leaves the "
                    f"{level.value} scope of {anchor}",
                ))
            if counts.get((rule.target_ms, node_id), 0) <= 0:
                violations.append(Violation(
                    "route", _rule_key(rule),
                    f"destination {node_id} hosts no {rule.target_ms} instance",
                ))

        expected = {
            node_id: counts[(rule.target_ms, node_id)]
            for node_id in graph.nodes
            if graph.nodes[node_id].domain_id in in_scope
            and counts.get((rule.target_ms, node_id), 0) > 0
        }
        dest_nodes = {node_id for node_id, _ in rule.destinations}
        missing = sorted(set(expected) - dest_nodes)
        if missing:
            violations.append(Violation(
                "route", _rule_key(rule),
                f"in-scope instances not load-balanced: {', '.join(missing)}",
            ))
        total_weight = sum(w for _, w in rule.destinations)
        total_count = sum(expected.values())
        if total_weight > 0 and total_count > 0:
            for node_id, weight in rule.destinations:
                if weight * total_count != expected.get(node_id, 0) * total_weight:
                    violations.append(Violation(
                        "route", _rule_key(rule),
                        f"weight of {node_id} not proportional to its instance count",
                    ))
                    break

    return ComplianceReport(violations=violations)


# --- alert handling ---------------------------------------------------------------


def handle_alert(
    graph: InfrastructureGraph,
    app: ApplicationDag,
    policies: PolicySet,
    plan: DeploymentPlan,
    alert: Alert,
) -> DeploymentPlan:
    """Adjust a plan in response to an observer alert.

    A demand change replaces the plan's demand snapshot; a node drain marks
    the node unschedulable and displaces its instances; an overload replays
    the current demand.  One sweep in placement order then re-derives each
    anchor's requirement from current upstream placements: growth assigns
    first-fit (displaced instances prefer the drained node's own domain, then
    its region), shrink removes the newest instances first.  Routing rules are
    regenerated and the adjusted plan re-validated before it is returned with
    a bumped revision.
    """
    if alert.kind == "demand_change":
        raw = alert.payload["demand"]
        demand = {
            str(domain): {str(ms): as_rate(rps) for ms, rps in sorted(per.items())}
            for domain, per in sorted(raw.items())
        }
        PlacementRequest(app=app, demand=demand).validate_against(graph)
    else:
        demand = plan.demand

    drained_node = None
    if alert.kind == "node_drain":
        drained_node = alert.payload["node"]
        if drained_node not in graph.nodes:
            raise UnknownNode(drained_node)
        graph.nodes[drained_node].drained = True

    ledger = _Ledger.from_graph(graph)
    mapping = plan.mapping.clone()
    sequence = _placement_sequence(app, policies)
    mapping.order = tuple(sequence)

    for ms_id in sequence:
        ms = app.microservices[ms_id]
        anchors_now = _anchor_demand(graph, app, policies, demand, ms_id, mapping.per_ms)
        existing = mapping.per_ms.setdefault(ms_id, {})
        for anchor in sorted(set(existing) | set(anchors_now)):
            ap = existing.get(anchor)
            displaced = 0
            if ap is not None and drained_node is not None:
                kept: list[tuple[str, int]] = []
                for node_id, k in ap.slots:
                    if node_id == drained_node:
                        displaced += k
                        ledger.give(node_id, ms.cpu_req * k, ms.mem_req * k)
                    else:
                        kept.append((node_id, k))
                ap.slots = kept
            if anchor in anchors_now:
                level, rps = anchors_now[anchor]
            else:
                level, rps = ap.level, Fraction(0)
            need = required_instances(rps, ms.capacity_rps) if rps > 0 else 0
            have = ap.total_instances if ap is not None else 0
            if need > have:
                domains = eligible_domains_for_anchor(policies, ms_id, anchor, graph)
                if not domains:
                    raise InfeasiblePlacement(ms_id, anchor, "policy-empty scope", mapping.slots_view())
                prefer = graph.nodes[drained_node].domain_id if displaced > 0 else None
                node_ids = _ordered_nodes(graph, domains, ledger, prefer_domain=prefer)
                slots, shortfall = _first_fit(node_ids, ms.cpu_req, ms.mem_req, need - have, ledger)
                if slots is None:
                    raise InfeasiblePlacement(
                        ms_id, anchor,
                        f"insufficient capacity ({shortfall} instance(s) short)",
                        mapping.slots_view(),
                    )
                for node_id, k in slots:
                    ledger.take(node_id, ms.cpu_req * k, ms.mem_req * k)
                if ap is None:
                    ap = AnchorPlacement(anchor, level, rps, [])
                    existing[anchor] = ap
                ap.slots.extend(slots)
            elif need < have:
                excess = have - need
                while excess > 0 and ap.slots:
                    node_id, k = ap.slots[-1]
                    drop = min(k, excess)
                    ledger.give(node_id, ms.cpu_req * drop, ms.mem_req * drop)
                    if drop == k:
                        ap.slots.pop()
                    else:
                        ap.slots[-1] = (node_id, k - drop)
                    excess -= drop
            if ap is not None:
                ap.level = level
                ap.demand_rps = rps
                if not ap.slots and need == 0:
                    del existing[anchor]
        if not existing:
            mapping.per_ms.pop(ms_id, None)

    ledger.commit(graph)
    routes = generate_routes(graph, app, mapping, policies)
    new_plan = DeploymentPlan(
        app_id=plan.app_id,
        revision=plan.revision + 1,
        mapping=mapping,
        routes=routes,
        demand=demand,
    )
    report = validate_plan(graph, app, policies, new_plan)
    if not report.ok:
        first = report.violations[0]
        raise PlanningError(f"replan produced a non-compliant plan: {first.detail}")
    return new_plan


class ControlPlane:
    """Binds one application and policy set to an infrastructure graph."""

    def __init__(self, graph: InfrastructureGraph, app: ApplicationDag, policies: PolicySet):
        self.graph = graph
        self.app = app
        self.policies = policies

    def place(self, request: PlacementRequest) -> DeploymentPlan:
        return place_application(self.graph, self.app, request, self.policies)

    def handle_alert(self, plan: DeploymentPlan, alert: Alert) -> DeploymentPlan:
        return handle_alert(self.graph, self.app, self.policies, plan, alert)
