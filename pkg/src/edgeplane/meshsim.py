"""Deterministic service-mesh simulator over a deployment plan.

Traffic flows are computed exactly (Fraction arithmetic) by walking the
application DAG in topological order: ingress demand enters at each IoT
attachment domain, each routing rule splits its load proportionally to
destination weights, and every microservice forwards its served load along
outgoing edges scaled by the edge's rate ratio.

Compliance checking re-derives restriction and locality scopes from the
policy data rather than trusting the routing rules, so a bad rule shows up
as a violation instead of being rationalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .appmodel import ApplicationDag, PlacementRequest, rate_to_number
from .controlplane import (
    IOT_SOURCE,
    Alert,
    ControlPlane,
    DeploymentPlan,
    Violation,
)
from .errors import InfeasiblePlacement, MissingRoute
from .locality import LocalityLevel
from .policy import PolicySet
from .topology import InfrastructureGraph


@dataclass
class FlowAssignment:
    """Exact traffic rows keyed by (source domain, source, target node, target ms).

    ``source`` is a microservice id, or "iot" for device-group ingress.
    """

    rows: dict[tuple[str, str, str, str], Fraction] = field(default_factory=dict)

    def add(self, source_domain: str, source: str, node_id: str, target_ms: str, rps: Fraction):
        key = (source_domain, source, node_id, target_ms)
        self.rows[key] = self.rows.get(key, Fraction(0)) + rps

    def served_by_node(self) -> dict[tuple[str, str], Fraction]:
        """Total rps served per (node, microservice)."""
        agg: dict[tuple[str, str], Fraction] = {}
        for (_, _, node_id, target_ms), rps in self.rows.items():
            key = (node_id, target_ms)
            agg[key] = agg.get(key, Fraction(0)) + rps
        return agg

    def incoming_per_domain(self, graph: InfrastructureGraph, target_ms: str) -> dict[str, Fraction]:
        """Load arriving at each domain's instances of ``target_ms``."""
        agg: dict[str, Fraction] = {}
        for (_, _, node_id, ms), rps in self.rows.items():
            if ms != target_ms:
                continue
            domain_id = graph.nodes[node_id].domain_id
            agg[domain_id] = agg.get(domain_id, Fraction(0)) + rps
        return agg

    def total(self) -> Fraction:
        return sum(self.rows.values(), Fraction(0))

    def table(self) -> list[dict]:
        out = []
        for key in sorted(self.rows):
            source_domain, source, node_id, target_ms = key
            out.append({
                "source_domain": source_domain,
                "source": source,
                "node": node_id,
                "microservice": target_ms,
                "rps": rate_to_number(self.rows[key]),
            })
        return out


@dataclass(frozen=True)
class MetricSample:
    tick: int
    node_id: str
    cpu_utilization: float
    served: dict


@dataclass(frozen=True)
class ScenarioEvent:
    kind: str  # "set_demand" | "drain_node"
    tick: int
    domain: str | None = None
    microservice: str | None = None
    rps: Fraction | None = None
    node: str | None = None


@dataclass
class SimulationReport:
    flows: FlowAssignment
    violations: list[tuple[int, Violation]]
    throughput: list[dict]
    alerts: list[Alert]
    samples: list[MetricSample]
    final_revision: int
    ticks: int
    halted: dict | None = None


def route_flows(
    graph: InfrastructureGraph,
    app: ApplicationDag,
    plan: DeploymentPlan,
    demand: dict[str, dict[str, Fraction]],
) -> FlowAssignment:
    """Propagate offered demand through the routing rules.

    Raises MissingRoute when positive traffic has no rule to follow; edges
    with a zero rate ratio forward nothing and need no rule.
    """
    flows = FlowAssignment()

    for domain_id in sorted(demand):
        for ms_id in sorted(demand[domain_id]):
            rps = demand[domain_id][ms_id]
            if rps <= 0:
                continue
            rule = plan.routes.lookup(domain_id, IOT_SOURCE, ms_id)
            if rule is None:
                raise MissingRoute(f"no ingress route for {ms_id} from {domain_id}")
            _split(flows, rule, domain_id, IOT_SOURCE, ms_id, rps)

    for ms_id in app.topological_order():
        if app.microservices[ms_id].placed_on_iot:
            continue
        outgoing = app.successors(ms_id)
        if not outgoing:
            continue
        emitted = flows.incoming_per_domain(graph, ms_id)
        for edge in sorted(outgoing, key=lambda e: e.to_ms):
            for domain_id in sorted(emitted):
                rps = emitted[domain_id] * edge.rate_ratio
                if rps <= 0:
                    continue
                rule = plan.routes.lookup(domain_id, ms_id, edge.to_ms)
                if rule is None:
                    raise MissingRoute(
                        f"no route for {ms_id}->{edge.to_ms} from {domain_id}"
                    )
                _split(flows, rule, domain_id, ms_id, edge.to_ms, rps)

    return flows


def _split(flows: FlowAssignment, rule, source_domain: str, source: str, target_ms: str, rps: Fraction):
    total_weight = sum(w for _, w in rule.destinations)
    if total_weight <= 0:
        raise MissingRoute(f"route {source_domain}/{source}->{target_ms} has no usable weights")
    for node_id, weight in rule.destinations:
        share = rps * Fraction(weight, total_weight)
        if share > 0:
            flows.add(source_domain, source, node_id, target_ms, share)


def utilization(served: dict[str, Fraction], app: ApplicationDag, node) -> Fraction:
    """Cpu utilization of a node given served rps per microservice.

    Each instance is sized for its rated capacity, so serving one rps costs
    cpu_req/capacity_rps millicores regardless of how many instances share
    the load.
    """
    used = Fraction(0)
    for ms_id, rps in served.items():
        ms = app.microservices[ms_id]
        used += rps * Fraction(ms.cpu_req) / ms.capacity_rps
    return used / node.cpu_capacity


def check_compliance(
    graph: InfrastructureGraph,
    policies: PolicySet,
    flows: FlowAssignment,
) -> list[Violation]:
    """Audit realized flows against restriction and locality policies.

    Scopes are recomputed from the policy data per flow row; the routing
    rules that produced the flows are not consulted.
    """
    violations: list[Violation] = []
    for key in sorted(flows.rows):
        source_domain, source, node_id, target_ms = key
        if flows.rows[key] <= 0:
            continue
        target_domain = graph.nodes[node_id].domain_id

        rule = policies.restriction.get(target_ms)
        if rule is not None:
            allowed = (target_domain in rule.domains) if rule.mode == "allow" \
                else (target_domain not in rule.domains)
            if not allowed:
                violations.append(Violation(
                    "placement", f"{target_ms}@{node_id}",
                    f"flow served in {target_domain}, forbidden by placement restriction",
                ))

        if source == IOT_SOURCE:
            level = policies.iot_level(target_ms)
        else:
            level = policies.edge_level(source, target_ms)
        if level is LocalityLevel.STRICT_DOMAIN:
            ok = target_domain == source_domain
        elif level is LocalityLevel.STRICT_REGION:
            ok = graph.domains[target_domain].region_id == graph.domains[source_domain].region_id
        else:
            ok = True
        if not ok:
            violations.append(Violation(
                "locality", f"{source_domain}/{source}->{target_ms}",
                f"flow crosses into {target_domain}, outside the {level.value} "
                f"scope of {source_domain}",
            ))
    return violations


def _node_samples(
    graph: InfrastructureGraph,
    app: ApplicationDag,
    flows: FlowAssignment,
    tick: int,
) -> list[MetricSample]:
    per_node: dict[str, dict[str, Fraction]] = {}
    for (node_id, ms_id), rps in flows.served_by_node().items():
        per_node.setdefault(node_id, {})[ms_id] = rps
    samples = []
    for node_id in sorted(graph.nodes):
        served = per_node.get(node_id, {})
        util = utilization(served, app, graph.nodes[node_id]) if served else Fraction(0)
        samples.append(MetricSample(
            tick=tick,
            node_id=node_id,
            cpu_utilization=float(util),
            served={ms: rate_to_number(rps) for ms, rps in sorted(served.items())},
        ))
    return samples


def _throughput_summary(
    graph: InfrastructureGraph,
    app: ApplicationDag,
    plan: DeploymentPlan,
) -> list[dict]:
    """Per (microservice, anchor) demand versus provisioned capacity."""
    out = []
    for ms_id in plan.mapping.microservice_ids():
        ms = app.microservices[ms_id]
        for anchor, ap in sorted(plan.mapping.per_ms[ms_id].items()):
            capacity = ap.total_instances * ms.capacity_rps
            satisfied = ap.demand_rps <= capacity
            out.append({
                "microservice": ms_id,
                "anchor": anchor,
                "level": ap.level.value,
                "demand_rps": rate_to_number(ap.demand_rps),
                "capacity_rps": rate_to_number(capacity),
                "satisfied": satisfied,
            })
    return out


def run_scenario(
    graph: InfrastructureGraph,
    app: ApplicationDag,
    policies: PolicySet,
    request: PlacementRequest,
    events: list[ScenarioEvent],
    control: ControlPlane | None = None,
    *,
    overload_threshold: float = 0.8,
) -> tuple[DeploymentPlan, SimulationReport]:
    """Closed-loop run: place, then tick through events with replans.

    Each tick applies that tick's events (emitting one alert per event),
    lets the control plane handle the alerts, routes flows, samples node
    metrics, and audits compliance.  When no event fired and some node
    exceeds the overload threshold, a single overload alert (worst node,
    id tie-break) triggers a replan whose flows are re-routed in place.
    An infeasible replan halts the loop with the failure recorded.
    """
    control = control or ControlPlane(graph, app, policies)
    plan = control.place(request)
    demand = {d: dict(per) for d, per in plan.demand.items()}
    threshold = Fraction(str(overload_threshold))

    by_tick: dict[int, list[ScenarioEvent]] = {}
    for event in events:
        by_tick.setdefault(event.tick, []).append(event)
    ticks = (max(by_tick) + 1) if by_tick else 1

    alerts: list[Alert] = []
    samples: list[MetricSample] = []
    violations: list[tuple[int, Violation]] = []
    flows = FlowAssignment()
    halted: dict | None = None

    for tick in range(ticks):
        event_alerts: list[Alert] = []
        for event in by_tick.get(tick, []):
            if event.kind == "set_demand":
                demand.setdefault(event.domain, {})[event.microservice] = event.rps
                payload = {"demand": {d: dict(per) for d, per in demand.items()}}
                event_alerts.append(Alert("demand_change", payload, tick))
            elif event.kind == "drain_node":
                event_alerts.append(Alert("node_drain", {"node": event.node}, tick))

        try:
            for alert in event_alerts:
                alerts.append(alert)
                plan = control.handle_alert(plan, alert)
            flows = route_flows(graph, app, plan, demand)
        except InfeasiblePlacement as exc:
            halted = {"tick": tick, "reason": str(exc)}
            break

        tick_samples = _node_samples(graph, app, flows, tick)
        samples.extend(tick_samples)
        for violation in check_compliance(graph, policies, flows):
            violations.append((tick, violation))

        if not event_alerts:
            worst = min(
                tick_samples,
                key=lambda s: (-s.cpu_utilization, s.node_id),
                default=None,
            )
            if worst is not None and Fraction(str(worst.cpu_utilization)) > threshold:
                alert = Alert(
                    "overload",
                    {"node": worst.node_id, "utilization": worst.cpu_utilization},
                    tick,
                )
                alerts.append(alert)
                try:
                    plan = control.handle_alert(plan, alert)
                    flows = route_flows(graph, app, plan, demand)
                except InfeasiblePlacement as exc:
                    halted = {"tick": tick, "reason": str(exc)}
                    break

    report = SimulationReport(
        flows=flows,
        violations=violations,
        throughput=_throughput_summary(graph, app, plan),
        alerts=alerts,
        samples=samples,
        final_revision=plan.revision,
        ticks=ticks,
        halted=halted,
    )
    return plan, report
