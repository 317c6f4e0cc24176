"""Serialization of plans, routing exports and simulation reports.

Documents are plain dicts of YAML/JSON-safe values.  Exact Fraction rates
are rendered as ints when integral and floats otherwise, and every list is
emitted in a deterministic order so repeated runs produce identical bytes.
"""

from __future__ import annotations

import json
from fractions import Fraction

import yaml

from .appmodel import ApplicationDag, as_rate, rate_to_number
from .controlplane import (
    AnchorPlacement,
    ComplianceReport,
    DeploymentPlan,
    PlacementMapping,
    RoutingRule,
    RoutingRuleSet,
)
from .errors import ScenarioParseError
from .locality import LocalityLevel
from .meshsim import SimulationReport
from .topology import InfrastructureGraph


def _plain(value):
    """Recursively convert Fractions so yaml/json can emit the value."""
    if isinstance(value, Fraction):
        return rate_to_number(value)
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def plan_to_doc(plan: DeploymentPlan, compliance: ComplianceReport | None = None) -> dict:
    placements = []
    for ms_id in plan.mapping.microservice_ids():
        for anchor in sorted(plan.mapping.per_ms[ms_id]):
            ap = plan.mapping.per_ms[ms_id][anchor]
            placements.append({
                "microservice": ms_id,
                "anchor": anchor,
                "level": ap.level.value,
                "demand_rps": rate_to_number(ap.demand_rps),
                "nodes": [{"node": n, "instances": k} for n, k in ap.slots],
            })
    routes = [
        {
            "domain": rule.domain_id,
            "consumer": rule.consumer,
            "target": rule.target_ms,
            "level": rule.level.value,
            "destinations": [{"node": n, "weight": w} for n, w in rule.destinations],
        }
        for rule in plan.routes.rules
    ]
    doc = {
        "application": plan.app_id,
        "revision": plan.revision,
        "demand": {
            domain: {ms: rate_to_number(rps) for ms, rps in sorted(per.items())}
            for domain, per in sorted(plan.demand.items())
        },
        "placements": placements,
        "routes": routes,
    }
    if compliance is not None:
        doc["compliance"] = {
            "ok": compliance.ok,
            **compliance.to_doc(),
        }
    return doc


def plan_from_doc(doc: dict) -> DeploymentPlan:
    """Rebuild a plan from its document form (compliance section is ignored).

    Slot order inside each placement entry is preserved, so scale-down after
    a round trip still removes the newest instances first.
    """
    if not isinstance(doc, dict):
        raise ScenarioParseError("plan document must be a mapping")
    try:
        per_ms: dict[str, dict[str, AnchorPlacement]] = {}
        order: list[str] = []
        for entry in doc.get("placements", []):
            ms_id = entry["microservice"]
            if ms_id not in order:
                order.append(ms_id)
            anchors = per_ms.setdefault(ms_id, {})
            anchors[entry["anchor"]] = AnchorPlacement(
                anchor=entry["anchor"],
                level=LocalityLevel(entry["level"]),
                demand_rps=as_rate(entry["demand_rps"]),
                slots=[(n["node"], int(n["instances"])) for n in entry["nodes"]],
            )
        rules = tuple(
            RoutingRule(
                domain_id=entry["domain"],
                consumer=entry["consumer"],
                target_ms=entry["target"],
                level=LocalityLevel(entry["level"]),
                destinations=tuple((d["node"], int(d["weight"])) for d in entry["destinations"]),
            )
            for entry in doc.get("routes", [])
        )
        demand = {
            str(domain): {str(ms): as_rate(rps) for ms, rps in per.items()}
            for domain, per in doc.get("demand", {}).items()
        }
        return DeploymentPlan(
            app_id=str(doc["application"]),
            revision=int(doc["revision"]),
            mapping=PlacementMapping(per_ms=per_ms, order=tuple(order)),
            routes=RoutingRuleSet(rules),
            demand=demand,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioParseError(f"malformed plan document: {exc}") from exc


def routes_docs(graph: InfrastructureGraph, plan: DeploymentPlan) -> list[dict]:
    """One mesh-config document per domain, virtual-service style.

    Every domain gets a document (possibly with no services) so exporting a
    plan always yields the same file set for a given topology.
    """
    docs = []
    for domain_id in sorted(graph.domains):
        rules = plan.routes.for_domain(domain_id)
        by_target: dict[str, list[RoutingRule]] = {}
        for rule in rules:
            by_target.setdefault(rule.target_ms, []).append(rule)
        services = []
        for target_ms in sorted(by_target):
            entries = sorted(by_target[target_ms], key=lambda r: r.consumer)
            services.append({
                "host": target_ms,
                "routes": [
                    {
                        "source": rule.consumer,
                        "level": rule.level.value,
                        "destinations": [
                            {"node": n, "weight": w} for n, w in rule.destinations
                        ],
                    }
                    for rule in entries
                ],
            })
        docs.append({"domain": domain_id, "virtual_services": services})
    return docs


def report_to_doc(report: SimulationReport) -> dict:
    doc = {
        "ticks": report.ticks,
        "final_revision": report.final_revision,
        "flows": report.flows.table(),
        "violations": [
            {"tick": tick, "kind": v.kind, "subject": v.subject, "detail": v.detail}
            for tick, v in report.violations
        ],
        "throughput": _plain(report.throughput),
        "alerts": [
            {"tick": a.tick, "kind": a.kind, "payload": _plain(a.payload)}
            for a in report.alerts
        ],
        "halted": report.halted,
    }
    return doc


def dump_doc(doc, fmt: str = "yaml") -> str:
    if fmt == "json":
        return json.dumps(doc, indent=2) + "\n"
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def dump_docs(docs: list, fmt: str = "yaml") -> str:
    if fmt == "json":
        return json.dumps(docs, indent=2) + "\n"
    return yaml.safe_dump_all(docs, sort_keys=False, default_flow_style=False)
