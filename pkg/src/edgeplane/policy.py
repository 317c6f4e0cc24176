"""Declarative policy engine: placement restrictions and locality levels.

Three policy types steer the control plane:

* placement restrictions allow- or deny-list domains per microservice,
* IoT locality pins how far an ingress microservice may sit from the domain
  a device group connects through,
* service-to-service locality pins how far a consumed microservice may sit
  from its consumer, per DAG edge.

Unlisted microservices are unrestricted and unlisted locality keys fall back
to the policy set's default level, so queries always resolve.  Trust between
administrative domains is expressed purely through this policy data (an
allow-list naming another admin's domain), never as a topology attribute.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import (
    DuplicateRule,
    MissingAnchor,
    NonEdgeMsRule,
    NonIngressIotRule,
    PolicyError,
    UnknownDomain,
    UnknownMicroservice,
    UnknownPolicyType,
)
from .locality import DEFAULT_LOCALITY, LocalityLevel

POLICY_TYPES = ("placement_restriction", "iot_locality", "ms_locality")

#: get_data marker for microservices with no placement restriction rule.
UNRESTRICTED = "unrestricted"


@dataclass(frozen=True)
class RestrictionRule:
    mode: str  # "allow" | "deny"
    domains: frozenset[str]


@dataclass(frozen=True)
class PolicyDecision:
    allowed: bool
    reason: str


@dataclass
class PolicySet:
    """Parsed policies plus the universe they are validated against."""

    app_id: str
    restriction: dict[str, RestrictionRule]
    iot_locality: dict[str, LocalityLevel]
    ms_locality: dict[tuple[str, str], LocalityLevel]
    default_locality: LocalityLevel
    ms_ids: frozenset[str]
    ingress_ids: frozenset[str]
    edge_pairs: frozenset[tuple[str, str]]
    domain_ids: frozenset[str]

    def iot_level(self, ms_id: str) -> LocalityLevel:
        return self.iot_locality.get(ms_id, self.default_locality)

    def edge_level(self, consumer: str, consumed: str) -> LocalityLevel:
        return self.ms_locality.get((consumer, consumed), self.default_locality)


def parse_policies(doc: dict, app, graph) -> PolicySet:
    """Validate the policy fragment against the application and topology.

    Raises:
        UnknownMicroservice / UnknownDomain: a rule references an id that
            does not exist.
        DuplicateRule: two rules share a key.
        NonIngressIotRule: an IoT locality rule targets a non-ingress
            microservice.
        NonEdgeMsRule: a service locality rule names a pair that is not an
            application DAG edge.
    """
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise PolicyError("policies fragment must be a mapping")
    unknown = set(doc) - {*POLICY_TYPES, "default_locality"}
    if unknown:
        raise UnknownPolicyType(sorted(unknown)[0])

    ms_ids = frozenset(app.microservices)
    domain_ids = frozenset(graph.domains)
    edge_pairs = frozenset((e.from_ms, e.to_ms) for e in app.edges)

    def known_ms(ms_id) -> str:
        if ms_id not in ms_ids:
            raise UnknownMicroservice(str(ms_id))
        return ms_id

    restriction: dict[str, RestrictionRule] = {}
    for entry in doc.get("placement_restriction") or []:
        ms_id = known_ms(entry.get("microservice"))
        if ms_id in restriction:
            raise DuplicateRule(f"placement_restriction for {ms_id!r}")
        mode = entry.get("mode")
        if mode not in ("allow", "deny"):
            raise PolicyError(f"restriction mode must be allow or deny, got {mode!r}")
        domains = entry.get("domains") or []
        for domain in domains:
            if domain not in domain_ids:
                raise UnknownDomain(str(domain))
        restriction[ms_id] = RestrictionRule(mode=mode, domains=frozenset(domains))

    iot_locality: dict[str, LocalityLevel] = {}
    for entry in doc.get("iot_locality") or []:
        ms_id = known_ms(entry.get("microservice"))
        if ms_id not in app.ingress_ids:
            raise NonIngressIotRule(ms_id)
        if ms_id in iot_locality:
            raise DuplicateRule(f"iot_locality for {ms_id!r}")
        iot_locality[ms_id] = LocalityLevel.parse(entry.get("level"))

    ms_locality: dict[tuple[str, str], LocalityLevel] = {}
    for entry in doc.get("ms_locality") or []:
        pair = (known_ms(entry.get("consumer")), known_ms(entry.get("consumed")))
        if pair not in edge_pairs:
            raise NonEdgeMsRule(f"{pair[0]}->{pair[1]} is not an application edge")
        if pair in ms_locality:
            raise DuplicateRule(f"ms_locality for {pair[0]}->{pair[1]}")
        ms_locality[pair] = LocalityLevel.parse(entry.get("level"))

    default = doc.get("default_locality")
    default_level = DEFAULT_LOCALITY if default is None else LocalityLevel.parse(default)

    return PolicySet(
        app_id=app.id,
        restriction=restriction,
        iot_locality=iot_locality,
        ms_locality=ms_locality,
        default_locality=default_level,
        ms_ids=ms_ids,
        ingress_ids=frozenset(app.ingress_ids),
        edge_pairs=edge_pairs,
        domain_ids=domain_ids,
    )


def get_data(pset: PolicySet, policy_type: str, key) -> object:
    """Raw policy lookup mirroring the wire API's data endpoint.

    Unlisted keys return the type's default rather than failing, so callers
    can always resolve a value.
    """
    if policy_type == "placement_restriction":
        rule = pset.restriction.get(key)
        if rule is None:
            return UNRESTRICTED
        return {"mode": rule.mode, "domains": sorted(rule.domains)}
    if policy_type == "iot_locality":
        return pset.iot_level(key).wire_name
    if policy_type == "ms_locality":
        if not isinstance(key, (tuple, list)) or len(key) != 2:
            raise UnknownPolicyType(f"ms_locality key must be (consumer, consumed), got {key!r}")
        return pset.edge_level(key[0], key[1]).wire_name
    raise UnknownPolicyType(policy_type)


def is_allowed(pset: PolicySet, ms_id: str, domain_id: str) -> PolicyDecision:
    """Evaluate the placement restriction policy for one (microservice, domain)."""
    if ms_id not in pset.ms_ids:
        raise UnknownMicroservice(ms_id)
    if domain_id not in pset.domain_ids:
        raise UnknownDomain(domain_id)
    rule = pset.restriction.get(ms_id)
    if rule is None:
        return PolicyDecision(True, f"unrestricted: no placement rule for {ms_id}")
    listed = domain_id in rule.domains
    if rule.mode == "allow":
        if listed:
            return PolicyDecision(True, f"restriction: {ms_id} allow-list includes {domain_id}")
        return PolicyDecision(False, f"restriction: {ms_id} allow-list excludes {domain_id}")
    if listed:
        return PolicyDecision(False, f"restriction: {ms_id} deny-list includes {domain_id}")
    return PolicyDecision(True, f"restriction: {ms_id} deny-list excludes {domain_id}")


def batch_evaluate(pset: PolicySet, queries: Sequence[tuple[str, str]]) -> list[PolicyDecision]:
    """Evaluate many restriction queries; order-preserving, first invalid aborts.

    Evaluation is pure and side-effect free, so issuing the queries
    concurrently cannot change the result; this sequential form is the
    reference semantics.
    """
    return [is_allowed(pset, ms_id, domain_id) for ms_id, domain_id in queries]


def eligible_domains(
    pset: PolicySet,
    ms_id: str,
    anchor_domain: str | None,
    locality: LocalityLevel,
    graph,
) -> list[str]:
    """Domains where ``ms_id`` may be placed for a scope anchored at ``anchor_domain``.

    The locality scope is intersected with the placement restriction policy.
    Global scopes take no anchor; domain- and region-scoped queries require one.
    """
    if locality is LocalityLevel.GLOBAL:
        scope: Iterable[str] = sorted(graph.domains)
    else:
        if anchor_domain is None:
            raise MissingAnchor(f"{locality.value} scope for {ms_id!r} needs an anchor domain")
        scope = graph.scope_domains(anchor_domain, locality)
    return [d for d in scope if is_allowed(pset, ms_id, d).allowed]


def eligible_domains_for_anchor(pset: PolicySet, ms_id: str, anchor: str, graph) -> list[str]:
    """Like :func:`eligible_domains` but keyed by a resolved anchor.

    The anchor is a domain id, a region id, or the pooled ``"global"`` key,
    as produced by demand propagation.
    """
    from .topology import GLOBAL_ANCHOR

    if anchor == GLOBAL_ANCHOR:
        scope: Iterable[str] = sorted(graph.domains)
    elif anchor in graph.regions:
        scope = graph.domains_in_region(anchor)
    elif anchor in graph.domains:
        scope = [anchor]
    else:
        raise UnknownDomain(anchor)
    return [d for d in scope if is_allowed(pset, ms_id, d).allowed]


def per_ms_locality(pset: PolicySet, app, graph):
    """Resolver for static demand propagation.

    Ingress microservices take their IoT locality level; every other
    microservice takes the strictest level across its incoming consumer
    edges.  The returned anchor function only coarsens: domain -> region ->
    global, leaving already-coarse source anchors untouched.
    """
    from .topology import GLOBAL_ANCHOR

    def resolve(ms_id: str):
        if ms_id not in app.microservices:
            raise UnknownMicroservice(ms_id)
        if ms_id in app.ingress_ids:
            level = pset.iot_level(ms_id)
        else:
            incoming = [
                pset.edge_level(e.from_ms, e.to_ms)
                for e in app.predecessors(ms_id)
                if not app.microservices[e.from_ms].placed_on_iot
            ]
            level = min(incoming, key=lambda l: l.strictness) if incoming else pset.default_locality

        def anchor_of(source_anchor: str) -> str:
            if level is LocalityLevel.GLOBAL:
                return GLOBAL_ANCHOR
            if level is LocalityLevel.STRICT_REGION:
                if source_anchor in graph.domains:
                    return graph.domains[source_anchor].region_id
                return source_anchor  # already region-level or coarser
            return source_anchor  # strict-domain keeps whatever granularity exists

        return level, anchor_of

    return resolve


def evaluate_query(pset: PolicySet, graph, policy: str, payload: dict) -> PolicyDecision:
    """Single-query evaluation backing the wire API's evaluate endpoint.

    Restriction queries check a (microservice, domain) pair; locality queries
    check whether a candidate target domain lies inside the scope anchored at
    the source domain for the applicable level.
    """
    def field(name: str) -> str:
        value = payload.get(name)
        if not isinstance(value, str) or not value:
            raise PolicyError(f"evaluate input field {name!r} missing or not a string")
        return value

    def known_domain(domain_id: str) -> str:
        if domain_id not in pset.domain_ids:
            raise UnknownDomain(domain_id)
        return domain_id

    if policy == "placement_restriction":
        return is_allowed(pset, field("microservice"), field("domain"))

    if policy == "iot_locality":
        ms_id = field("microservice")
        if ms_id not in pset.ms_ids:
            raise UnknownMicroservice(ms_id)
        device_domain = known_domain(field("device_domain"))
        target = known_domain(field("target_domain"))
        level = pset.iot_level(ms_id)
        inside = target in graph.scope_domains(device_domain, level)
        relation = "within" if inside else "outside"
        return PolicyDecision(
            inside,
            f"iot-locality: {target} {relation} {level.wire_name} scope of {device_domain} for {ms_id}",
        )

    if policy == "ms_locality":
        consumer, consumed = field("consumer"), field("consumed")
        for ms_id in (consumer, consumed):
            if ms_id not in pset.ms_ids:
                raise UnknownMicroservice(ms_id)
        consumer_domain = known_domain(field("consumer_domain"))
        target = known_domain(field("target_domain"))
        level = pset.edge_level(consumer, consumed)
        inside = target in graph.scope_domains(consumer_domain, level)
        relation = "within" if inside else "outside"
        return PolicyDecision(
            inside,
            f"ms-locality: {target} {relation} {level.wire_name} scope of {consumer_domain} "
            f"for {consumer}->{consumed}",
        )

    raise UnknownPolicyType(policy)
