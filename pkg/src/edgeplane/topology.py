"""Infrastructure model: regions containing domains containing compute nodes.

Domains are the unit of administrative control and the anchor for locality
scopes; IoT attachment points bind device groups to the domain their traffic
enters through.  The graph is built once from a document and treated as
immutable afterwards, except for node free-capacity bookkeeping (and drain
flags), which only the control plane mutates inside a planning transaction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    DanglingReference,
    DuplicateId,
    EmptyTopology,
    InvalidTopology,
    UnknownDomain,
    UnknownNode,
)
from .locality import LocalityLevel

DOMAIN_KINDS = ("edge", "cloud")

# Reserved anchor key for globally pooled demand; no topology entity may use it.
GLOBAL_ANCHOR = "global"


@dataclass(frozen=True)
class Region:
    """A geographic region grouping one or more domains."""

    id: str
    domain_ids: tuple[str, ...]


@dataclass(frozen=True)
class Domain:
    """An administrative domain (one cluster) inside a region."""

    id: str
    region_id: str
    admin_id: str
    kind: str  # "edge" | "cloud"


@dataclass
class ComputeNode:
    """A schedulable node. Capacities in cpu millicores and memory MiB.

    ``cpu_free``/``mem_free`` start at capacity and are decremented by the
    control plane as instances are assigned.  A drained node keeps its stated
    capacity but is never eligible for new assignments.
    """

    id: str
    domain_id: str
    cpu_capacity: int
    mem_capacity: int
    cpu_free: int = field(default=-1)
    mem_free: int = field(default=-1)
    drained: bool = False

    def __post_init__(self):
        if self.cpu_capacity <= 0 or self.mem_capacity <= 0:
            raise InvalidTopology(f"node {self.id!r} must have positive cpu and memory capacity")
        if self.cpu_free < 0:
            self.cpu_free = self.cpu_capacity
        if self.mem_free < 0:
            self.mem_free = self.mem_capacity


@dataclass(frozen=True)
class IoTAttachment:
    """A device group attached to the domain its traffic enters through."""

    device_group_id: str
    domain_id: str


@dataclass
class InfrastructureGraph:
    regions: dict[str, Region]
    domains: dict[str, Domain]
    nodes: dict[str, ComputeNode]
    attachments: dict[str, IoTAttachment]

    def region_of_domain(self, domain_id: str) -> str:
        if domain_id not in self.domains:
            raise UnknownDomain(domain_id)
        return self.domains[domain_id].region_id

    def domains_in_region(self, region_id: str) -> list[str]:
        return sorted(self.regions[region_id].domain_ids)

    def nodes_of_domain(self, domain_id: str) -> list[ComputeNode]:
        if domain_id not in self.domains:
            raise UnknownDomain(domain_id)
        return [self.nodes[n] for n in sorted(self.nodes) if self.nodes[n].domain_id == domain_id]

    def attachment_domains(self) -> list[str]:
        return sorted({a.domain_id for a in self.attachments.values()})

    def scope_domains(self, anchor_domain: str, scope: LocalityLevel) -> list[str]:
        """Domains reachable from ``anchor_domain`` under the given locality scope."""
        if scope is LocalityLevel.GLOBAL:
            return sorted(self.domains)
        if anchor_domain not in self.domains:
            raise UnknownDomain(anchor_domain)
        if scope is LocalityLevel.STRICT_DOMAIN:
            return [anchor_domain]
        return self.domains_in_region(self.domains[anchor_domain].region_id)


def _require(condition: bool, error: Exception):
    if not condition:
        raise error


def _ident(value, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise InvalidTopology(f"{what} id must be a non-empty string, got {value!r}")
    if value == GLOBAL_ANCHOR:
        raise InvalidTopology(f"{what} id {value!r} is reserved")
    return value


def _capacity(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidTopology(f"{what} must be an integer, got {value!r}")
    return value


def load_topology(doc: dict) -> InfrastructureGraph:
    """Build and validate an :class:`InfrastructureGraph` from a document.

    Raises:
        EmptyTopology: no domains, or a region listing none.
        DuplicateId: an id reused anywhere across regions, domains, nodes
            and attachments (one id namespace, to keep anchors unambiguous).
        DanglingReference: a reference to a missing region or domain, or a
            region/domain membership mismatch.
        InvalidTopology: malformed values (bad kind, non-positive capacity).
    """
    if not isinstance(doc, dict):
        raise InvalidTopology("topology fragment must be a mapping")

    seen: set[str] = set()

    def claim(ident: str, what: str) -> str:
        if ident in seen:
            raise DuplicateId(f"{what} id {ident!r} already used")
        seen.add(ident)
        return ident

    regions: dict[str, Region] = {}
    for entry in doc.get("regions") or []:
        rid = claim(_ident(entry.get("id"), "region"), "region")
        domain_ids = tuple(entry.get("domains") or ())
        _require(len(domain_ids) > 0, EmptyTopology(f"region {rid!r} lists no domains"))
        regions[rid] = Region(rid, domain_ids)

    domains: dict[str, Domain] = {}
    for entry in sorted(doc.get("domains") or [], key=lambda e: str(e.get("id"))):
        did = claim(_ident(entry.get("id"), "domain"), "domain")
        kind = entry.get("kind")
        if kind not in DOMAIN_KINDS:
            raise InvalidTopology(f"domain {did!r} kind must be one of {DOMAIN_KINDS}, got {kind!r}")
        domains[did] = Domain(did, entry.get("region"), entry.get("admin"), kind)

    _require(len(domains) > 0, EmptyTopology("topology has no domains"))

    for domain in domains.values():
        if domain.region_id not in regions:
            raise DanglingReference(str(domain.region_id), f"region of domain {domain.id!r}")
        if domain.id not in regions[domain.region_id].domain_ids:
            raise DanglingReference(domain.id, f"not listed by region {domain.region_id!r}")
    for region in regions.values():
        for did in region.domain_ids:
            if did not in domains:
                raise DanglingReference(did, f"domain listed by region {region.id!r}")
            if domains[did].region_id != region.id:
                raise DanglingReference(did, f"domain claims region {domains[did].region_id!r}")

    nodes: dict[str, ComputeNode] = {}
    for entry in sorted(doc.get("nodes") or [], key=lambda e: str(e.get("id"))):
        nid = claim(_ident(entry.get("id"), "node"), "node")
        if entry.get("domain") not in domains:
            raise DanglingReference(str(entry.get("domain")), f"domain of node {nid!r}")
        nodes[nid] = ComputeNode(
            id=nid,
            domain_id=entry["domain"],
            cpu_capacity=_capacity(entry.get("cpu_m"), f"node {nid!r} cpu_m"),
            mem_capacity=_capacity(entry.get("mem_mi"), f"node {nid!r} mem_mi"),
        )

    attachments: dict[str, IoTAttachment] = {}
    for entry in sorted(doc.get("attachments") or [], key=lambda e: str(e.get("id"))):
        aid = claim(_ident(entry.get("id"), "attachment"), "attachment")
        if entry.get("domain") not in domains:
            raise DanglingReference(str(entry.get("domain")), f"domain of attachment {aid!r}")
        attachments[aid] = IoTAttachment(aid, entry["domain"])

    return InfrastructureGraph(regions=regions, domains=domains, nodes=nodes, attachments=attachments)


def domain_of_node(graph: InfrastructureGraph, node_id: str) -> str:
    if node_id not in graph.nodes:
        raise UnknownNode(node_id)
    return graph.nodes[node_id].domain_id


def nodes_in_scope(graph: InfrastructureGraph, anchor_domain: str, scope: LocalityLevel) -> list[str]:
    """Node ids inside the locality scope anchored at ``anchor_domain``.

    Ordered by (domain id, node id) so callers iterate deterministically.
    """
    domains = graph.scope_domains(anchor_domain, scope)
    return [
        node.id
        for domain_id in domains
        for node in graph.nodes_of_domain(domain_id)
    ]
