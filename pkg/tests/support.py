"""Shared test helpers: scenario builders, random generators, oracles.

The oracles intentionally reimplement the semantics from the raw policy
documents with their own data structures (functional capacity maps, plain
recursion) so that a planner bug cannot hide inside a shared helper:

* ``oracle_eligible`` answers domain eligibility by brute force.
* ``oracle_feasible`` decides by exhaustive search whether any placement
  satisfying the per-anchor instance counts exists at all.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction
from pathlib import Path

from edgeplane.appmodel import PlacementRequest, app_from_doc, as_rate
from edgeplane.policy import parse_policies
from edgeplane.topology import load_topology

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
GOLDEN = Path(__file__).resolve().parent / "golden"

LEVELS = ("strict-domain", "strict-region", "global")
_STRICTNESS = {"strict-domain": 0, "strict-region": 1, "global": 2}


def build(topo_doc, app_doc, policy_doc, demand_doc):
    """Parse the four raw documents into model objects plus a request."""
    graph = load_topology(topo_doc)
    app = app_from_doc(app_doc)
    pset = parse_policies(policy_doc, app, graph)
    request = PlacementRequest(app=app, demand={
        str(d): {str(m): as_rate(r) for m, r in per.items()}
        for d, per in demand_doc.items()
    })
    request.validate_against(graph)
    return graph, app, pset, request


# --- random scenario generation ------------------------------------------------


def gen_topology(rng: random.Random, max_regions=3, max_domains_per_region=2,
                 max_nodes_per_domain=2, cpu_choices=(4000, 8000, 16000)):
    regions, domains, nodes = [], [], []
    for r in range(rng.randint(1, max_regions)):
        domain_ids = [f"d{r}{i}" for i in range(rng.randint(1, max_domains_per_region))]
        regions.append({"id": f"r{r}", "domains": domain_ids})
        for did in domain_ids:
            domains.append({
                "id": did, "region": f"r{r}", "admin": f"adm-{did}",
                "kind": rng.choice(["edge", "cloud"]),
            })
            for n in range(rng.randint(1, max_nodes_per_domain)):
                nodes.append({
                    "id": f"{did}-n{n}", "domain": did,
                    "cpu_m": rng.choice(cpu_choices),
                    "mem_mi": rng.choice([8192, 16384]),
                })
    domain_ids = [d["id"] for d in domains]
    attach = rng.sample(domain_ids, k=rng.randint(1, min(2, len(domain_ids))))
    attachments = [{"id": f"iot{i}", "domain": d} for i, d in enumerate(attach)]
    return ({"regions": regions, "domains": domains, "nodes": nodes,
             "attachments": attachments}, attach)


def gen_chain_app(rng: random.Random, max_ms=4, ratios=(0.5, 1, 1, 2)):
    """IoT source feeding a linear chain ms1 -> ... -> msN."""
    n = rng.randint(1, max_ms)
    microservices = [{"id": "ms0", "iot": True}]
    edges = []
    for i in range(1, n + 1):
        microservices.append({
            "id": f"ms{i}",
            "cpu_m": rng.choice([250, 500, 1000]),
            "mem_mi": rng.choice([256, 512]),
            "capacity_rps": rng.choice([25, 50, 100]),
        })
        edges.append({"from": f"ms{i-1}", "to": f"ms{i}",
                      "ratio": rng.choice(ratios)})
    return {"id": "fuzz-app", "microservices": microservices,
            "edges": edges, "ingress": ["ms1"]}


def gen_policies(rng: random.Random, app_doc, domain_ids, restrict_prob=0.4,
                 locality_prob=0.5):
    ms_ids = [m["id"] for m in app_doc["microservices"] if not m.get("iot")]
    ingress = app_doc["ingress"]
    doc = {
        "default_locality": rng.choice(LEVELS),
        "placement_restriction": [],
        "iot_locality": [
            {"microservice": m, "level": rng.choice(LEVELS)} for m in ingress
        ],
        "ms_locality": [],
    }
    if rng.random() < restrict_prob and len(domain_ids) > 1:
        victim = rng.choice(ms_ids)
        listed = rng.sample(domain_ids, k=rng.randint(1, len(domain_ids) - 1))
        doc["placement_restriction"].append({
            "microservice": victim,
            "mode": rng.choice(["allow", "deny"]),
            "domains": listed,
        })
    iot_ids = {m["id"] for m in app_doc["microservices"] if m.get("iot")}
    for edge in app_doc["edges"]:
        if edge["from"] in iot_ids:
            continue
        if rng.random() < locality_prob:
            doc["ms_locality"].append({
                "consumer": edge["from"], "consumed": edge["to"],
                "level": rng.choice(LEVELS),
            })
    return doc


def gen_case(rng: random.Random, demand_choices=(25, 50, 100)):
    """One full random scenario: returns the four raw documents."""
    topo_doc, attach = gen_topology(rng)
    app_doc = gen_chain_app(rng)
    policy_doc = gen_policies(rng, app_doc, [d["id"] for d in topo_doc["domains"]])
    demand_doc = {d: {m: rng.choice(demand_choices) for m in app_doc["ingress"]}
                  for d in attach}
    return topo_doc, app_doc, policy_doc, demand_doc


def gen_small_case(rng: random.Random):
    """Tiny scenario for exhaustive-oracle comparison: tight capacities so a
    healthy share of cases is genuinely infeasible."""
    topo_doc, attach = gen_topology(
        rng, max_regions=2, max_domains_per_region=2, max_nodes_per_domain=1,
        cpu_choices=(1000, 2000, 3000),
    )
    # cap at 3 domains / 4 nodes total
    while len(topo_doc["domains"]) > 3:
        dropped = topo_doc["domains"].pop()
        topo_doc["nodes"] = [n for n in topo_doc["nodes"] if n["domain"] != dropped["id"]]
        for region in topo_doc["regions"]:
            region["domains"] = [d for d in region["domains"] if d != dropped["id"]]
        topo_doc["regions"] = [r for r in topo_doc["regions"] if r["domains"]]
        topo_doc["attachments"] = [a for a in topo_doc["attachments"]
                                   if a["domain"] != dropped["id"]]
    if not topo_doc["attachments"]:
        topo_doc["attachments"] = [{"id": "iot0", "domain": topo_doc["domains"][0]["id"]}]
    attach = [a["domain"] for a in topo_doc["attachments"]]
    app_doc = gen_chain_app(rng, max_ms=3, ratios=(1, 1, 2))
    policy_doc = gen_policies(rng, app_doc,
                              [d["id"] for d in topo_doc["domains"]],
                              restrict_prob=0.5, locality_prob=0.6)
    demand_doc = {d: {m: rng.choice([25, 50, 75, 100]) for m in app_doc["ingress"]}
                  for d in attach}
    return topo_doc, app_doc, policy_doc, demand_doc


# --- oracles --------------------------------------------------------------------


def oracle_eligible(graph, policy_doc, ms_id, anchor_domain, level):
    """Brute-force eligible domains from the raw policy document."""
    restrictions = {
        r["microservice"]: (r["mode"], set(r["domains"]))
        for r in policy_doc.get("placement_restriction", [])
    }

    def allowed(domain_id):
        if ms_id not in restrictions:
            return True
        mode, listed = restrictions[ms_id]
        return domain_id in listed if mode == "allow" else domain_id not in listed

    def in_scope(domain_id):
        if level == "strict-domain":
            return domain_id == anchor_domain
        if level == "strict-region":
            return graph.domains[domain_id].region_id == graph.domains[anchor_domain].region_id
        return True

    return sorted(d for d in graph.domains if in_scope(d) and allowed(d))


def oracle_feasible(graph, app, policy_doc, demand) -> bool:
    """Exhaustive search: does ANY compliant placement exist?

    Independent implementation: levels and restrictions come from the raw
    policy document, capacity is tracked in immutable maps, and every way of
    splitting each anchor's instance count across eligible nodes is tried.
    Exponential, so only for tiny scenarios.
    """
    default_level = policy_doc.get("default_locality", "global")
    iot_levels = {r["microservice"]: r["level"]
                  for r in policy_doc.get("iot_locality", [])}
    edge_levels = {(r["consumer"], r["consumed"]): r["level"]
                   for r in policy_doc.get("ms_locality", [])}
    restrictions = {r["microservice"]: (r["mode"], set(r["domains"]))
                    for r in policy_doc.get("placement_restriction", [])}

    region_of = {d: dom.region_id for d, dom in graph.domains.items()}
    capacity = {n.id: (n.cpu_free, n.mem_free) for n in graph.nodes.values()}
    domain_of = {n.id: n.domain_id for n in graph.nodes.values()}
    usable = sorted(n.id for n in graph.nodes.values() if not n.drained)

    def allowed(ms_id, domain_id):
        if ms_id not in restrictions:
            return True
        mode, listed = restrictions[ms_id]
        return domain_id in listed if mode == "allow" else domain_id not in listed

    def anchor_of(domain_id, level):
        if level == "strict-domain":
            return domain_id
        if level == "strict-region":
            return region_of[domain_id]
        return "global"

    def anchor_domain_set(anchor, level):
        if level == "strict-domain":
            return [anchor]
        if level == "strict-region":
            return sorted(d for d in graph.domains if region_of[d] == anchor)
        return sorted(graph.domains)

    def ms_level(ms_id):
        if ms_id in app.ingress_ids:
            return iot_levels.get(ms_id, default_level)
        levels = [
            edge_levels.get((e.from_ms, e.to_ms), default_level)
            for e in app.predecessors(ms_id)
            if not app.microservices[e.from_ms].placed_on_iot
        ]
        if not levels:
            return default_level
        return min(levels, key=lambda lv: _STRICTNESS[lv])

    topo_rank = {ms: i for i, ms in enumerate(app.topological_order())}
    sequence = []
    done = {m for m, ms in app.microservices.items() if ms.placed_on_iot}
    todo = set(app.microservices) - done
    while todo:
        frontier = [m for m in todo
                    if all(e.from_ms in done for e in app.predecessors(m))]
        pick = min(frontier, key=lambda m: (_STRICTNESS[ms_level(m)], topo_rank[m], m))
        sequence.append(pick)
        done.add(pick)
        todo.remove(pick)

    def emissions(entries):
        out: dict[str, Fraction] = {}
        for _anchor, _level, rps, alloc in entries:
            total = sum(alloc.values())
            if total == 0 or rps <= 0:
                continue
            for node_id, k in alloc.items():
                d = domain_of[node_id]
                out[d] = out.get(d, Fraction(0)) + rps * Fraction(k, total)
        return out

    def anchors_for(ms_id, chosen):
        acc: dict[str, tuple[str, Fraction]] = {}

        def add(anchor, level, rps):
            if rps <= 0:
                return
            prev = acc.get(anchor, (level, Fraction(0)))[1]
            acc[anchor] = (level, prev + rps)

        if ms_id in app.ingress_ids:
            level = iot_levels.get(ms_id, default_level)
            for dom in sorted(demand):
                add(anchor_of(dom, level), level, demand[dom].get(ms_id, Fraction(0)))
        else:
            for edge in app.predecessors(ms_id):
                if app.microservices[edge.from_ms].placed_on_iot:
                    continue
                level = edge_levels.get((edge.from_ms, ms_id), default_level)
                for dom, rps in emissions(chosen[edge.from_ms]).items():
                    add(anchor_of(dom, level), level, rps * edge.rate_ratio)
        return sorted((a, lv, rp) for a, (lv, rp) in acc.items())

    def splits(node_ids, need, cpu_req, mem_req, used):
        def rec(i, remaining):
            if remaining == 0:
                yield {}
                return
            if i == len(node_ids):
                return
            node_id = node_ids[i]
            cpu_free = capacity[node_id][0] - used.get(node_id, (0, 0))[0]
            mem_free = capacity[node_id][1] - used.get(node_id, (0, 0))[1]
            fit = min(remaining, cpu_free // cpu_req, mem_free // mem_req)
            for k in range(fit, -1, -1):
                for rest in rec(i + 1, remaining - k):
                    out = dict(rest)
                    if k:
                        out[node_id] = k
                    yield out
        yield from rec(0, need)

    def search(i, chosen, used):
        if i == len(sequence):
            return True
        ms_id = sequence[i]
        ms = app.microservices[ms_id]
        anchor_list = anchors_for(ms_id, chosen)

        def per_anchor(j, entries, used_now):
            if j == len(anchor_list):
                chosen[ms_id] = entries
                if search(i + 1, chosen, used_now):
                    return True
                del chosen[ms_id]
                return False
            anchor, level, rps = anchor_list[j]
            need = math.ceil(rps / ms.capacity_rps)
            domains = [d for d in anchor_domain_set(anchor, level) if allowed(ms_id, d)]
            node_ids = [n for n in usable if domain_of[n] in domains]
            for alloc in splits(node_ids, need, ms.cpu_req, ms.mem_req, used_now):
                used_next = dict(used_now)
                for node_id, k in alloc.items():
                    cpu0, mem0 = used_next.get(node_id, (0, 0))
                    used_next[node_id] = (cpu0 + k * ms.cpu_req, mem0 + k * ms.mem_req)
                if per_anchor(j + 1, entries + [(anchor, level, rps, alloc)], used_next):
                    return True
            return False

        return per_anchor(0, [], used)

    return search(0, {}, {})
