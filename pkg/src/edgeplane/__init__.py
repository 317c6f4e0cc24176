"""Policy-driven control plane for microservices on multi-domain edge-cloud infrastructure.

The package models an infrastructure graph (regions, domains, compute nodes, IoT
attachment points), a microservice application DAG with per-edge traffic ratios,
and declarative policies (placement restrictions plus IoT and service-to-service
locality levels).  On top of that it provides a demand-driven placement planner,
locality-scoped routing rule generation, an independent plan validator, and a
deterministic rate-based traffic simulator with an alerting observer loop.
"""

from .errors import EdgeplaneError
from .locality import LocalityLevel
from .topology import InfrastructureGraph, load_topology, nodes_in_scope, domain_of_node
from .appmodel import (
    ApplicationDag,
    PlacementRequest,
    DemandProfile,
    app_from_doc,
    validate_app,
    propagate_demand,
)
from .policy import PolicySet, PolicyDecision, parse_policies, get_data, is_allowed, eligible_domains, batch_evaluate
from .controlplane import (
    ControlPlane,
    DeploymentPlan,
    PlacementMapping,
    RoutingRule,
    RoutingRuleSet,
    Alert,
    place_application,
    required_instances,
    select_nodes,
    generate_routes,
    validate_plan,
    handle_alert,
)
from .meshsim import FlowAssignment, SimulationReport, route_flows, check_compliance, run_scenario, utilization
from .scenario import Scenario, load_scenario, scenario_from_doc

__version__ = "0.1.0"
