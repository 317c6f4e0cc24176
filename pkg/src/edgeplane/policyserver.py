"""HTTP facade exposing policy data and decisions to sidecar-style clients.

Two endpoints, both JSON:

  GET  /v1/data/{policy_type}/{key...}   raw rule data, defaults for unlisted keys
  POST /v1/evaluate                      {"policy": ..., "input": {...}} -> decision

Responses are canonical JSON (sorted keys, no whitespace), so the in-process
functions and the wire endpoints can be compared byte for byte.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import unquote, urlparse

from .errors import EdgeplaneError
from .policy import PolicySet, evaluate_query, get_data
from .topology import InfrastructureGraph

_KEY_ARITY = {
    "placement_restriction": 1,
    "iot_locality": 1,
    "ms_locality": 2,
}


def canonical_json(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def data_response(pset: PolicySet, graph: InfrastructureGraph, parts: list[str]):
    """Resolve a /v1/data path (already split) to (status, payload)."""
    if not parts:
        return 404, {"error": "unknown_key"}
    ptype, key_parts = parts[0], [unquote(p) for p in parts[1:]]
    arity = _KEY_ARITY.get(ptype)
    if arity is None or len(key_parts) != arity:
        return 404, {"error": "unknown_key"}
    key = key_parts[0] if arity == 1 else tuple(key_parts)
    return 200, {"result": get_data(pset, ptype, key)}


def evaluate_response(pset: PolicySet, graph: InfrastructureGraph, body: bytes):
    """Resolve a /v1/evaluate request body to (status, payload)."""
    try:
        doc = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return 400, {"error": "body is not valid JSON"}
    if not isinstance(doc, dict) or "policy" not in doc or "input" not in doc:
        return 400, {"error": "body must carry 'policy' and 'input'"}
    if not isinstance(doc["input"], dict):
        return 400, {"error": "'input' must be a mapping"}
    try:
        decision = evaluate_query(pset, graph, doc["policy"], doc["input"])
    except EdgeplaneError as exc:
        return 400, {"error": str(exc)}
    return 200, {"result": {"allowed": decision.allowed, "reason": decision.reason}}


class PolicyAgentHandler(BaseHTTPRequestHandler):
    server_version = "edgeplane-policy/0.1"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # request logging is the CLI's concern
        pass

    def _send(self, status: int, payload):
        data = canonical_json(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        path = urlparse(self.path).path
        parts = [p for p in path.split("/") if p]
        if len(parts) >= 2 and parts[0] == "v1" and parts[1] == "data":
            status, payload = data_response(self.server.pset, self.server.graph, parts[2:])
        else:
            status, payload = 404, {"error": "unknown_path"}
        self._send(status, payload)

    def do_POST(self):
        path = urlparse(self.path).path
        if path != "/v1/evaluate":
            self._send(404, {"error": "unknown_path"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
        except (TypeError, ValueError):
            length = 0
        body = self.rfile.read(length) if length > 0 else b""
        status, payload = evaluate_response(self.server.pset, self.server.graph, body)
        self._send(status, payload)


def make_server(
    pset: PolicySet,
    graph: InfrastructureGraph,
    host: str = "127.0.0.1",
    port: int = 0,
) -> ThreadingHTTPServer:
    """Build (but do not start) the policy server; port 0 picks a free port."""
    server = ThreadingHTTPServer((host, port), PolicyAgentHandler)
    server.pset = pset
    server.graph = graph
    return server


def serve(pset: PolicySet, graph: InfrastructureGraph, bind: str = "127.0.0.1:8181"):
    """Run the policy server until interrupted."""
    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"bind must look like host:port, got {bind!r}")
    server = make_server(pset, graph, host, int(port_text))
    try:
        server.serve_forever()
    finally:
        server.server_close()
