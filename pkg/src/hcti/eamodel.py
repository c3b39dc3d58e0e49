"""Three-layer enterprise-architecture model and reachability queries.

An organization is a graph of organizational (process), application, and
technology nodes.  An edge (src, dst) reads "src is supported by dst" and is
constrained to organizational->application, application->technology and
technology->technology; the technology dependency sub-graph must be acyclic.
Bindings attach external evidence (IPs, hostnames, affected products) to
technology nodes, which is how scan findings and vulnerabilities are traced
up to the business processes they touch.

Loaded graphs are immutable; every query is pure.
"""

from __future__ import annotations

import ipaddress
import re
import shlex
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .errors import ValidationError
from .outside import Finding
from .scenarios import ScenarioClass, scenario_weights


class Layer(str, Enum):
    ORGANIZATIONAL = "organizational"
    APPLICATION = "application"
    TECHNOLOGY = "technology"


class Criticality(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


CRITICALITY_VALUE = {Criticality.LOW: 0.0, Criticality.MEDIUM: 0.5,
                     Criticality.HIGH: 1.0}

_ALLOWED_EDGES = {
    (Layer.ORGANIZATIONAL, Layer.APPLICATION),
    (Layer.APPLICATION, Layer.TECHNOLOGY),
    (Layer.TECHNOLOGY, Layer.TECHNOLOGY),
}


@dataclass(frozen=True)
class EANode:
    node_id: str
    layer: Layer
    label: str
    criticality: Criticality = Criticality.LOW
    data_sensitivity: bool = False
    safety_relevant: bool = False


@dataclass(frozen=True)
class Binding:
    tech_id: str
    kind: str  # "ip", "domain_suffix", or "product"
    matcher: str


@dataclass
class EAGraph:
    org_id: str
    nodes: dict[str, EANode] = field(default_factory=dict)
    edges: set[tuple[str, str]] = field(default_factory=set)
    bindings: list[Binding] = field(default_factory=list)
    orphans: list[str] = field(default_factory=list)

    def layer_nodes(self, layer: Layer) -> list[EANode]:
        return sorted((n for n in self.nodes.values() if n.layer == layer),
                      key=lambda n: n.node_id)

    def to_dict(self) -> dict:
        return {
            "org_id": self.org_id,
            "nodes": [
                {"id": n.node_id, "layer": n.layer.value, "label": n.label,
                 "criticality": n.criticality.value,
                 "sensitive": n.data_sensitivity, "safety": n.safety_relevant}
                for n in sorted(self.nodes.values(), key=lambda n: n.node_id)],
            "edges": sorted([list(e) for e in self.edges]),
            "bindings": [{"tech_id": b.tech_id, "kind": b.kind,
                          "matcher": b.matcher} for b in self.bindings],
            "orphans": self.orphans,
        }


def _classify_matcher(text: str) -> str:
    if text.startswith("product:"):
        return "product"
    try:
        ipaddress.ip_network(text, strict=False)
        return "ip"
    except ValueError:
        return "domain_suffix"


def load_ea_model(path: Path) -> EAGraph:
    """Parse the line-oriented model format and enforce the layer invariants.

    Format (UTF-8, # comments):
        org <org-id>
        node <id> <layer> <criticality> [sensitive] [safety] "<label>"
        edge <src> <dst>
        bind <tech-id> <matcher>
    """
    org_id = None
    nodes: dict[str, EANode] = {}
    edges: list[tuple[int, str, str]] = []
    bindings: list[Binding] = []
    problems: list[str] = []

    for line_no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            parts = shlex.split(line)
        except ValueError as exc:
            problems.append(f"line {line_no}: {exc}")
            continue
        keyword = parts[0]
        if keyword == "org" and len(parts) == 2:
            org_id = parts[1]
        elif keyword == "node" and len(parts) >= 4:
            node_id, layer_text, crit_text = parts[1], parts[2], parts[3]
            flags = parts[4:-1] if len(parts) > 4 else []
            label = parts[-1] if len(parts) > 4 else node_id
            try:
                layer = Layer(layer_text)
                criticality = Criticality(crit_text)
            except ValueError:
                problems.append(f"line {line_no}: bad layer/criticality")
                continue
            if node_id in nodes:
                problems.append(f"line {line_no}: duplicate node {node_id}")
                continue
            nodes[node_id] = EANode(
                node_id, layer, label, criticality,
                data_sensitivity="sensitive" in flags,
                safety_relevant="safety" in flags)
        elif keyword == "edge" and len(parts) == 3:
            edges.append((line_no, parts[1], parts[2]))
        elif keyword == "bind" and len(parts) == 3:
            bindings.append(Binding(parts[1], _classify_matcher(parts[2]),
                                    parts[2]))
        else:
            problems.append(f"line {line_no}: unrecognized directive {keyword!r}")

    if org_id is None:
        problems.append("missing 'org <id>' line")

    edge_set: set[tuple[str, str]] = set()
    for line_no, src, dst in edges:
        if src not in nodes or dst not in nodes:
            problems.append(f"line {line_no}: edge {src}->{dst} references "
                            "unknown node")
            continue
        pair = (nodes[src].layer, nodes[dst].layer)
        if pair not in _ALLOWED_EDGES:
            problems.append(
                f"line {line_no}: edge {src}->{dst} violates layer constraint "
                f"({pair[0].value}->{pair[1].value})")
            continue
        edge_set.add((src, dst))

    for binding in bindings:
        node = nodes.get(binding.tech_id)
        if node is None or node.layer != Layer.TECHNOLOGY:
            problems.append(f"bind {binding.tech_id}: not a technology node")

    cyclic = _tech_cycle_edges(nodes, edge_set)
    for src, dst in sorted(cyclic):
        problems.append(f"cyclic technology dependency via edge {src}->{dst}")

    if problems:
        raise ValidationError("ea_model", "; ".join(problems))

    touched = {n for e in edge_set for n in e}
    orphans = sorted(set(nodes) - touched)
    return EAGraph(org_id=org_id, nodes=nodes, edges=edge_set,
                   bindings=bindings, orphans=orphans)


def _tech_cycle_edges(nodes: dict[str, EANode],
                      edges: set[tuple[str, str]]) -> set[tuple[str, str]]:
    """Edges among technology nodes that survive iterative leaf-peeling."""
    tech_edges = {(s, d) for s, d in edges
                  if nodes[s].layer == Layer.TECHNOLOGY
                  and nodes[d].layer == Layer.TECHNOLOGY}
    out_deg: dict[str, int] = {}
    preds: dict[str, set[str]] = {}
    for src, dst in tech_edges:
        out_deg[src] = out_deg.get(src, 0) + 1
        out_deg.setdefault(dst, 0)
        preds.setdefault(dst, set()).add(src)
    queue = [n for n, deg in out_deg.items() if deg == 0]
    removed = set(queue)
    while queue:
        node = queue.pop()
        for pred in preds.get(node, ()):
            out_deg[pred] -= 1
            if out_deg[pred] == 0 and pred not in removed:
                removed.add(pred)
                queue.append(pred)
    return {(s, d) for s, d in tech_edges
            if s not in removed and d not in removed}


# -- binding matchers --------------------------------------------------------

def _binding_matches(binding: Binding, ip: Optional[str],
                     hostname: Optional[str], products: Iterable) -> bool:
    if binding.kind == "ip" and ip:
        try:
            return ipaddress.ip_address(ip) in ipaddress.ip_network(
                binding.matcher, strict=False)
        except ValueError:
            return False
    if binding.kind == "domain_suffix" and hostname:
        suffix = binding.matcher.lower().lstrip(".")
        host = hostname.lower().rstrip(".")
        return host == suffix or host.endswith("." + suffix)
    if binding.kind == "product":
        spec = binding.matcher[len("product:"):]
        fields = spec.split("/")
        vendor = fields[0].lower() if fields else ""
        product = fields[1].lower() if len(fields) > 1 else ""
        for desc in products or ():
            if desc.vendor.lower() == vendor and (
                    not product or desc.product.lower() == product):
                return True
    return False


def match_bindings(graph: EAGraph, ip: Optional[str] = None,
                   hostname: Optional[str] = None,
                   products: Iterable = ()) -> set[str]:
    """Technology nodes whose bindings match the given evidence."""
    matched = set()
    for binding in graph.bindings:
        if _binding_matches(binding, ip, hostname, products):
            matched.add(binding.tech_id)
    return matched


# -- reachability -------------------------------------------------------------

def _supporters_index(graph: EAGraph) -> dict[str, list[str]]:
    """dst -> sorted srcs, i.e. who is supported by each node."""
    index: dict[str, list[str]] = {}
    for src, dst in graph.edges:
        index.setdefault(dst, []).append(src)
    for dst in index:
        index[dst].sort()
    return index


def affected_processes(graph: EAGraph, target,
                       ) -> set[tuple[str, tuple[str, ...]]]:
    """Processes reachable upward from the evidence behind a finding or vuln.

    Returns (process node id, witness path) pairs, the path running from the
    process down to the matched technology node.  The result is equal to
    transitive-closure reachability restricted to the allowed layer
    directions; the BFS just also produces one deterministic witness.
    """
    if isinstance(target, Finding):
        ip = target.evidence.get("ip")
        hostname = target.evidence.get("hostname")
        products = ()
    else:
        ip = getattr(target, "ip", None)
        hostname = getattr(target, "hostname", None)
        products = getattr(target, "affected_products", ())

    start_techs = match_bindings(graph, ip=ip, hostname=hostname,
                                 products=products)
    if not start_techs:
        return set()

    supporters = _supporters_index(graph)
    results: dict[str, tuple[str, ...]] = {}
    for tech in sorted(start_techs):
        # Upward BFS: matched tech -> dependent techs -> apps -> processes.
        frontier = [(tech, (tech,))]
        seen = {tech}
        while frontier:
            node_id, path = frontier.pop(0)
            node = graph.nodes.get(node_id)
            if node is None:
                continue
            if node.layer == Layer.ORGANIZATIONAL:
                if node_id not in results:
                    results[node_id] = tuple(reversed(path))
                continue
            for supporter in supporters.get(node_id, ()):
                if supporter not in seen:
                    seen.add(supporter)
                    frontier.append((supporter, path + (supporter,)))
    return {(proc, path) for proc, path in results.items()}


def scenario_feasibility(graph: EAGraph, findings: Iterable[Finding],
                         vector_of=lambda cve: None,
                         overrides: Optional[dict] = None,
                         ) -> dict[ScenarioClass, bool]:
    """A scenario is feasible iff an open finding maps to it and touches a process."""
    feasible = {scenario: False for scenario in ScenarioClass}
    for finding in findings:
        if not finding.open:
            continue
        vector = None
        if finding.category.value == "known_cve":
            vector = vector_of(finding.evidence.get("cve_id", ""))
        weights = scenario_weights(finding.category.value, vector, overrides)
        if not weights:
            continue
        if not affected_processes(graph, finding):
            continue
        for scenario, weight in weights.items():
            if weight > 0.0:
                feasible[scenario] = True
    return feasible
