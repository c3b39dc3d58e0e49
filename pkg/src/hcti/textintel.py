"""Indicator and entity extraction from threat briefs, plus the knowledge graph.

Extraction is deterministic pattern matching: fanged and defanged IOC forms,
CVE ids, hashes classified by length, and a shipped seed dictionary of threat
actor / malware names.  Overlapping matches are resolved longest-match-first
and mentions are returned in span order.  Spans are byte offsets into the
source text; a mention is flagged defanged whenever its canonical value
differs from the literal text at its span.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from html.parser import HTMLParser
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import NotFoundError, ValidationError
from .eventlog import EventLog
from .model import RecordKind

# Refang rules: the three defang conventions this platform undoes.
_REFANG_RULES = (
    (re.compile(r"\[\.\]"), "."),
    (re.compile(r"hxxp", re.IGNORECASE), "http"),
    (re.compile(r"\(at\)", re.IGNORECASE), "@"),
)


def refang(text: str) -> str:
    """Rewrite defanged IOC conventions back to their plain forms."""
    for pattern, replacement in _REFANG_RULES:
        text = pattern.sub(replacement, text)
    return text


class MentionType(str, Enum):
    IPV4 = "ipv4"
    DOMAIN = "domain"
    URL = "url"
    SHA256 = "sha256"
    SHA1 = "sha1"
    MD5 = "md5"
    CVE_ID = "cve_id"
    THREAT_ACTOR_NAME = "threat_actor_name"
    MALWARE_NAME = "malware_name"


@dataclass(frozen=True)
class ExtractedMention:
    mention_type: MentionType
    value: str
    span: tuple[int, int]
    defanged: bool

    def to_dict(self) -> dict:
        return {"type": self.mention_type.value, "value": self.value,
                "span": list(self.span), "defanged": self.defanged}


_DOT = r"(?:\.|\[\.\])"
_OCTET = r"\d{1,3}"

# Trailing lookaheads tolerate sentence punctuation ("see 203.0.113.7.") while
# rejecting version-string decoys such as 10.2.3.4000 or 1.2.3.4.5.
_IPV4_RE = re.compile(
    rf"(?<![\w.]){_OCTET}(?:{_DOT}{_OCTET}){{3}}(?!\w)(?!\.\d)")
_DOMAIN_RE = re.compile(
    rf"(?<![\w.-])(?:[a-z0-9](?:[a-z0-9-]{{0,61}}[a-z0-9])?{_DOT})+"
    r"[a-z][a-z0-9-]{1,24}(?![\w-])(?!\.[a-z0-9])", re.IGNORECASE)
_URL_RE = re.compile(
    r"\bh(?:tt|xx)ps?://(?:\[\.\]|[^\s\"'<>\[\]])+", re.IGNORECASE)
_CVE_RE = re.compile(r"\bCVE-\d{4}-\d{4,}\b", re.IGNORECASE)
_HASH_RES = (
    (re.compile(r"(?<![0-9a-fA-F])[0-9a-fA-F]{64}(?![0-9a-fA-F])"), MentionType.SHA256),
    (re.compile(r"(?<![0-9a-fA-F])[0-9a-fA-F]{40}(?![0-9a-fA-F])"), MentionType.SHA1),
    (re.compile(r"(?<![0-9a-fA-F])[0-9a-fA-F]{32}(?![0-9a-fA-F])"), MentionType.MD5),
)

_URL_TRAILING = ".,;:!?)'\""


def _load_seed_dictionary() -> dict[str, list[str]]:
    data = resources.files("hcti.data").joinpath("entity_seed.json").read_text()
    return json.loads(data)


_SEED = _load_seed_dictionary()


def _valid_ipv4(value: str) -> bool:
    return all(int(octet) <= 255 for octet in value.split("."))


def _canonical_url(raw: str) -> str:
    plain = refang(raw)
    head, sep, tail = plain.partition("://")
    host, slash, path = tail.partition("/")
    return head.lower() + sep + host.lower() + slash + path


@dataclass
class _Candidate:
    mention_type: MentionType
    start: int
    end: int
    value: str
    priority: int


def _dictionary_candidates(text: str) -> list[_Candidate]:
    out = []
    for mention_type, names in (
            (MentionType.THREAT_ACTOR_NAME, _SEED["threat_actors"]),
            (MentionType.MALWARE_NAME, _SEED["malware"])):
        for name in names:
            for match in re.finditer(
                    rf"\b{re.escape(name)}\b", text, re.IGNORECASE):
                out.append(_Candidate(mention_type, match.start(), match.end(),
                                      name, 6))
    return out


def extract_iocs(text: str,
                 include_entities: bool = True) -> list[ExtractedMention]:
    """Extract IOC and entity mentions from UTF-8 text, span-ordered."""
    candidates: list[_Candidate] = []

    for match in _URL_RE.finditer(text):
        end = match.end()
        while end > match.start() and text[end - 1] in _URL_TRAILING:
            end -= 1
        candidates.append(_Candidate(MentionType.URL, match.start(), end,
                                     _canonical_url(text[match.start():end]), 0))
    for match in _IPV4_RE.finditer(text):
        value = refang(match.group())
        if _valid_ipv4(value):
            candidates.append(_Candidate(MentionType.IPV4, match.start(),
                                         match.end(), value, 1))
    for pattern, mention_type in _HASH_RES:
        for match in pattern.finditer(text):
            candidates.append(_Candidate(mention_type, match.start(), match.end(),
                                         match.group().lower(), 2))
    for match in _CVE_RE.finditer(text):
        candidates.append(_Candidate(MentionType.CVE_ID, match.start(),
                                     match.end(), match.group().upper(), 3))
    for match in _DOMAIN_RE.finditer(text):
        value = refang(match.group()).lower()
        candidates.append(_Candidate(MentionType.DOMAIN, match.start(),
                                     match.end(), value, 5))
    if include_entities:
        candidates.extend(_dictionary_candidates(text))

    # Longest match first; ties fall back to start position then pattern rank.
    candidates.sort(key=lambda c: (-(c.end - c.start), c.start, c.priority))
    taken: list[_Candidate] = []
    for cand in candidates:
        if any(cand.start < other.end and other.start < cand.end
               for other in taken):
            continue
        taken.append(cand)
    taken.sort(key=lambda c: (c.start, c.end))

    byte_of = _byte_offsets(text)
    mentions = []
    for cand in taken:
        raw = text[cand.start:cand.end]
        mentions.append(ExtractedMention(
            mention_type=cand.mention_type,
            value=cand.value,
            span=(byte_of[cand.start], byte_of[cand.end]),
            defanged=raw != cand.value,
        ))
    return mentions


def _byte_offsets(text: str) -> list[int]:
    offsets = [0]
    total = 0
    for char in text:
        total += len(char.encode("utf-8"))
        offsets.append(total)
    return offsets


class _TextExtractor(HTMLParser):
    def __init__(self):
        super().__init__()
        self.chunks: list[str] = []
        self._suppress = 0

    def handle_starttag(self, tag, attrs):
        if tag in ("script", "style"):
            self._suppress += 1

    def handle_endtag(self, tag):
        if tag in ("script", "style") and self._suppress:
            self._suppress -= 1

    def handle_data(self, data):
        if not self._suppress:
            self.chunks.append(data)


def strip_html(html: str) -> str:
    """Drop tags (and script/style bodies) before extraction."""
    parser = _TextExtractor()
    parser.feed(html)
    return " ".join(chunk.strip() for chunk in parser.chunks if chunk.strip())


# -- knowledge graph -------------------------------------------------------

class NodeType(str, Enum):
    THREAT_ACTOR = "threat_actor"
    MALWARE = "malware"
    VULNERABILITY = "vulnerability"
    INDICATOR = "indicator"
    ORGANIZATION = "organization"
    SCENARIO_CLASS = "scenario_class"
    # Briefs and advisories enter the graph as provenance-carrying documents.
    DOCUMENT = "document"


class Relation(str, Enum):
    EXPLOITS = "exploits"
    TARGETS = "targets"
    INDICATES = "indicates"
    MENTIONS = "mentions"
    MITIGATED_BY = "mitigated_by"
    SUPPORTS = "supports"


_MENTION_NODE_TYPES = {
    MentionType.IPV4: NodeType.INDICATOR,
    MentionType.DOMAIN: NodeType.INDICATOR,
    MentionType.URL: NodeType.INDICATOR,
    MentionType.SHA256: NodeType.INDICATOR,
    MentionType.SHA1: NodeType.INDICATOR,
    MentionType.MD5: NodeType.INDICATOR,
    MentionType.CVE_ID: NodeType.VULNERABILITY,
    MentionType.THREAT_ACTOR_NAME: NodeType.THREAT_ACTOR,
    MentionType.MALWARE_NAME: NodeType.MALWARE,
}


@dataclass(frozen=True)
class KgNode:
    node_id: str
    node_type: NodeType
    label: str


@dataclass(frozen=True)
class KgEdge:
    src: str
    relation: Relation
    dst: str
    provenance: str


class KnowledgeGraph:
    """Triple store with set semantics; single writer, concurrent readers."""

    def __init__(self, log_path: Optional[Path] = None):
        self._nodes: dict[str, KgNode] = {}
        self._edges: dict[tuple[str, str, str], KgEdge] = {}
        self._lock = threading.Lock()
        self._log = EventLog(log_path) if log_path else None

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def get_node(self, node_id: str) -> Optional[KgNode]:
        return self._nodes.get(node_id)

    def add_node(self, node_id: str, node_type: NodeType, label: str) -> bool:
        """Idempotent; returns True when the node is new."""
        with self._lock:
            if node_id in self._nodes:
                return False
            if self._log is not None:
                self._log.append({"t": "node", "id": node_id,
                                  "type": node_type.value, "label": label})
            self._nodes[node_id] = KgNode(node_id, node_type, label)
            return True

    def add_edge(self, src: str, relation: Relation, dst: str,
                 provenance: str) -> bool:
        """Idempotent on (src, relation, dst); returns True when new."""
        with self._lock:
            if src not in self._nodes:
                raise NotFoundError("node", src)
            if dst not in self._nodes:
                raise NotFoundError("node", dst)
            key = (src, relation.value, dst)
            if key in self._edges:
                return False
            if self._log is not None:
                self._log.append({"t": "edge", "src": src, "rel": relation.value,
                                  "dst": dst, "prov": provenance})
            self._edges[key] = KgEdge(src, relation, dst, provenance)
            return True

    def neighbors(self, node_id: str,
                  relation: Optional[Relation] = None) -> set[str]:
        """Out-neighbors of a node, optionally restricted to one relation."""
        with self._lock:
            if node_id not in self._nodes:
                raise NotFoundError("node", node_id)
            return {dst for (src, rel, dst) in self._edges
                    if src == node_id and (relation is None
                                           or rel == relation.value)}

    def edges(self) -> list[KgEdge]:
        with self._lock:
            return list(self._edges.values())

    def nodes(self) -> list[KgNode]:
        with self._lock:
            return list(self._nodes.values())

    def replay(self) -> int:
        if self._log is None:
            return 0
        count = 0
        for event in self._log.replay():
            if event.get("t") == "node":
                self._nodes.setdefault(
                    event["id"], KgNode(event["id"], NodeType(event["type"]),
                                        event["label"]))
            elif event.get("t") == "edge":
                key = (event["src"], event["rel"], event["dst"])
                self._edges.setdefault(
                    key, KgEdge(event["src"], Relation(event["rel"]),
                                event["dst"], event["prov"]))
            count += 1
        return count


def mention_node_id(mention: ExtractedMention) -> str:
    return f"{_MENTION_NODE_TYPES[mention.mention_type].value}:{mention.value}"


def link_mentions(kg: KnowledgeGraph, mentions: list[ExtractedMention],
                  source_record: str, store=None) -> dict:
    """Attach a document's mentions to the graph; replays are no-ops.

    Every mention becomes (or finds) its node and receives a `mentions` edge
    from the document node.  CVE mentions that match vulnerability records in
    the threat store additionally get an `indicates` edge.
    """
    if not mentions:
        return {"nodes_added": 0, "edges_added": 0}
    nodes_added = edges_added = 0
    doc_node = f"document:{source_record}"
    nodes_added += kg.add_node(doc_node, NodeType.DOCUMENT, source_record)
    for mention in mentions:
        node_id = mention_node_id(mention)
        nodes_added += kg.add_node(node_id,
                                   _MENTION_NODE_TYPES[mention.mention_type],
                                   mention.value)
        edges_added += kg.add_edge(doc_node, Relation.MENTIONS, node_id,
                                   provenance=source_record)
        if (mention.mention_type == MentionType.CVE_ID and store is not None
                and _store_has_cve(store, mention.value)):
            edges_added += kg.add_edge(doc_node, Relation.INDICATES, node_id,
                                       provenance=source_record)
    return {"nodes_added": nodes_added, "edges_added": edges_added}


def _store_has_cve(store, cve_id: str) -> bool:
    for rec in store.query_records(kind=RecordKind.VULNERABILITY):
        if rec.payload.cve_id == cve_id:
            return True
    return False
