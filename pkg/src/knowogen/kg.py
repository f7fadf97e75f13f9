"""Knowledge-graph accumulation and N-Triples serialization.

All simulation context — configuration entities, task and action
instances, documents, and traces — is captured as subject/predicate/object
statements under one namespace (see ``docs/ontology.md``) and serialized
as lexicographically sorted N-Triples for diff-ability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Union
from urllib.parse import quote

from .config import SimulationConfig

if TYPE_CHECKING:
    from .scheduler import SimulationLog

NS = "https://purl.archive.org/knowogen/ns#"
RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
RDFS_LABEL = "http://www.w3.org/2000/01/rdf-schema#label"
XSD_INTEGER = "http://www.w3.org/2001/XMLSchema#integer"


@dataclass(frozen=True)
class Literal:
    value: str
    datatype: str | None = None

    @classmethod
    def integer(cls, value: int) -> "Literal":
        return cls(str(value), XSD_INTEGER)


Object = Union[str, Literal]


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    obj: Object


@dataclass(frozen=True)
class TripleGraph:
    triples: frozenset[Triple]

    def with_predicate(self, predicate: str) -> list[Triple]:
        return [t for t in self.triples if t.predicate == predicate]


def iri(kind: str, identifier: str) -> str:
    """Mint the IRI for an entity; the kind prefix keeps id spaces apart."""
    return NS + kind + "/" + quote(identifier, safe="/-_.")


def pred(name: str) -> str:
    return NS + name


def _maybe_int_literal(value: int | None) -> Literal | None:
    return None if value is None else Literal.integer(value)


def build_graph(config: SimulationConfig, log: "SimulationLog") -> TripleGraph:
    """Map a finished simulation onto the triple vocabulary."""
    triples: set[Triple] = set()

    def add(subject: str, predicate: str, obj: Object) -> None:
        triples.add(Triple(subject, predicate, obj))

    for org in config.organizations:
        node = iri("organization", org.id)
        add(node, RDF_TYPE, NS + ("Company" if org.kind == "company" else "Department"))
        add(node, RDFS_LABEL, Literal(org.name))
        if org.parent is not None:
            add(node, pred("parentOrganization"), iri("organization", org.parent))

    for agent in config.agents:
        node = iri("agent", agent.id)
        add(node, RDF_TYPE, NS + "Agent")
        add(node, RDFS_LABEL, Literal(agent.name))
        add(node, pred("memberOf"), iri("organization", agent.organization))

    for instance in log.task_instances:
        task_node = iri("task", instance.uid)
        add(task_node, RDF_TYPE, NS + "TaskInstance")
        add(task_node, RDFS_LABEL, Literal(instance.template.topic))
        for action in instance.actions:
            node = iri("action", action.uid)
            add(node, RDF_TYPE, NS + "Action")
            add(node, pred("partOfTask"), task_node)
            add(node, pred("performedBy"), iri("agent", action.assignee))
            add(node, pred("hasActionType"), Literal(action.template.action_type))
            for dep_uid in action.depends_on_uids:
                add(node, pred("dependsOn"), iri("action", dep_uid))
            started = _maybe_int_literal(action.started_round)
            if started is not None:
                add(node, pred("startedRound"), started)
            finished = _maybe_int_literal(action.finished_round)
            if finished is not None:
                add(node, pred("finishedRound"), finished)
            if action.status != "done":
                add(node, pred("hasStatus"), Literal(action.status))
            for key in sorted(action.template.type_params):
                add(node, pred("hasParameter"), Literal(f"{key}={action.template.type_params[key]}"))

    for document in log.documents:
        node = iri("document", document.uid)
        add(node, RDF_TYPE, NS + "Document")
        add(node, pred("producedBy"), iri("action", document.producing_action))
        add(node, pred("hasDocumentType"), Literal(document.document_type))
        add(node, pred("storedAt"), Literal(document.path))
        for consulted in document.consulted_documents:
            add(node, pred("consultedDocument"), iri("document", consulted))

    for trace in log.traces:
        node = iri("trace", trace.uid)
        add(node, RDF_TYPE, NS + "Trace")
        add(node, pred("performedBy"), iri("agent", trace.agent))
        add(node, pred("inRound"), Literal.integer(trace.round))
        for key in sorted(trace.payload):
            add(node, pred("hasPayload"), Literal(f"{key}={trace.payload[key]}"))
        if trace.subject_document is not None:
            add(node, pred("subjectDocument"), iri("document", trace.subject_document))

    return TripleGraph(triples=frozenset(triples))


_ESCAPES = {
    "\\": "\\\\",
    '"': '\\"',
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


def _escape_literal(value: str) -> str:
    out = []
    for ch in value:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def _render_object(obj: Object) -> str:
    if isinstance(obj, Literal):
        rendered = f'"{_escape_literal(obj.value)}"'
        if obj.datatype is not None:
            rendered += f"^^<{obj.datatype}>"
        return rendered
    return f"<{obj}>"


def serialize_ntriples(graph: TripleGraph) -> bytes:
    """Canonical bytes: one sorted N-Triples line per statement."""
    lines = sorted(
        f"<{t.subject}> <{t.predicate}> {_render_object(t.obj)} ."
        for t in graph.triples
    )
    if not lines:
        return b""
    return ("\n".join(lines) + "\n").encode("utf-8")
