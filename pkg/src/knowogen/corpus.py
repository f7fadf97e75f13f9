"""Dataset persistence: documents, traces, prompts, graph, and manifest.

Layout of an output directory::

    documents/{uid}.html   one file per generated document
    traces.jsonl           one JSON object per data trace
    prompts/{uid}.txt      flag-gated, prompt text per document
    graph.nt               sorted N-Triples knowledge graph
    manifest.json          run metadata and counts

Re-running with the mock backend and the same seed reproduces the tree
byte for byte; nothing written here depends on wall-clock time.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import NonEmptyDirError
from .kg import TripleGraph, serialize_ntriples

if TYPE_CHECKING:
    from .scheduler import SimulationLog

TOOL_VERSION = "0.1.0"


@dataclass(frozen=True)
class DocumentArtifact:
    uid: str
    document_type: str
    html: str
    producing_action: str
    consulted_documents: tuple[str, ...]
    prompt_hash: str
    round: int
    path: str


@dataclass(frozen=True)
class RunManifest:
    seed: int
    config_digest: str
    backend_id: str
    rounds_executed: int
    counts: dict[str, int]
    tool_version: str

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config_digest": self.config_digest,
            "backend_id": self.backend_id,
            "rounds_executed": self.rounds_executed,
            "counts": dict(self.counts),
            "tool_version": self.tool_version,
        }


def write_dataset(
    log: "SimulationLog",
    graph: TripleGraph,
    out_dir: str | Path,
    *,
    seed: int,
    config_digest: str,
    backend_id: str,
    tool_version: str = TOOL_VERSION,
    save_prompts: bool = False,
    overwrite: bool = False,
) -> RunManifest:
    """Persist a completed simulation as a shareable dataset directory."""
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        if not overwrite:
            raise NonEmptyDirError(f"output directory {out_dir} is not empty (pass overwrite to replace it)")
        shutil.rmtree(out_dir)
    (out_dir / "documents").mkdir(parents=True, exist_ok=True)

    for document in log.documents:
        target = out_dir / document.path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(document.html, encoding="utf-8")

    with (out_dir / "traces.jsonl").open("w", encoding="utf-8") as handle:
        for trace in log.traces:
            record = {
                "uid": trace.uid,
                "kind": trace.kind,
                "agent": trace.agent,
                "round": trace.round,
                "payload": dict(trace.payload),
                "subject_document": trace.subject_document,
            }
            handle.write(json.dumps(record, sort_keys=True) + "\n")

    if save_prompts:
        prompts_dir = out_dir / "prompts"
        prompts_dir.mkdir(exist_ok=True)
        for doc_uid, text in sorted(log.prompts.items()):
            (prompts_dir / f"{doc_uid}.txt").write_text(text, encoding="utf-8")

    (out_dir / "graph.nt").write_bytes(serialize_ntriples(graph))

    total_actions = sum(len(instance.actions) for instance in log.task_instances)
    manifest = RunManifest(
        seed=seed,
        config_digest=config_digest,
        backend_id=backend_id,
        rounds_executed=log.rounds_executed,
        counts={
            "documents": len(log.documents),
            "traces": len(log.traces),
            "actions": total_actions,
        },
        tool_version=tool_version,
    )
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest
