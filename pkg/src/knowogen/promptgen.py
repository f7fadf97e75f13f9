"""Prompt composition for document-producing actions.

Every prompt is built from up to four typed parts in a fixed order:
system, instruction, context summaries, and type-specific notes.  The
exact template strings live in ``templates/prompt_templates.txt`` so
golden tests can pin them; composition itself is a pure function of its
inputs.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING

from .config import AgentProfile, GenerationSettings
from .errors import BackendError, ContextOverflowError
from .rng import stable_hash
from .textgen import GenerationRequest, strip_html

if TYPE_CHECKING:
    from .corpus import DocumentArtifact
    from .scheduler import ActionInstance

PART_ORDER = ("system", "instruction", "context_summaries", "type_specific")

_HEADER_RE = re.compile(r"^\[([^\]]+)\]$")


def _load_templates() -> dict[str, str]:
    text = resources.files(__package__).joinpath("templates/prompt_templates.txt").read_text("utf-8")
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in text.splitlines():
        match = _HEADER_RE.match(line)
        if match:
            current = sections.setdefault(match.group(1), [])
        elif current is not None:
            current.append(line)
    return {name: "\n".join(lines).strip("\n") for name, lines in sections.items()}


TEMPLATES = _load_templates()

# Document-type specific extra instructions, fourth prompt part.  The
# shipped placeholder texts live in the template file but nothing is
# active until registered, so zero-configuration prompts stay at two or
# three parts.
_TYPE_INSTRUCTIONS: dict[str, str] = {}


def shipped_type_instructions(document_type: str) -> str | None:
    """Placeholder text shipped in the template file, if any."""
    return TEMPLATES.get(f"type_specific:{document_type}")


def register_type_instructions(document_type: str, text: str) -> None:
    """Register (or replace) the type-specific part for a document type."""
    _TYPE_INSTRUCTIONS[document_type] = text


def unregister_type_instructions(document_type: str) -> None:
    _TYPE_INSTRUCTIONS.pop(document_type, None)


def type_instructions(document_type: str) -> str | None:
    return _TYPE_INSTRUCTIONS.get(document_type)


@dataclass(frozen=True)
class PromptPart:
    kind: str
    text: str

    def __post_init__(self):
        if self.kind not in PART_ORDER:
            raise ValueError(f"unknown prompt part kind {self.kind!r}")
        if not self.text:
            raise ValueError("prompt part text must be non-empty")


@dataclass(frozen=True)
class Prompt:
    parts: tuple[PromptPart, ...]
    action_uid: str
    token_estimate: int

    def __post_init__(self):
        kinds = [p.kind for p in self.parts]
        if not 1 <= len(kinds) <= 4:
            raise ValueError(f"prompt must have 1..4 parts, got {len(kinds)}")
        if len(set(kinds)) != len(kinds):
            raise ValueError(f"duplicate prompt part kinds: {kinds}")
        ordered = [k for k in PART_ORDER if k in kinds]
        if kinds != ordered:
            raise ValueError(f"prompt parts out of order: {kinds}")


@dataclass(frozen=True)
class DocumentSummary:
    document_uid: str
    text: str
    method: str  # "backend_summarized" or "truncated"


def serialize_prompt(prompt: Prompt) -> str:
    return "\n\n".join(part.text for part in prompt.parts)


def estimate_tokens(texts: list[str]) -> int:
    # chars/4 heuristic; good enough for a drop-oldest budget policy
    return sum(len(t) for t in texts) // 4


def _select_examples(action_uid: str, pool: tuple[str, ...]) -> list[str]:
    first = stable_hash(action_uid, "example-1") % len(pool)
    offset = 1 + stable_hash(action_uid, "example-2") % (len(pool) - 1)
    second = (first + offset) % len(pool)
    return [pool[first], pool[second]]


def _format_instruction(action: "ActionInstance", agents: list[AgentProfile], settings: GenerationSettings) -> str:
    template = action.task.template
    agent_names = ", ".join(a.name for a in agents)
    entities = "; ".join(f"{name} ({kind})" for kind, name in template.entities) or "none"
    rule_lines = [f"- {a.name}: {rule}" for a in agents for rule in a.behavior_rules]
    behavior_rules = "\n".join(rule_lines) if rule_lines else "- none"
    text = TEMPLATES["instruction"].format(
        document_type=action.template.document_type or action.template.action_type,
        topic=template.topic,
        agent_names=agent_names,
        entities=entities,
        behavior_rules=behavior_rules,
    )
    if settings.shots == 2:
        blocks = [TEMPLATES["examples_header"]]
        for n, path in enumerate(_select_examples(action.uid, settings.example_paths), start=1):
            contents = Path(path).read_text(encoding="utf-8", errors="replace").strip()
            blocks.append(TEMPLATES["example"].format(n=n, text=contents))
        text = text + "\n\n" + "\n".join(blocks)
    return text


def _format_context(summaries: list[DocumentSummary]) -> str:
    items = [TEMPLATES["context_item"].format(n=n, summary=s.text) for n, s in enumerate(summaries, start=1)]
    return TEMPLATES["context_header"] + "\n" + "\n".join(items)


def compose_prompt(
    action: "ActionInstance",
    context: list[DocumentSummary],
    agents: list[AgentProfile],
    settings: GenerationSettings,
) -> Prompt:
    """Build the prompt for a document-producing action.

    ``context`` is expected most recent first; at most
    ``settings.max_context_summaries`` entries are kept and the oldest are
    dropped first if the token budget is exceeded.
    """
    author = next((a for a in agents if a.id == action.assignee), agents[0])
    system_text = TEMPLATES["system"].format(
        author_name=author.name,
        author_role=author.job_role,
        organization=author.organization,
    )
    instruction_text = _format_instruction(action, agents, settings)
    extra = type_instructions(action.template.document_type)

    kept = list(context[: settings.max_context_summaries])
    while True:
        texts = [system_text, instruction_text]
        if kept:
            texts.append(_format_context(kept))
        if extra:
            texts.append(extra)
        tokens = estimate_tokens(texts)
        if tokens <= settings.max_prompt_tokens:
            break
        if len(kept) > 1:
            kept.pop()  # drop the oldest summary
            continue
        raise ContextOverflowError(
            f"prompt for {action.uid} needs ~{tokens} tokens, limit is {settings.max_prompt_tokens}"
        )

    parts = [PromptPart("system", system_text), PromptPart("instruction", instruction_text)]
    if kept:
        parts.append(PromptPart("context_summaries", _format_context(kept)))
    if extra:
        parts.append(PromptPart("type_specific", extra))
    return Prompt(parts=tuple(parts), action_uid=action.uid, token_estimate=tokens)


class SummaryCache:
    """Thread-safe cache of document summaries keyed by (uid, limit)."""

    def __init__(self):
        self._entries: dict[tuple[str, int], DocumentSummary] = {}
        self._lock = threading.Lock()

    def get(self, key: tuple[str, int]) -> DocumentSummary | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: tuple[str, int], value: DocumentSummary) -> None:
        with self._lock:
            self._entries[key] = value


def summarize_document(
    document: "DocumentArtifact",
    backend,
    limit: int,
    cache: SummaryCache | None = None,
) -> DocumentSummary:
    """Summarize a document via the backend, falling back to truncation.

    The fallback (backend failure or over-length reply) is deterministic
    truncation of the tag-stripped body, so this function is total.
    """
    key = (document.uid, limit)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit

    stripped = strip_html(document.html)
    prompt = Prompt(
        parts=(
            PromptPart("system", TEMPLATES["summarize_system"]),
            PromptPart("instruction", TEMPLATES["summarize_instruction"].format(limit=limit, document=stripped)),
        ),
        action_uid=f"summary-{document.uid}",
        token_estimate=estimate_tokens([stripped]),
    )
    request = GenerationRequest(
        prompt=prompt,
        decoding="greedy",
        temperature=0.0,
        seed=stable_hash(document.uid, limit) % 2**31,
        max_output_tokens=max(32, limit),
    )
    summary = None
    try:
        reply = backend.generate(request).text.strip()
        if reply and len(reply) <= limit:
            summary = DocumentSummary(document_uid=document.uid, text=reply, method="backend_summarized")
    except BackendError:
        pass
    if summary is None:
        summary = DocumentSummary(document_uid=document.uid, text=stripped[:limit], method="truncated")

    if cache is not None:
        cache.put(key, summary)
    return summary
