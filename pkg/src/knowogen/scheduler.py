"""Round-based simulation: task instantiation, assignment, and execution.

Each round: sickness is sampled per agent, actions whose dependencies
finished in earlier rounds become ready, available agents work on running
and newly assigned actions up to their per-round capacity, completed
document actions are executed against the text-generation backend, and
freshly produced documents are scanned for follow-up actions.

Everything iterates in declaration or (task uid, action position) order
and all randomness comes from labeled streams, so a run with the mock
backend is a pure function of the configuration.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .config import ActionSpec, SimulationConfig, TaskTemplate
from .corpus import DocumentArtifact
from .errors import BudgetExceededError
from .promptgen import SummaryCache, compose_prompt, serialize_prompt, summarize_document
from .rng import derive_stream
from .textgen import GenerationRequest

MAX_REPLY_DEPTH = 3


@dataclass
class ActionInstance:
    uid: str
    template: ActionSpec
    task_uid: str
    assignee: str
    position: int
    depends_on_uids: tuple[str, ...]
    status: str = "pending"
    started_round: int | None = None
    finished_round: int | None = None
    consulted_documents: list[str] = field(default_factory=list)
    reply_depth: int = 0
    rounds_worked: int = 0
    task: "TaskInstance | None" = field(default=None, repr=False, compare=False)

    @property
    def sort_key(self) -> tuple[str, int]:
        return (self.task_uid, self.position)


@dataclass
class TaskInstance:
    uid: str
    template: TaskTemplate
    participants: tuple[str, ...]
    actions: list[ActionInstance]
    spawned_by: str | None = None


@dataclass(frozen=True)
class DataTrace:
    uid: str
    kind: str  # "filed_document" or "search"
    agent: str
    round: int
    payload: dict[str, str]
    subject_document: str | None = None


@dataclass
class SimulationLog:
    completed_actions: list[ActionInstance] = field(default_factory=list)
    documents: list[DocumentArtifact] = field(default_factory=list)
    traces: list[DataTrace] = field(default_factory=list)
    rounds_executed: int = 0
    derived_actions: list[ActionInstance] = field(default_factory=list)
    task_instances: list[TaskInstance] = field(default_factory=list)
    prompts: dict[str, str] = field(default_factory=dict)


def instantiate_tasks(config: SimulationConfig) -> list[TaskInstance]:
    """Create `frequency` instances per template with fresh, stable uids."""
    instances = []
    for template in config.tasks:
        for n in range(1, template.frequency + 1):
            task_uid = f"task-{template.id}-{n:04d}"
            instance = TaskInstance(
                uid=task_uid,
                template=template,
                participants=template.participants,
                actions=[],
            )
            for position, spec in enumerate(template.actions):
                instance.actions.append(
                    ActionInstance(
                        uid=f"{task_uid}/{spec.id}",
                        template=spec,
                        task_uid=task_uid,
                        assignee=template.participants[position % len(template.participants)],
                        position=position,
                        depends_on_uids=tuple(f"{task_uid}/{dep}" for dep in spec.depends_on),
                        task=instance,
                    )
                )
            instances.append(instance)
    return instances


class _BudgetedBackend:
    """Counts backend calls and enforces the optional cap."""

    def __init__(self, backend, max_calls: int):
        self._backend = backend
        self._max_calls = max_calls
        self.calls = 0
        self.backend_id = backend.backend_id

    def generate(self, request: GenerationRequest):
        if self._max_calls and self.calls >= self._max_calls:
            raise BudgetExceededError(f"backend call budget of {self._max_calls} exhausted")
        self.calls += 1
        return self._backend.generate(request)


_LINE_TAG_RE = re.compile(r"<[^<>]*>")


def _email_body_lines(html: str) -> str:
    """Tag-stripped body with quoted lines removed, newlines preserved."""
    lines = []
    for line in _LINE_TAG_RE.sub(" ", html).splitlines():
        if line.lstrip().startswith(">"):
            continue
        lines.append(line)
    return "\n".join(lines)


def derive_followups(
    document: DocumentArtifact,
    log: SimulationLog,
    config: SimulationConfig,
) -> list[ActionInstance]:
    """Derive a reply-authoring action for question-bearing emails.

    At most one reply per email; chains stop at depth 3 and each link
    requires a fresh question mark in the body.
    """
    if document.document_type != "email":
        return []

    producing = None
    owner = None
    for instance in log.task_instances:
        for action in instance.actions:
            if action.uid == document.producing_action:
                producing, owner = action, instance
                break
        if producing is not None:
            break
    if producing is None or producing.reply_depth >= MAX_REPLY_DEPTH:
        return []
    if "?" not in _email_body_lines(document.html):
        return []

    recipients = [p for p in owner.participants if p != producing.assignee]
    if not recipients:
        return []

    spec = ActionSpec(
        id=f"{producing.template.id}-reply",
        action_type="authoring",
        duration=1,
        depends_on=(),
        type_params={"document_type": "email"},
    )
    reply = ActionInstance(
        uid=f"reply-{document.uid}",
        template=spec,
        task_uid=owner.uid,
        assignee=recipients[0],
        position=10_000 + len(owner.actions),
        depends_on_uids=(producing.uid,),
        reply_depth=producing.reply_depth + 1,
        consulted_documents=[document.uid],
        task=owner,
    )
    return [reply]


class _Runner:
    def __init__(self, config: SimulationConfig, backend, dry_run: bool):
        self.config = config
        self.settings = config.settings
        self.generation = config.settings.generation
        self.dry_run = dry_run
        self.backend = None if dry_run else _BudgetedBackend(backend, self.generation.max_backend_calls)
        self.sickness_rng = derive_stream(self.settings.seed, "sickness")
        self.decoding_rng = derive_stream(self.settings.seed, "decoding")
        self.summary_cache = SummaryCache()
        self.log = SimulationLog(task_instances=instantiate_tasks(config))
        self.actions: dict[str, ActionInstance] = {
            action.uid: action for inst in self.log.task_instances for action in inst.actions
        }
        self.docs_by_uid: dict[str, DocumentArtifact] = {}
        self.doc_by_action: dict[str, str] = {}
        self.doc_order: dict[str, int] = {}
        self.doc_counter = 0
        self.trace_counter = 0

    # -- round phases -------------------------------------------------

    def run(self) -> SimulationLog:
        for round_no in range(1, self.settings.rounds + 1):
            sick = self._sample_sickness()
            self._mark_ready()
            worked = self._assign(round_no, sick)
            produced = self._complete(round_no, worked)
            if not self.dry_run:
                self._scan_followups(produced)
            self.log.rounds_executed = round_no
        return self.log

    def _sample_sickness(self) -> set[str]:
        p = self.settings.sickness_probability
        return {
            agent.id
            for agent in self.config.agents
            if self.sickness_rng.random() < p
        }

    def _mark_ready(self) -> None:
        # Completions only unlock dependents from the next round on.
        for action in self.actions.values():
            if action.status == "pending" and all(
                self.actions[dep].status == "done" for dep in action.depends_on_uids
            ):
                action.status = "ready"

    def _assign(self, round_no: int, sick: set[str]) -> list[ActionInstance]:
        capacity = {
            agent.id: self.settings.max_actions_per_agent_per_round
            for agent in self.config.agents
            if agent.id not in sick
        }
        worked = []
        running = sorted(
            (a for a in self.actions.values() if a.status == "running"),
            key=lambda a: a.sort_key,
        )
        for action in running:
            if capacity.get(action.assignee, 0) > 0:
                capacity[action.assignee] -= 1
                action.rounds_worked += 1
                worked.append(action)
        ready = sorted(
            (a for a in self.actions.values() if a.status == "ready"),
            key=lambda a: a.sort_key,
        )
        for action in ready:
            if capacity.get(action.assignee, 0) > 0:
                capacity[action.assignee] -= 1
                action.status = "running"
                action.started_round = round_no
                action.rounds_worked = 1
                worked.append(action)
        return sorted(worked, key=lambda a: a.sort_key)

    def _complete(self, round_no: int, worked: list[ActionInstance]) -> list[DocumentArtifact]:
        produced = []
        for action in worked:
            if action.rounds_worked < action.template.duration:
                continue
            action.status = "done"
            action.finished_round = round_no
            self.log.completed_actions.append(action)
            if self.dry_run:
                continue
            if action.template.produces_document:
                produced.append(self._produce_document(action, round_no))
            else:
                self._emit_trace(action, round_no)
        return produced

    # -- execution effects ---------------------------------------------

    def _consulted(self, action: ActionInstance) -> list[str]:
        uids = list(action.consulted_documents)
        for dep in action.depends_on_uids:
            doc_uid = self.doc_by_action.get(dep)
            if doc_uid is not None and doc_uid not in uids:
                uids.append(doc_uid)
        uids.sort(key=lambda u: self.doc_order[u])
        return uids

    def _produce_document(self, action: ActionInstance, round_no: int) -> DocumentArtifact:
        consulted = self._consulted(action)
        action.consulted_documents = consulted
        newest_first = [
            summarize_document(
                self.docs_by_uid[uid],
                self.backend,
                self.generation.summary_length_limit,
                self.summary_cache,
            )
            for uid in reversed(consulted)
        ]
        involved = [self.config.agent_by_id(p) for p in action.task.participants]
        prompt = compose_prompt(action, newest_first, involved, self.generation)
        request = GenerationRequest(
            prompt=prompt,
            decoding=self.generation.decoding,
            temperature=self.generation.temperature,
            seed=self.decoding_rng.getrandbits(32),
            max_output_tokens=self.generation.max_output_tokens,
        )
        result = self.backend.generate(request)

        self.doc_counter += 1
        uid = f"doc-{self.doc_counter:04d}"
        artifact = DocumentArtifact(
            uid=uid,
            document_type=action.template.document_type,
            html=result.text,
            producing_action=action.uid,
            consulted_documents=tuple(consulted),
            prompt_hash=result.request_hash,
            round=round_no,
            path=f"documents/{uid}.html",
        )
        self.log.documents.append(artifact)
        self.log.prompts[uid] = serialize_prompt(prompt)
        self.docs_by_uid[uid] = artifact
        self.doc_by_action[action.uid] = uid
        self.doc_order[uid] = self.doc_counter
        return artifact

    def _emit_trace(self, action: ActionInstance, round_no: int) -> None:
        kind = action.template.action_type
        if kind == "information_search":
            self._append_trace(
                action, round_no, "search",
                {"query": action.task.template.topic}, None,
            )
            return
        # dissemination / filing: file the newest relevant document
        subject = None
        for dep in action.depends_on_uids:
            doc_uid = self.doc_by_action.get(dep)
            if doc_uid is not None and (subject is None or self.doc_order[doc_uid] > self.doc_order[subject]):
                subject = doc_uid
        if subject is None:
            task_docs = [
                self.doc_by_action[a.uid]
                for a in action.task.actions
                if a.uid in self.doc_by_action
            ]
            if task_docs:
                subject = max(task_docs, key=lambda u: self.doc_order[u])
        if subject is None:
            return  # nothing to file yet
        organization = self.config.agent_by_id(action.assignee).organization
        folder = f"/{organization}/{action.task.template.topic}/"
        action.consulted_documents = [subject]
        self._append_trace(action, round_no, "filed_document", {"folder": folder}, subject)

    def _append_trace(self, action, round_no, kind, payload, subject) -> None:
        self.trace_counter += 1
        self.log.traces.append(
            DataTrace(
                uid=f"trace-{self.trace_counter:04d}",
                kind=kind,
                agent=action.assignee,
                round=round_no,
                payload=payload,
                subject_document=subject,
            )
        )

    def _scan_followups(self, produced: list[DocumentArtifact]) -> None:
        for document in produced:
            for reply in derive_followups(document, self.log, self.config):
                reply.task.actions.append(reply)
                self.actions[reply.uid] = reply
                self.log.derived_actions.append(reply)


def run_simulation(config: SimulationConfig, backend, *, dry_run: bool = False) -> SimulationLog:
    """Execute the configured number of rounds and return the full log.

    ``backend`` may be None when ``dry_run`` is set; dry runs schedule
    actions but skip every execution effect (no backend calls, documents,
    traces, or follow-ups).
    """
    return _Runner(config, backend, dry_run).run()
