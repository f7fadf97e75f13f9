"""Configuration parsing, validation, and deterministic parameter sampling.

The configuration file is TOML with four top-level tables: ``[settings]``,
``[[agent]]``, ``[[organization]]``, and ``[[task]]`` (with nested
``[[task.action]]``).  Parsing is strict: unknown keys are rejected, every
cross-reference must resolve, and action dependencies must form a DAG.
A complete annotated example lives in ``docs/example_config.toml``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import (
    ConfigSyntaxError,
    DependencyCycleError,
    ExhaustionError,
    UnknownReferenceError,
    ValueOutOfRangeError,
)
from .rng import derive_stream

SAMPLED = "sampled"

ACTION_TYPES = frozenset(
    {"authoring", "dissemination", "information_search", "filing", "feedback", "meeting"}
)
# Types whose completion produces a document (and therefore a prompt).
DOCUMENT_ACTION_TYPES = frozenset({"authoring", "feedback", "meeting"})
TRACE_ACTION_TYPES = ACTION_TYPES - DOCUMENT_ACTION_TYPES

ORGANIZATION_KINDS = frozenset({"company", "department"})
BACKENDS = frozenset({"http", "mock"})
DECODINGS = frozenset({"greedy", "sampled"})


@dataclass(frozen=True)
class AgentProfile:
    id: str
    name: str
    job_role: str
    organization: str
    behavior_rules: tuple[str, ...] = ()
    relationships: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Organization:
    id: str
    name: str
    kind: str
    parent: str | None = None
    domain: str = ""


@dataclass(frozen=True)
class ActionSpec:
    id: str
    action_type: str
    duration: int = 1
    depends_on: tuple[str, ...] = ()
    type_params: dict[str, str] = field(default_factory=dict)

    @property
    def produces_document(self) -> bool:
        return self.action_type in DOCUMENT_ACTION_TYPES

    @property
    def document_type(self) -> str:
        return self.type_params.get("document_type", "")


@dataclass(frozen=True)
class TaskTemplate:
    id: str
    topic: str
    frequency: int
    participants: tuple[str, ...]
    entities: tuple[tuple[str, str], ...]
    actions: tuple[ActionSpec, ...]


@dataclass(frozen=True)
class GenerationSettings:
    backend: str = "mock"
    endpoint: str | None = None
    model_name: str = "mock-model"
    decoding: str = "greedy"
    temperature: float = 0.8
    shots: int = 0
    example_paths: tuple[str, ...] = ()
    max_context_summaries: int = 3
    summary_length_limit: int = 400
    max_prompt_tokens: int = 4096
    max_output_tokens: int = 1024
    max_backend_calls: int = 0  # 0 means unlimited


@dataclass(frozen=True)
class SimulationSettings:
    rounds: int
    seed: int = 0
    sickness_probability: float = 0.0
    max_actions_per_agent_per_round: int = 1
    generation: GenerationSettings = field(default_factory=GenerationSettings)


@dataclass(frozen=True)
class SimulationConfig:
    agents: tuple[AgentProfile, ...]
    organizations: tuple[Organization, ...]
    tasks: tuple[TaskTemplate, ...]
    settings: SimulationSettings

    def agent_by_id(self, agent_id: str) -> AgentProfile:
        for agent in self.agents:
            if agent.id == agent_id:
                return agent
        raise UnknownReferenceError(agent_id, "agent lookup")

    def organization_by_id(self, org_id: str) -> Organization:
        for org in self.organizations:
            if org.id == org_id:
                return org
        raise UnknownReferenceError(org_id, "organization lookup")


def config_digest(path: str | Path) -> str:
    """Stable hash of the raw configuration file bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------

def _check_keys(table: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigSyntaxError(f"unknown key(s) {unknown} in {where}")


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigSyntaxError(f"missing required key {key!r} in {where}")
    return table[key]


def _as_str(value, where: str) -> str:
    if not isinstance(value, str):
        raise ConfigSyntaxError(f"{where} must be a string, got {type(value).__name__}")
    return value


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigSyntaxError(f"{where} must be an integer, got {type(value).__name__}")
    return value


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigSyntaxError(f"{where} must be a number, got {type(value).__name__}")
    return float(value)


def _as_str_list(value, where: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigSyntaxError(f"{where} must be a list of strings")
    return tuple(value)


def _as_pair_list(value, where: str) -> tuple[tuple[str, str], ...]:
    if not isinstance(value, list):
        raise ConfigSyntaxError(f"{where} must be a list of [a, b] pairs")
    pairs = []
    for item in value:
        if not (isinstance(item, list) and len(item) == 2 and all(isinstance(x, str) for x in item)):
            raise ConfigSyntaxError(f"{where} entries must be two-string pairs")
        pairs.append((item[0], item[1]))
    return tuple(pairs)


def _parse_agent(table: dict, index: int) -> AgentProfile:
    where = f"agent #{index + 1}"
    if not isinstance(table, dict):
        raise ConfigSyntaxError(f"{where} must be a table")
    _check_keys(table, {"id", "name", "job_role", "organization", "behavior_rules", "relationships"}, where)
    agent_id = _as_str(_require(table, "id", where), f"{where}.id")
    if agent_id == SAMPLED:
        raise ConfigSyntaxError(f"agent id {SAMPLED!r} is reserved for unresolved participant slots")
    return AgentProfile(
        id=agent_id,
        name=_as_str(_require(table, "name", where), f"{where}.name"),
        job_role=_as_str(_require(table, "job_role", where), f"{where}.job_role"),
        organization=_as_str(_require(table, "organization", where), f"{where}.organization"),
        behavior_rules=_as_str_list(table.get("behavior_rules", []), f"{where}.behavior_rules"),
        relationships=_as_pair_list(table.get("relationships", []), f"{where}.relationships"),
    )


def _parse_organization(table: dict, index: int) -> Organization:
    where = f"organization #{index + 1}"
    if not isinstance(table, dict):
        raise ConfigSyntaxError(f"{where} must be a table")
    _check_keys(table, {"id", "name", "kind", "parent", "domain"}, where)
    kind = _as_str(_require(table, "kind", where), f"{where}.kind")
    if kind not in ORGANIZATION_KINDS:
        raise ConfigSyntaxError(f"{where}.kind must be one of {sorted(ORGANIZATION_KINDS)}, got {kind!r}")
    parent = table.get("parent")
    if parent is not None:
        parent = _as_str(parent, f"{where}.parent")
    return Organization(
        id=_as_str(_require(table, "id", where), f"{where}.id"),
        name=_as_str(_require(table, "name", where), f"{where}.name"),
        kind=kind,
        parent=parent,
        domain=_as_str(table.get("domain", ""), f"{where}.domain"),
    )


def _parse_action(table: dict, task_id: str, index: int) -> ActionSpec:
    where = f"task {task_id!r} action #{index + 1}"
    if not isinstance(table, dict):
        raise ConfigSyntaxError(f"{where} must be a table")
    _check_keys(table, {"id", "action_type", "duration", "depends_on", "type_params"}, where)
    action_type = _as_str(_require(table, "action_type", where), f"{where}.action_type")
    if action_type not in ACTION_TYPES:
        raise ConfigSyntaxError(f"{where}.action_type must be one of {sorted(ACTION_TYPES)}, got {action_type!r}")
    duration = _as_int(table.get("duration", 1), f"{where}.duration")
    if duration < 1:
        raise ValueOutOfRangeError(f"{where}.duration must be positive, got {duration}")
    params = table.get("type_params", {})
    if not isinstance(params, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in params.items()
    ):
        raise ConfigSyntaxError(f"{where}.type_params must be a table of string values")
    spec = ActionSpec(
        id=_as_str(_require(table, "id", where), f"{where}.id"),
        action_type=action_type,
        duration=duration,
        depends_on=_as_str_list(table.get("depends_on", []), f"{where}.depends_on"),
        type_params=dict(params),
    )
    if spec.produces_document and not spec.document_type:
        raise ConfigSyntaxError(f"{where}: {action_type} actions require type_params.document_type")
    return spec


def _check_action_dag(task_id: str, actions: tuple[ActionSpec, ...]) -> None:
    ids = [a.id for a in actions]
    if len(set(ids)) != len(ids):
        raise ConfigSyntaxError(f"duplicate action ids in task {task_id!r}")
    known = set(ids)
    for action in actions:
        for dep in action.depends_on:
            if dep not in known:
                raise UnknownReferenceError(dep, f"depends_on of action {action.id!r} in task {task_id!r}")

    # Kahn's algorithm; whatever survives is part of (or downstream of) a cycle.
    in_degree = {a.id: len(a.depends_on) for a in actions}
    dependents: dict[str, list[str]] = {a.id: [] for a in actions}
    for action in actions:
        for dep in action.depends_on:
            dependents[dep].append(action.id)
    queue = sorted(a_id for a_id, deg in in_degree.items() if deg == 0)
    seen = 0
    while queue:
        current = queue.pop(0)
        seen += 1
        for nxt in sorted(dependents[current]):
            in_degree[nxt] -= 1
            if in_degree[nxt] == 0:
                queue.append(nxt)
        queue.sort()
    if seen != len(actions):
        remaining = {a_id for a_id, deg in in_degree.items() if deg > 0}
        cycle = _extract_cycle(remaining, {a.id: a for a in actions})
        raise DependencyCycleError(task_id, cycle)


def _extract_cycle(remaining: set[str], by_id: dict[str, ActionSpec]) -> list[str]:
    start = min(remaining)
    path = [start]
    seen_at = {start: 0}
    current = start
    while True:
        nxt = min(d for d in by_id[current].depends_on if d in remaining)
        if nxt in seen_at:
            cycle = path[seen_at[nxt]:]
            pivot = cycle.index(min(cycle))
            return cycle[pivot:] + cycle[:pivot]
        seen_at[nxt] = len(path)
        path.append(nxt)
        current = nxt


def _parse_task(table: dict, index: int) -> TaskTemplate:
    where = f"task #{index + 1}"
    if not isinstance(table, dict):
        raise ConfigSyntaxError(f"{where} must be a table")
    _check_keys(table, {"id", "topic", "frequency", "participants", "entities", "action"}, where)
    task_id = _as_str(_require(table, "id", where), f"{where}.id")
    frequency = _as_int(table.get("frequency", 1), f"{where}.frequency")
    if frequency < 0:
        raise ValueOutOfRangeError(f"{where}.frequency must be non-negative, got {frequency}")
    participants = _as_str_list(table.get("participants", [SAMPLED]), f"{where}.participants")
    if not participants:
        raise ConfigSyntaxError(f"{where}: participants must name at least one agent or {SAMPLED!r} slot")
    raw_actions = table.get("action")
    if not isinstance(raw_actions, list) or not raw_actions:
        raise ConfigSyntaxError(f"{where} must declare at least one [[task.action]]")
    actions = tuple(_parse_action(a, task_id, i) for i, a in enumerate(raw_actions))
    _check_action_dag(task_id, actions)
    return TaskTemplate(
        id=task_id,
        topic=_as_str(_require(table, "topic", where), f"{where}.topic"),
        frequency=frequency,
        participants=participants,
        entities=_as_pair_list(table.get("entities", []), f"{where}.entities"),
        actions=actions,
    )


def _parse_generation(table: dict, config_dir: Path) -> GenerationSettings:
    where = "settings.generation"
    _check_keys(
        table,
        {
            "backend", "endpoint", "model_name", "decoding", "temperature", "shots",
            "example_paths", "max_context_summaries", "summary_length_limit",
            "max_prompt_tokens", "max_output_tokens", "max_backend_calls",
        },
        where,
    )
    backend = _as_str(table.get("backend", "mock"), f"{where}.backend")
    if backend not in BACKENDS:
        raise ConfigSyntaxError(f"{where}.backend must be one of {sorted(BACKENDS)}, got {backend!r}")
    decoding = _as_str(table.get("decoding", "greedy"), f"{where}.decoding")
    if decoding not in DECODINGS:
        raise ConfigSyntaxError(f"{where}.decoding must be one of {sorted(DECODINGS)}, got {decoding!r}")
    temperature = _as_number(table.get("temperature", 0.8), f"{where}.temperature")
    if temperature < 0:
        raise ValueOutOfRangeError(f"{where}.temperature must be non-negative, got {temperature}")
    shots = _as_int(table.get("shots", 0), f"{where}.shots")
    if shots not in (0, 2):
        raise ValueOutOfRangeError(f"{where}.shots must be 0 or 2, got {shots}")
    endpoint = table.get("endpoint")
    if endpoint is not None:
        endpoint = _as_str(endpoint, f"{where}.endpoint")
    if backend == "http" and not endpoint:
        raise ConfigSyntaxError(f"{where}: backend 'http' requires an endpoint URL")

    example_paths = tuple(
        str((config_dir / p).resolve()) if not Path(p).is_absolute() else p
        for p in _as_str_list(table.get("example_paths", []), f"{where}.example_paths")
    )
    if shots == 2:
        if len(example_paths) < 2:
            raise ConfigSyntaxError(f"{where}: shots=2 requires at least 2 example_paths")
        missing = [p for p in example_paths if not Path(p).is_file()]
        if missing:
            raise ConfigSyntaxError(f"{where}: example file(s) not found: {missing}")

    def positive(key: str, default: int) -> int:
        value = _as_int(table.get(key, default), f"{where}.{key}")
        if value < 1:
            raise ValueOutOfRangeError(f"{where}.{key} must be positive, got {value}")
        return value

    max_backend_calls = _as_int(table.get("max_backend_calls", 0), f"{where}.max_backend_calls")
    if max_backend_calls < 0:
        raise ValueOutOfRangeError(f"{where}.max_backend_calls must be >= 0, got {max_backend_calls}")

    return GenerationSettings(
        backend=backend,
        endpoint=endpoint,
        model_name=_as_str(table.get("model_name", "mock-model"), f"{where}.model_name"),
        decoding=decoding,
        temperature=temperature,
        shots=shots,
        example_paths=example_paths,
        max_context_summaries=positive("max_context_summaries", 3),
        summary_length_limit=positive("summary_length_limit", 400),
        max_prompt_tokens=positive("max_prompt_tokens", 4096),
        max_output_tokens=positive("max_output_tokens", 1024),
        max_backend_calls=max_backend_calls,
    )


def _parse_settings(table: dict, config_dir: Path) -> SimulationSettings:
    where = "settings"
    if not isinstance(table, dict):
        raise ConfigSyntaxError("settings must be a table")
    _check_keys(
        table,
        {"rounds", "seed", "sickness_probability", "max_actions_per_agent_per_round", "generation"},
        where,
    )
    rounds = _as_int(_require(table, "rounds", where), f"{where}.rounds")
    if rounds < 1:
        raise ValueOutOfRangeError(f"{where}.rounds must be positive, got {rounds}")
    seed = _as_int(table.get("seed", 0), f"{where}.seed")
    if not 0 <= seed < 2**64:
        raise ValueOutOfRangeError(f"{where}.seed must fit an unsigned 64-bit integer, got {seed}")
    sickness = _as_number(table.get("sickness_probability", 0.0), f"{where}.sickness_probability")
    if not 0.0 <= sickness <= 1.0:
        raise ValueOutOfRangeError(f"{where}.sickness_probability must lie in [0, 1], got {sickness}")
    max_actions = _as_int(table.get("max_actions_per_agent_per_round", 1), f"{where}.max_actions_per_agent_per_round")
    if max_actions < 1:
        raise ValueOutOfRangeError(f"{where}.max_actions_per_agent_per_round must be positive, got {max_actions}")
    generation_table = table.get("generation", {})
    if not isinstance(generation_table, dict):
        raise ConfigSyntaxError("settings.generation must be a table")
    return SimulationSettings(
        rounds=rounds,
        seed=seed,
        sickness_probability=sickness,
        max_actions_per_agent_per_round=max_actions,
        generation=_parse_generation(generation_table, config_dir),
    )


def _validate_cross_references(config: SimulationConfig) -> None:
    agent_ids = [a.id for a in config.agents]
    if len(set(agent_ids)) != len(agent_ids):
        raise ConfigSyntaxError("duplicate agent ids")
    org_ids = [o.id for o in config.organizations]
    if len(set(org_ids)) != len(org_ids):
        raise ConfigSyntaxError("duplicate organization ids")
    task_ids = [t.id for t in config.tasks]
    if len(set(task_ids)) != len(task_ids):
        raise ConfigSyntaxError("duplicate task ids")

    agents = set(agent_ids)
    orgs = set(org_ids)
    for org in config.organizations:
        if org.kind == "company" and org.parent is not None:
            raise ConfigSyntaxError(f"company {org.id!r} must not declare a parent")
        if org.parent is not None:
            if org.parent not in orgs:
                raise UnknownReferenceError(org.parent, f"parent of organization {org.id!r}")
            if config.organization_by_id(org.parent).kind != "company":
                raise ConfigSyntaxError(f"department {org.id!r} parent must be a company")
    for agent in config.agents:
        if agent.organization not in orgs:
            raise UnknownReferenceError(agent.organization, f"organization of agent {agent.id!r}")
        for relation, target in agent.relationships:
            if target not in agents:
                raise UnknownReferenceError(target, f"relationship {relation!r} of agent {agent.id!r}")
    for task in config.tasks:
        for participant in task.participants:
            if participant != SAMPLED and participant not in agents:
                raise UnknownReferenceError(participant, f"participant of task {task.id!r}")


def parse_config(path: str | Path) -> SimulationConfig:
    """Parse and fully validate a TOML configuration file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigSyntaxError(f"{path}: {exc}") from exc

    _check_keys(raw, {"settings", "agent", "organization", "task"}, "top level")
    settings = _parse_settings(_require(raw, "settings", "top level"), path.parent)

    def table_list(key: str) -> list:
        value = raw.get(key, [])
        if not isinstance(value, list):
            raise ConfigSyntaxError(f"[[{key}]] must be an array of tables")
        return value

    agents = tuple(_parse_agent(t, i) for i, t in enumerate(table_list("agent")))
    if not agents:
        raise ConfigSyntaxError("at least one [[agent]] is required")
    organizations = tuple(_parse_organization(t, i) for i, t in enumerate(table_list("organization")))
    if not organizations:
        raise ConfigSyntaxError("at least one [[organization]] is required")
    tasks = tuple(_parse_task(t, i) for i, t in enumerate(table_list("task")))

    config = SimulationConfig(agents=agents, organizations=organizations, tasks=tasks, settings=settings)
    _validate_cross_references(config)
    return config


def resolve_sampled_parameters(config: SimulationConfig, seed: int) -> SimulationConfig:
    """Replace every "sampled" participant slot with a concrete agent id.

    Draws are deterministic for a given seed: one stream, tasks visited in
    declaration order, candidates kept in agent declaration order, sampling
    without replacement and never repeating an explicitly named participant.
    """
    if all(SAMPLED not in task.participants for task in config.tasks):
        return config

    rng = derive_stream(seed, "participants")
    resolved_tasks = []
    for task in config.tasks:
        slots = task.participants.count(SAMPLED)
        if slots == 0:
            resolved_tasks.append(task)
            continue
        named = {p for p in task.participants if p != SAMPLED}
        candidates = [a.id for a in config.agents if a.id not in named]
        if slots > len(candidates):
            raise ExhaustionError(
                f"task {task.id!r} needs {slots} sampled participant(s) "
                f"but only {len(candidates)} unassigned agent(s) exist"
            )
        drawn = iter(rng.sample(candidates, slots))
        participants = tuple(next(drawn) if p == SAMPLED else p for p in task.participants)
        resolved_tasks.append(replace(task, participants=participants))
    return replace(config, tasks=tuple(resolved_tasks))
