from __future__ import annotations

import pytest

from knowogen.config import (
    ActionSpec,
    AgentProfile,
    GenerationSettings,
    Organization,
    SimulationConfig,
    SimulationSettings,
    TaskTemplate,
)

MINIMAL_TOML = """
[settings]
rounds = 3
seed = 42

[settings.generation]
backend = "mock"

[[organization]]
id = "acme"
name = "Acme GmbH"
kind = "company"
domain = "logistics software"

[[agent]]
id = "ana"
name = "Ana Ortiz"
job_role = "project manager"
organization = "acme"

[[task]]
id = "status"
topic = "weekly status"
frequency = 1
participants = ["ana"]

[[task.action]]
id = "draft"
action_type = "authoring"
duration = 1
type_params = { document_type = "email" }
"""


def make_agents(n: int, organization: str = "acme", rules: tuple[str, ...] = ()) -> tuple[AgentProfile, ...]:
    names = ["Ana Ortiz", "Ben Tan", "Cleo Faro", "Dan Ike", "Eva Juhl", "Finn Oda", "Gia Pell", "Hal Quon"]
    return tuple(
        AgentProfile(
            id=f"a{i}",
            name=names[i % len(names)],
            job_role="knowledge worker",
            organization=organization,
            behavior_rules=rules,
        )
        for i in range(n)
    )


def make_task(
    task_id: str = "t",
    actions: tuple[ActionSpec, ...] = (),
    participants: tuple[str, ...] = ("a0",),
    frequency: int = 1,
    topic: str = "quarterly planning",
    entities: tuple[tuple[str, str], ...] = (),
) -> TaskTemplate:
    if not actions:
        actions = (authoring("draft"),)
    return TaskTemplate(
        id=task_id,
        topic=topic,
        frequency=frequency,
        participants=participants,
        entities=entities,
        actions=actions,
    )


def authoring(action_id: str, document_type: str = "email", duration: int = 1, depends_on: tuple[str, ...] = ()) -> ActionSpec:
    return ActionSpec(
        id=action_id,
        action_type="authoring",
        duration=duration,
        depends_on=depends_on,
        type_params={"document_type": document_type},
    )


def trace_action(action_id: str, action_type: str = "filing", depends_on: tuple[str, ...] = (), duration: int = 1) -> ActionSpec:
    return ActionSpec(id=action_id, action_type=action_type, duration=duration, depends_on=depends_on)


def make_config(
    agents: tuple[AgentProfile, ...] | None = None,
    tasks: tuple[TaskTemplate, ...] = (),
    rounds: int = 5,
    seed: int = 42,
    sickness_probability: float = 0.0,
    max_actions: int = 2,
    generation: GenerationSettings | None = None,
) -> SimulationConfig:
    if agents is None:
        agents = make_agents(2)
    return SimulationConfig(
        agents=agents,
        organizations=(Organization(id="acme", name="Acme GmbH", kind="company", domain="logistics"),),
        tasks=tasks,
        settings=SimulationSettings(
            rounds=rounds,
            seed=seed,
            sickness_probability=sickness_probability,
            max_actions_per_agent_per_round=max_actions,
            generation=generation or GenerationSettings(),
        ),
    )


@pytest.fixture
def minimal_toml(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(MINIMAL_TOML, encoding="utf-8")
    return path
