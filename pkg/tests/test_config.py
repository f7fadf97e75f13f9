from __future__ import annotations

import dataclasses
import pathlib

import pytest

from knowogen.config import SAMPLED, parse_config, resolve_sampled_parameters
from knowogen.errors import (
    ConfigSyntaxError,
    DependencyCycleError,
    ExhaustionError,
    UnknownReferenceError,
    ValueOutOfRangeError,
)

from .conftest import MINIMAL_TOML, make_agents, make_config, make_task


def write(tmp_path, text):
    path = tmp_path / "config.toml"
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_config_parses(minimal_toml):
    config = parse_config(minimal_toml)
    assert len(config.agents) == 1
    assert len(config.organizations) == 1
    assert len(config.tasks) == 1
    assert config.settings.rounds == 3
    assert config.settings.seed == 42
    task = config.tasks[0]
    assert task.actions[0].document_type == "email"


def test_malformed_toml(tmp_path):
    with pytest.raises(ConfigSyntaxError):
        parse_config(write(tmp_path, "[settings\nrounds = 3"))


def test_unknown_top_level_key(tmp_path):
    with pytest.raises(ConfigSyntaxError, match="unknown key"):
        parse_config(write(tmp_path, MINIMAL_TOML + "\n[extra]\nx = 1\n"))


def test_unknown_agent_key_rejected(tmp_path):
    text = MINIMAL_TOML.replace('job_role = "project manager"', 'job_role = "pm"\nfavourite_colour = "blue"')
    with pytest.raises(ConfigSyntaxError, match="favourite_colour"):
        parse_config(write(tmp_path, text))


def test_dependency_cycle(tmp_path):
    text = MINIMAL_TOML + """
[[task]]
id = "loop"
topic = "circular work"
frequency = 1
participants = ["ana"]

[[task.action]]
id = "a"
action_type = "authoring"
depends_on = ["b"]
type_params = { document_type = "email" }

[[task.action]]
id = "b"
action_type = "authoring"
depends_on = ["a"]
type_params = { document_type = "email" }
"""
    with pytest.raises(DependencyCycleError) as excinfo:
        parse_config(write(tmp_path, text))
    assert set(excinfo.value.cycle) == {"a", "b"}


def test_unknown_participant(tmp_path):
    text = MINIMAL_TOML.replace('participants = ["ana"]', 'participants = ["alice"]')
    with pytest.raises(UnknownReferenceError) as excinfo:
        parse_config(write(tmp_path, text))
    assert excinfo.value.reference == "alice"


def test_unknown_dependency(tmp_path):
    text = MINIMAL_TOML.replace('id = "draft"', 'id = "draft"\ndepends_on = ["ghost"]')
    with pytest.raises(UnknownReferenceError) as excinfo:
        parse_config(write(tmp_path, text))
    assert excinfo.value.reference == "ghost"


def test_sickness_probability_out_of_range(tmp_path):
    text = MINIMAL_TOML.replace("seed = 42", "seed = 42\nsickness_probability = 1.5")
    with pytest.raises(ValueOutOfRangeError):
        parse_config(write(tmp_path, text))


def test_non_positive_duration(tmp_path):
    text = MINIMAL_TOML.replace("duration = 1", "duration = 0")
    with pytest.raises(ValueOutOfRangeError):
        parse_config(write(tmp_path, text))


def test_negative_frequency(tmp_path):
    text = MINIMAL_TOML.replace("frequency = 1", "frequency = -1")
    with pytest.raises(ValueOutOfRangeError):
        parse_config(write(tmp_path, text))


def test_seed_must_fit_64_bits(tmp_path):
    text = MINIMAL_TOML.replace("seed = 42", f"seed = {2**64}")
    with pytest.raises(ValueOutOfRangeError):
        parse_config(write(tmp_path, text))


def test_authoring_requires_document_type(tmp_path):
    text = MINIMAL_TOML.replace('type_params = { document_type = "email" }', "")
    with pytest.raises(ConfigSyntaxError, match="document_type"):
        parse_config(write(tmp_path, text))


def test_company_must_not_have_parent(tmp_path):
    text = MINIMAL_TOML.replace('kind = "company"', 'kind = "company"\nparent = "acme"')
    with pytest.raises(ConfigSyntaxError, match="parent"):
        parse_config(write(tmp_path, text))


def test_department_parent_must_be_company(tmp_path):
    text = MINIMAL_TOML + """
[[organization]]
id = "dev"
name = "Development"
kind = "department"
parent = "ops"

[[organization]]
id = "ops"
name = "Operations"
kind = "department"
parent = "acme"
"""
    with pytest.raises(ConfigSyntaxError, match="must be a company"):
        parse_config(write(tmp_path, text))


def test_unknown_agent_organization(tmp_path):
    text = MINIMAL_TOML.replace('organization = "acme"', 'organization = "nowhere"')
    with pytest.raises(UnknownReferenceError) as excinfo:
        parse_config(write(tmp_path, text))
    assert excinfo.value.reference == "nowhere"


def test_unknown_relationship_target(tmp_path):
    text = MINIMAL_TOML.replace(
        'job_role = "project manager"',
        'job_role = "pm"\nrelationships = [["boss_of", "ghost"]]',
    )
    with pytest.raises(UnknownReferenceError) as excinfo:
        parse_config(write(tmp_path, text))
    assert excinfo.value.reference == "ghost"


def test_agent_id_sampled_is_reserved(tmp_path):
    text = MINIMAL_TOML.replace('id = "ana"', 'id = "sampled"', 1)
    with pytest.raises(ConfigSyntaxError, match="reserved"):
        parse_config(write(tmp_path, text))


def test_duplicate_agent_ids(tmp_path):
    duplicate = """
[[agent]]
id = "ana"
name = "Second Ana"
job_role = "designer"
organization = "acme"
"""
    with pytest.raises(ConfigSyntaxError, match="duplicate agent ids"):
        parse_config(write(tmp_path, MINIMAL_TOML + duplicate))


def test_http_backend_requires_endpoint(tmp_path):
    text = MINIMAL_TOML.replace('backend = "mock"', 'backend = "http"')
    with pytest.raises(ConfigSyntaxError, match="endpoint"):
        parse_config(write(tmp_path, text))


def test_shots_two_requires_two_examples(tmp_path):
    text = MINIMAL_TOML.replace('backend = "mock"', 'backend = "mock"\nshots = 2')
    with pytest.raises(ConfigSyntaxError, match="example_paths"):
        parse_config(write(tmp_path, text))


def test_shots_two_with_examples_resolves_relative_paths(tmp_path):
    (tmp_path / "ex1.html").write_text("<p>one</p>")
    (tmp_path / "ex2.html").write_text("<p>two</p>")
    text = MINIMAL_TOML.replace(
        'backend = "mock"',
        'backend = "mock"\nshots = 2\nexample_paths = ["ex1.html", "ex2.html"]',
    )
    config = parse_config(write(tmp_path, text))
    assert all(p.startswith(str(tmp_path)) for p in config.settings.generation.example_paths)


def test_missing_example_file(tmp_path):
    (tmp_path / "ex1.html").write_text("<p>one</p>")
    text = MINIMAL_TOML.replace(
        'backend = "mock"',
        'backend = "mock"\nshots = 2\nexample_paths = ["ex1.html", "ex2.html"]',
    )
    with pytest.raises(ConfigSyntaxError, match="not found"):
        parse_config(write(tmp_path, text))


def test_absent_participants_defaults_to_one_sampled_slot(tmp_path):
    text = MINIMAL_TOML.replace('participants = ["ana"]\n', "")
    config = parse_config(write(tmp_path, text))
    assert config.tasks[0].participants == (SAMPLED,)


def test_empty_participants_rejected(tmp_path):
    text = MINIMAL_TOML.replace('participants = ["ana"]', "participants = []")
    with pytest.raises(ConfigSyntaxError, match="participant"):
        parse_config(write(tmp_path, text))


# -- resolve_sampled_parameters ------------------------------------------------


def test_resolution_is_deterministic():
    config = make_config(
        agents=make_agents(3),
        tasks=(make_task(participants=(SAMPLED, SAMPLED)),),
    )
    first = resolve_sampled_parameters(config, 7)
    second = resolve_sampled_parameters(config, 7)
    assert first == second
    assert SAMPLED not in first.tasks[0].participants
    assert len(set(first.tasks[0].participants)) == 2


def test_resolution_depends_on_seed():
    config = make_config(
        agents=make_agents(8),
        tasks=(make_task(participants=(SAMPLED, SAMPLED, SAMPLED)),),
    )
    outcomes = {resolve_sampled_parameters(config, seed).tasks[0].participants for seed in range(20)}
    assert len(outcomes) > 1


def test_resolution_exhaustion():
    config = make_config(
        agents=make_agents(3),
        tasks=(make_task(participants=(SAMPLED,) * 5),),
    )
    with pytest.raises(ExhaustionError):
        resolve_sampled_parameters(config, 7)


def test_resolution_keeps_named_participants():
    config = make_config(
        agents=make_agents(3),
        tasks=(make_task(participants=("a1", SAMPLED)),),
    )
    resolved = resolve_sampled_parameters(config, 11)
    participants = resolved.tasks[0].participants
    assert participants[0] == "a1"
    assert participants[1] in {"a0", "a2"}


def test_resolution_identity_without_sampled_slots():
    config = make_config(
        agents=make_agents(2),
        tasks=(make_task(participants=("a0", "a1")),),
    )
    assert resolve_sampled_parameters(config, 3) is config


def test_config_is_immutable(minimal_toml):
    config = parse_config(minimal_toml)
    with pytest.raises(dataclasses.FrozenInstanceError):
        config.settings = None


def test_shipped_example_config_is_valid():
    example = pathlib.Path(__file__).parent.parent / "docs" / "example_config.toml"
    config = parse_config(example)
    assert len(config.agents) == 3
    assert len(config.tasks) == 2
    resolved = resolve_sampled_parameters(config, config.settings.seed)
    assert all(SAMPLED not in t.participants for t in resolved.tasks)
