from __future__ import annotations

import pytest

from knowogen.config import GenerationSettings
from knowogen.corpus import DocumentArtifact
from knowogen.errors import BudgetExceededError
from knowogen.rng import derive_stream
from knowogen.scheduler import (
    SimulationLog,
    derive_followups,
    instantiate_tasks,
    run_simulation,
)
from knowogen.textgen import MockBackend

from .conftest import authoring, make_agents, make_config, make_task, trace_action

ASK = ("mock:ask-question",)


def chain_task(task_id="t", participants=("a0",), duration=1):
    return make_task(
        task_id,
        actions=(
            authoring("a", duration=duration),
            authoring("b", duration=duration, depends_on=("a",)),
        ),
        participants=participants,
    )


# -- instantiate_tasks ----------------------------------------------------------


def test_frequency_three_makes_three_instances():
    config = make_config(tasks=(make_task(frequency=3),))
    instances = instantiate_tasks(config)
    assert len(instances) == 3
    assert len({i.uid for i in instances}) == 3
    assert all(len(i.actions) == 1 for i in instances)


def test_frequency_zero_makes_none():
    config = make_config(tasks=(make_task(frequency=0),))
    assert instantiate_tasks(config) == []


def test_frequencies_add_up():
    config = make_config(tasks=(make_task("x", frequency=1), make_task("y", frequency=2)))
    assert len(instantiate_tasks(config)) == 3


def test_assignees_round_robin_over_participants():
    task = make_task(
        actions=(authoring("a"), authoring("b"), authoring("c")),
        participants=("a0", "a1"),
    )
    config = make_config(tasks=(task,))
    actions = instantiate_tasks(config)[0].actions
    assert [a.assignee for a in actions] == ["a0", "a1", "a0"]


# -- run_simulation -------------------------------------------------------------


def test_dependency_chain_executes_in_order():
    config = make_config(tasks=(chain_task(),), rounds=3, max_actions=1)
    log = run_simulation(config, MockBackend())
    by_uid = {a.uid: a for a in log.completed_actions}
    a = by_uid["task-t-0001/a"]
    b = by_uid["task-t-0001/b"]
    assert (a.started_round, a.finished_round) == (1, 1)
    assert (b.started_round, b.finished_round) == (2, 2)


def test_zero_sickness_schedules_everything():
    config = make_config(
        tasks=(make_task("x", frequency=2), make_task("y", frequency=2)),
        rounds=4,
        sickness_probability=0.0,
    )
    log = run_simulation(config, MockBackend())
    assert len(log.completed_actions) >= 4
    assert all(a.status == "done" for i in log.task_instances for a in i.actions)


def test_full_sickness_schedules_nothing():
    config = make_config(tasks=(make_task(),), rounds=4, sickness_probability=1.0)
    log = run_simulation(config, MockBackend())
    assert log.completed_actions == []
    assert log.documents == []


def test_multi_round_action_spans_rounds():
    config = make_config(tasks=(make_task(actions=(authoring("slow", duration=3),)),), rounds=5)
    log = run_simulation(config, MockBackend())
    action = log.completed_actions[0]
    assert (action.started_round, action.finished_round) == (1, 3)
    assert log.documents[0].round == 3


def test_capacity_defers_second_action():
    task = make_task(actions=(authoring("a"), authoring("b")), participants=("a0",))
    config = make_config(tasks=(task,), rounds=3, max_actions=1)
    log = run_simulation(config, MockBackend())
    by_uid = {a.uid: a for a in log.completed_actions}
    assert by_uid["task-t-0001/a"].finished_round == 1
    assert by_uid["task-t-0001/b"].finished_round == 2


def test_sick_agent_pauses_and_resumes():
    # find a seed whose sickness stream at p=0.5 gives healthy, sick, healthy
    p = 0.5

    def pattern(s):
        rng = derive_stream(s, "sickness")
        return [rng.random() < p for _ in range(3)]

    seed = next(s for s in range(1000) if pattern(s) == [False, True, False])
    config = make_config(
        tasks=(make_task(actions=(authoring("slow", duration=2),)),),
        agents=make_agents(1),
        rounds=4,
        seed=seed,
        sickness_probability=p,
    )
    log = run_simulation(config, MockBackend())
    action = log.completed_actions[0]
    assert action.started_round == 1
    assert action.finished_round == 3  # paused during round 2


def test_trace_only_actions_emit_traces():
    task = make_task(
        actions=(
            authoring("draft"),
            trace_action("file", "filing", depends_on=("draft",)),
            trace_action("search", "information_search"),
        ),
        participants=("a0", "a1"),
        topic="atlas rollout",
    )
    config = make_config(tasks=(task,), rounds=4)
    log = run_simulation(config, MockBackend())
    kinds = {t.kind for t in log.traces}
    assert kinds == {"filed_document", "search"}
    filed = next(t for t in log.traces if t.kind == "filed_document")
    assert filed.subject_document == log.documents[0].uid
    assert filed.payload["folder"] == "/acme/atlas rollout/"
    search = next(t for t in log.traces if t.kind == "search")
    assert search.payload["query"] == "atlas rollout"
    assert search.subject_document is None


def test_dissemination_without_document_emits_no_trace():
    config = make_config(tasks=(make_task(actions=(trace_action("d", "dissemination"),)),), rounds=2)
    log = run_simulation(config, MockBackend())
    assert log.traces == []
    assert len(log.completed_actions) == 1


def test_consulted_documents_from_dependencies():
    config = make_config(tasks=(chain_task(),), rounds=3, max_actions=1)
    log = run_simulation(config, MockBackend())
    second = log.documents[1]
    assert second.consulted_documents == (log.documents[0].uid,)
    assert log.documents[0].consulted_documents == ()


def test_consulted_documents_are_earlier():
    config = make_config(
        agents=make_agents(2, rules=ASK),
        tasks=(chain_task(participants=("a0", "a1")),),
        rounds=6,
    )
    log = run_simulation(config, MockBackend())
    produced_round = {d.uid: d.round for d in log.documents}
    for document in log.documents:
        for consulted in document.consulted_documents:
            assert produced_round[consulted] < document.round


def test_determinism_with_mock_backend():
    def run():
        config = make_config(
            agents=make_agents(3, rules=ASK),
            tasks=(chain_task(participants=("a0", "a1")), make_task("solo", frequency=2)),
            rounds=6,
            seed=99,
            sickness_probability=0.3,
        )
        return run_simulation(config, MockBackend())

    first, second = run(), run()
    assert [a.uid for a in first.completed_actions] == [a.uid for a in second.completed_actions]
    assert [(d.uid, d.html, d.prompt_hash) for d in first.documents] == [
        (d.uid, d.html, d.prompt_hash) for d in second.documents
    ]
    assert first.traces == second.traces
    assert first.prompts == second.prompts


def test_conservation_of_actions():
    config = make_config(
        agents=make_agents(2, rules=ASK),
        tasks=(chain_task(participants=("a0", "a1")), make_task("extra", frequency=3)),
        rounds=3,
        sickness_probability=0.4,
        seed=5,
    )
    log = run_simulation(config, MockBackend())
    total = sum(len(i.actions) for i in log.task_instances)
    unfinished = sum(1 for i in log.task_instances for a in i.actions if a.status != "done")
    assert len(log.completed_actions) + unfinished == total
    instantiated = total - len(log.derived_actions)
    assert instantiated == sum(len(i.template.actions) for i in log.task_instances)


def test_backend_budget_enforced():
    config = make_config(
        tasks=(make_task(actions=(authoring("a"), authoring("b")), participants=("a0",)),),
        rounds=3,
        generation=GenerationSettings(max_backend_calls=1),
    )
    with pytest.raises(BudgetExceededError):
        run_simulation(config, MockBackend())


def test_dry_run_produces_no_artifacts():
    config = make_config(tasks=(chain_task(),), rounds=3)
    log = run_simulation(config, backend=None, dry_run=True)
    assert log.documents == []
    assert log.traces == []
    assert log.prompts == {}
    assert len(log.completed_actions) == 2


# -- derive_followups -----------------------------------------------------------


def email_log(html: str, document_type: str = "email"):
    config = make_config(
        tasks=(make_task(participants=("a0", "a1")),),
        agents=make_agents(2),
    )
    instances = instantiate_tasks(config)
    action = instances[0].actions[0]
    action.status = "done"
    action.started_round = action.finished_round = 1
    document = DocumentArtifact(
        uid="doc-0001",
        document_type=document_type,
        html=html,
        producing_action=action.uid,
        consulted_documents=(),
        prompt_hash="0" * 64,
        round=1,
        path="documents/doc-0001.html",
    )
    log = SimulationLog(
        completed_actions=[action],
        documents=[document],
        task_instances=instances,
        rounds_executed=1,
    )
    return config, log, document


def test_question_email_sparks_reply():
    config, log, document = email_log("<p>Can you send the report?</p>")
    replies = derive_followups(document, log, config)
    assert len(replies) == 1
    reply = replies[0]
    assert reply.assignee == "a1"  # first recipient, not the author
    assert reply.depends_on_uids == (document.producing_action,)
    assert reply.template.document_type == "email"
    assert reply.consulted_documents == [document.uid]


def test_question_in_minutes_is_ignored():
    config, log, document = email_log("<p>Who owns this?</p>", document_type="meeting_minutes")
    assert derive_followups(document, log, config) == []


def test_email_without_question_is_ignored():
    config, log, document = email_log("<p>All done.</p>")
    assert derive_followups(document, log, config) == []


def test_quoted_question_lines_are_ignored():
    config, log, document = email_log("<p>Thanks!</p>\n> Can you send the report?\n<p>Done.</p>")
    assert derive_followups(document, log, config) == []


def test_reply_chain_capped_at_depth_three():
    config = make_config(
        agents=make_agents(2, rules=ASK),
        tasks=(make_task(participants=("a0", "a1")),),
        rounds=8,
    )
    log = run_simulation(config, MockBackend())
    assert len(log.derived_actions) == 3
    assert [a.reply_depth for a in log.derived_actions] == [1, 2, 3]
    # every email in the chain asked a question, yet the chain stops
    assert all("?" in d.html for d in log.documents)
    assert len(log.documents) == 4


def test_single_participant_email_has_no_recipient():
    config = make_config(
        agents=make_agents(1, rules=ASK),
        tasks=(make_task(participants=("a0",)),),
        rounds=4,
    )
    log = run_simulation(config, MockBackend())
    assert log.derived_actions == []
