"""Step semantics: enabledness, trap entry, rule firing, runs, traces."""

import random

import pytest

from phasecoord.changeset import ChangeSet
from phasecoord.engine import (
    DetailedStep,
    NotEnabled,
    RandomPolicy,
    ReplayDivergence,
    RuleStep,
    config_digest,
    enabled_detailed,
    enabled_rules,
    entered_traps,
    export_trace_jsonl,
    fire_rule,
    parse_trace_labels,
    replay,
    rule_blocker,
    run,
    step_detailed,
    successors,
)
from phasecoord.model import (
    TRIV,
    Configuration,
    ConsistencyRule,
    Partition,
    Phase,
    RoleTransfer,
    Std,
    StdModel,
    Transition,
    Trap,
    initial_configuration,
    validate_configuration,
    validate_model,
)

from tests.genmodels import random_initial, random_model


def T(s, a, t):
    return Transition(s, a, t)


def one_role_model(claimed=False):
    """Single component, one partition, one outgoing transition."""
    go = T("A", "go", "B")
    ph = Phase("P", frozenset({"A", "B"}), frozenset({go}), (Trap("done", frozenset({"B"})),))
    comp = Std("X", frozenset({"A", "B"}), frozenset({"go"}), frozenset({go}), "A",
               (Partition("r", (ph,), "P"),))
    rules = {}
    if claimed:
        rules["claimer"] = ConsistencyRule(
            "claimer", "X", go,
            (RoleTransfer("X", "r", "P", "done", "P"),),
        )
    return StdModel({"X": comp}, rules, {}, 0)


class TestEnabledDetailed:
    def test_sole_transition_enabled(self):
        model = one_role_model()
        config = initial_configuration(model)
        assert enabled_detailed(model, config, "X") == {T("A", "go", "B")}

    def test_intersection_semantics(self):
        # second partition whose current phase lacks the transition
        go = T("A", "go", "B")
        ph_full = Phase("P", frozenset({"A", "B"}), frozenset({go}))
        ph_empty = Phase("Q", frozenset({"A", "B"}), frozenset())
        comp = Std("X", frozenset({"A", "B"}), frozenset({"go"}), frozenset({go}), "A",
                   (Partition("r1", (ph_full,), "P"), Partition("r2", (ph_empty,), "Q")))
        model = StdModel({"X": comp}, {}, {}, 0)
        config = initial_configuration(model)
        assert enabled_detailed(model, config, "X") == set()

    def test_claimed_step_excluded(self):
        # the claiming rule guards on a trap its own step can never reach
        # while enabled, so the component is fully silenced in strict mode
        model = one_role_model(claimed=True)
        config = initial_configuration(model)
        assert enabled_detailed(model, config, "X") == set()
        assert [r.name for r in enabled_rules(model, config)] == []  # trap not entered at A
        at_b = Configuration({"X": "B"}, {("X", "r"): "P"}, 0)
        assert [r.name for r in enabled_rules(model, at_b)] == []  # manager no longer at A

    def test_unknown_component(self):
        model = one_role_model()
        with pytest.raises(Exception):
            enabled_detailed(model, initial_configuration(model), "nope")

    def test_permissive_mode_frees_unfireable_claims(self):
        model = one_role_model(claimed=True)
        config = initial_configuration(model)
        # strict: nothing; permissive: the claiming rule is disabled (trap not
        # entered), so the transition fires freely
        assert enabled_detailed(model, config, "X") == set()
        assert enabled_detailed(model, config, "X", permissive=True) == {T("A", "go", "B")}
        at_b = Configuration({"X": "B"}, {("X", "r"): "P"}, 0)
        assert enabled_detailed(model, at_b, "X", permissive=True) == set()


class TestEnteredTraps:
    def test_state_in_named_trap(self):
        model = one_role_model()
        config = Configuration({"X": "B"}, {("X", "r"): "P"}, 0)
        assert entered_traps(model, config, "X", "r") == {TRIV, "done"}

    def test_state_outside_named_trap(self):
        model = one_role_model()
        config = initial_configuration(model)
        assert entered_traps(model, config, "X", "r") == {TRIV}

    def test_nested_traps_both_entered(self):
        go = T("A", "go", "B")
        stay = T("B", "stay", "C")
        ph = Phase(
            "P", frozenset({"A", "B", "C"}), frozenset({go, stay}),
            (Trap("t2", frozenset({"B", "C"})), Trap("t1", frozenset({"C"}))),
        )
        comp = Std("X", frozenset({"A", "B", "C"}), frozenset({"go", "stay"}),
                   frozenset({go, stay}), "A", (Partition("r", (ph,), "P"),))
        model = StdModel({"X": comp}, {}, {}, 0)
        assert validate_model(model) == []
        config = Configuration({"X": "C"}, {("X", "r"): "P"}, 0)
        assert entered_traps(model, config, "X", "r") == {TRIV, "t1", "t2"}


def scheduler_worker_model():
    """Tiny manager/employee pair for rule-firing tests."""
    ask = T("OutCS", "request", "Waiting")
    enter = T("Waiting", "enter", "InCS")
    leave = T("InCS", "exit", "OutCS")
    free = Phase("Free", frozenset({"OutCS", "Waiting"}), frozenset({ask}),
                 (Trap("asking", frozenset({"Waiting"})),))
    crit = Phase("Crit", frozenset({"OutCS", "Waiting", "InCS"}), frozenset({enter, leave}),
                 (Trap("done", frozenset({"OutCS"})),))
    worker = Std("W", frozenset({"OutCS", "Waiting", "InCS"}),
                 frozenset({"request", "enter", "exit"}), frozenset({ask, enter, leave}),
                 "OutCS", (Partition("cs", (free, crit), "Free"),))
    grant = T("Idle", "grant", "Busy")
    reclaim = T("Busy", "reclaim", "Idle")
    sched = Std("S", frozenset({"Idle", "Busy"}), frozenset({"grant", "reclaim"}),
                frozenset({grant, reclaim}), "Idle")
    rules = {
        "admit": ConsistencyRule("admit", "S", grant,
                                 (RoleTransfer("W", "cs", "Free", "asking", "Crit"),)),
        "release": ConsistencyRule("release", "S", reclaim,
                                   (RoleTransfer("W", "cs", "Crit", "done", "Free"),)),
    }
    model = StdModel({"W": worker, "S": sched}, rules, {}, 0)
    assert validate_model(model) == []
    return model


class TestRules:
    def test_rule_enabled_when_trap_entered(self):
        model = scheduler_worker_model()
        config = Configuration({"W": "Waiting", "S": "Idle"},
                               {("W", "cs"): "Free"}, 0)
        assert [r.name for r in enabled_rules(model, config)] == ["admit"]

    def test_rule_disabled_after_transfer(self):
        model = scheduler_worker_model()
        config = Configuration({"W": "Waiting", "S": "Busy"},
                               {("W", "cs"): "Crit"}, 0)
        assert [r.name for r in enabled_rules(model, config)] == []

    def test_fire_rule_updates_phase_and_manager(self):
        model = scheduler_worker_model()
        config = Configuration({"W": "Waiting", "S": "Idle"}, {("W", "cs"): "Free"}, 0)
        new_model, out = fire_rule(model, config, model.rules["admit"])
        assert new_model is model  # no changeset, same model value
        assert out.detailed["S"] == "Busy"
        assert out.phases[("W", "cs")] == "Crit"
        assert out.detailed["W"] == "Waiting"  # employee's detailed state untouched
        assert validate_configuration(new_model, out) == []

    def test_fire_not_enabled(self):
        model = scheduler_worker_model()
        config = initial_configuration(model)
        with pytest.raises(NotEnabled):
            fire_rule(model, config, model.rules["admit"])

    def test_rule_with_changeset_bumps_version(self):
        model = scheduler_worker_model()
        grow = ChangeSet(set_variables=(("note", 1),))
        rules = dict(model.rules)
        rules["admit"] = ConsistencyRule(
            "admit", "S", T("Idle", "grant", "Busy"),
            (RoleTransfer("W", "cs", "Free", "asking", "Crit"),),
            change=grow,
        )
        model2 = StdModel(model.components, rules, {}, 0)
        config = Configuration({"W": "Waiting", "S": "Idle"}, {("W", "cs"): "Free"}, 0)
        new_model, out = fire_rule(model2, config, rules["admit"])
        assert new_model.version == 1 and out.model_version == 1
        assert new_model.variables["note"] == 1
        # new rule set visible immediately
        assert "admit" in new_model.rules

    def test_self_transfer_updates_both_atomically(self):
        # manager transfers its own role while stepping
        go = T("A", "go", "B")
        back = T("B", "back", "A")
        p1 = Phase("P1", frozenset({"A", "B"}), frozenset({go}))
        p2 = Phase("P2", frozenset({"A", "B"}), frozenset({back}))
        comp = Std("M", frozenset({"A", "B"}), frozenset({"go", "back"}),
                   frozenset({go, back}), "A", (Partition("evol", (p1, p2), "P1"),))
        rule = ConsistencyRule("swap", "M", go,
                               (RoleTransfer("M", "evol", "P1", TRIV, "P2"),))
        model = StdModel({"M": comp}, {"swap": rule}, {}, 0)
        assert validate_model(model) == []
        config = initial_configuration(model)
        _, out = fire_rule(model, config, rule)
        assert out.detailed["M"] == "B"
        assert out.phases[("M", "evol")] == "P2"
        assert validate_configuration(model, out) == []

    def test_rejected_changeset_disables_rule(self):
        # clause that would remove the phase the worker is being moved into
        model = scheduler_worker_model()
        bad = ChangeSet(remove_phases=(("W", "cs", "Crit"),))
        rules = dict(model.rules)
        rules["admit"] = ConsistencyRule(
            "admit", "S", T("Idle", "grant", "Busy"),
            (RoleTransfer("W", "cs", "Free", "asking", "Crit"),),
            change=bad,
        )
        model2 = StdModel(model.components, rules, {}, 0)
        config = Configuration({"W": "Waiting", "S": "Idle"}, {("W", "cs"): "Free"}, 0)
        assert [r.name for r in enabled_rules(model2, config)] == []
        reason = rule_blocker(model2, config, rules["admit"])
        assert reason is not None and "changeset rejected" in reason


class TestStepDetailed:
    def test_step(self):
        model = one_role_model()
        config = initial_configuration(model)
        out = step_detailed(model, config, "X", T("A", "go", "B"))
        assert out.detailed["X"] == "B"
        assert out.phases == config.phases

    def test_self_loop_preserves_configuration(self):
        tick = T("A", "tick", "A")
        ph = Phase("P", frozenset({"A"}), frozenset({tick}))
        comp = Std("X", frozenset({"A"}), frozenset({"tick"}), frozenset({tick}), "A",
                   (Partition("r", (ph,), "P"),))
        model = StdModel({"X": comp}, {}, {}, 0)
        config = initial_configuration(model)
        out = step_detailed(model, config, "X", tick)
        assert out.key() == config.key()

    def test_disabled_transition_rejected(self):
        model = one_role_model()
        config = Configuration({"X": "B"}, {("X", "r"): "P"}, 0)
        with pytest.raises(NotEnabled):
            step_detailed(model, config, "X", T("A", "go", "B"))


class TestSuccessors:
    def test_counts_and_order(self):
        model = scheduler_worker_model()
        config = Configuration({"W": "Waiting", "S": "Idle"}, {("W", "cs"): "Free"}, 0)
        succ = successors(model, config)
        # no detailed steps (W waits, S's steps are claimed), one rule
        assert [s[0] for s in succ] == [
            RuleStep("admit", "S", T("Idle", "grant", "Busy"),
                     (RoleTransfer("W", "cs", "Free", "asking", "Crit"),), False)
        ]

    def test_deadlock_empty(self):
        comp = Std("X", frozenset({"A"}), frozenset(), frozenset(), "A")
        model = StdModel({"X": comp}, {}, {}, 0)
        assert successors(model, initial_configuration(model)) == []

    def test_deterministic_order(self):
        for seed in range(50):
            model = random_model(seed)
            config = random_initial(model)
            a = [s[0] for s in successors(model, config)]
            b = [s[0] for s in successors(model, config)]
            assert a == b


class TestRun:
    def test_zero_steps_empty_trace(self):
        model = scheduler_worker_model()
        trace = run(model, initial_configuration(model), RandomPolicy(42), max_steps=0)
        assert len(trace) == 0
        assert trace.final_model_version == 0

    def test_same_seed_same_trace(self):
        model = scheduler_worker_model()
        config = initial_configuration(model)
        t1 = run(model, config, RandomPolicy(7), max_steps=60)
        t2 = run(model, config, RandomPolicy(7), max_steps=60)
        assert t1 == t2

    def test_scripted_replay_and_divergence(self):
        model = scheduler_worker_model()
        config = initial_configuration(model)
        trace = run(model, config, RandomPolicy(3), max_steps=40)
        again = replay(model, config, trace.labels())
        assert again.steps == trace.steps
        bogus = [DetailedStep("W", T("InCS", "exit", "OutCS"))] + list(trace.labels())
        with pytest.raises(ReplayDivergence) as err:
            replay(model, config, bogus)
        assert err.value.index == 0

    def test_trace_jsonl_round_trip(self):
        model = scheduler_worker_model()
        config = initial_configuration(model)
        trace = run(model, config, RandomPolicy(9), max_steps=30)
        text = export_trace_jsonl(model, trace)
        lines = text.strip().splitlines()
        assert len(lines) == len(trace.steps) + 1  # header line for the initial state
        labels = parse_trace_labels(text)
        assert labels == list(trace.labels())
        assert replay(model, config, labels).steps == trace.steps


class TestWalkInvariants:
    """Random-walk suite: validity after every step, phase constraint, trap
    monotonicity between transfers of a role."""

    def test_random_walks(self):
        walks = 0
        for seed in range(250):
            model = random_model(seed)
            config = random_initial(model)
            rng = random.Random(seed * 31 + 1)
            tracked = [
                (c, p.name) for c, s in model.components.items() for p in s.partitions
            ]
            entered = {
                role: entered_traps(model, config, role[0], role[1]) for role in tracked
            }
            for _ in range(40):
                succ = successors(model, config)
                if not succ:
                    break
                label, model2, config2 = succ[rng.randrange(len(succ))]
                assert validate_configuration(model2, config2) == []
                if isinstance(label, DetailedStep):
                    comp = model.components[label.component]
                    for part in comp.partitions:
                        phase = part.phase_named(config.phases[(label.component, part.name)])
                        assert label.transition in phase.transitions
                moved = set()
                if isinstance(label, RuleStep):
                    moved = {(t.component, t.partition) for t in label.transfers}
                model, config = model2, config2
                for role in tracked:
                    if role not in config.phases:
                        continue
                    now = entered_traps(model, config, role[0], role[1])
                    if role in moved or isinstance(label, RuleStep) and label.changed:
                        entered[role] = now
                    else:
                        assert entered[role] <= now, (role, entered[role], now)
                        entered[role] = now
                walks += 1
        assert walks > 200


def test_digest_is_stable_and_version_sensitive():
    config = Configuration({"X": "A"}, {("X", "r"): "P"}, 0)
    assert config_digest(config) == config_digest(Configuration({"X": "A"}, {("X", "r"): "P"}, 0))
    bumped = Configuration({"X": "A"}, {("X", "r"): "P"}, 1)
    assert config_digest(config) != config_digest(bumped)


def test_empty_transfer_rule_is_a_managed_step():
    go = T("A", "go", "B")
    comp = Std("X", frozenset({"A", "B"}), frozenset({"go"}), frozenset({go}), "A")
    rule = ConsistencyRule("solo", "X", go, ())
    model = StdModel({"X": comp}, {"solo": rule}, {}, 0)
    assert validate_model(model) == []
    config = initial_configuration(model)
    assert enabled_detailed(model, config, "X") == set()  # claimed
    assert [r.name for r in enabled_rules(model, config)] == ["solo"]
