import json
from importlib import resources

import jsonschema
import pytest

from chaincheck.bench import GenSpec, gen_chain
from chaincheck.engine import ATTACK, SECURE
from chaincheck.mitigation import (
    apply_watchlist, enumerate_attacks, exact_hitting_set, greedy_watchlist, mitigate,
)
from chaincheck.model import ACTUATOR, SENSOR, Atom, AttributeDecl, EnumDomain, Escalation, ModelSpec, Or, Rule
from chaincheck.pipeline import run_check

SCHEMA = json.loads(resources.files("chaincheck").joinpath("data/watchlist.schema.json").read_text())
ONOFF = EnumDomain(("ON", "OFF"))


def test_single_chain_gives_the_chain():
    inst = gen_chain(GenSpec(chain_length=4, distractors=0, seed=3))
    enum = enumerate_attacks(inst.model)
    assert enum.complete
    assert enum.rule_sets == [frozenset(inst.chain)]


def test_disjoint_chains():
    attrs = (
        AttributeDecl("s", EnumDomain(("a", "b", "idle")), SENSOR, vulnerable=True,
                      initial="idle", window=EnumDomain(("idle",))),
        AttributeDecl("x", ONOFF, ACTUATOR, initial="OFF"),
        AttributeDecl("y", ONOFF, ACTUATOR, initial="OFF"),
        AttributeDecl("goal", ONOFF, ACTUATOR, initial="OFF"),
    )
    rules = (
        Rule("A1", Atom("s", "=", "a"), (("x", "ON"),), 0),
        Rule("A2", Atom("x", "=", "ON"), (("goal", "ON"),), 1),
        Rule("B1", Atom("s", "=", "b"), (("y", "ON"),), 2),
        Rule("B2", Atom("y", "=", "ON"), (("goal", "ON"),), 3),
    )
    m = ModelSpec(attrs, rules, (Escalation(Atom("goal", "=", "ON")),))
    sets = set(enumerate_attacks(m).rule_sets)
    assert sets == {frozenset({"A1", "A2"}), frozenset({"B1", "B2"})}


def test_secure_model_has_no_attacks():
    inst = gen_chain(GenSpec(chain_length=3, negative=True, distractors=0, seed=1))
    assert enumerate_attacks(inst.model).attacks == []
    wl = mitigate(inst.model)
    assert wl.rules == () and wl.residual == SECURE


def test_greedy_examples():
    assert greedy_watchlist([{"R2"}, {"R2", "R5"}]) == ["R2"]
    assert sorted(greedy_watchlist([{"A"}, {"B"}])) == ["A", "B"]
    with pytest.raises(ValueError):
        greedy_watchlist([set()])


def test_greedy_pairwise_overlaps():
    sets = [{"a", "b"}, {"b", "c"}, {"c", "a"}]
    chosen = greedy_watchlist(sets)
    assert all(set(chosen) & s for s in sets)
    assert len(chosen) == len(exact_hitting_set(sets)) == 2


def test_ties_go_to_priority(overlap):
    # every rule hits exactly one set: the highest priority rule of each set wins
    assert greedy_watchlist([{"B", "A"}, {"H", "G"}], overlap) == ["A", "G"]


def test_home_watchlist(home):
    wl = mitigate(home)
    assert wl.rules and wl.residual == SECURE
    assert run_check(apply_watchlist(home, wl)).verdict == SECURE
    jsonschema.validate(wl.to_json(), SCHEMA)
    assert "watchlist:" in wl.to_text()


def test_overlap_fixture(overlap):
    wl = mitigate(overlap)
    sets = [a.rules for a in wl.attacks]
    assert len(sets) >= 3
    assert len(wl.rules) == len(exact_hitting_set(sets))
    assert all(set(wl.rules) & s for s in sets)
    assert wl.residual == SECURE


def test_unmitigable_attack():
    # the attacker owns the policy attribute directly: no rule to gate
    attrs = (AttributeDecl("door", ONOFF, ACTUATOR, vulnerable=True, initial="OFF"),)
    m = ModelSpec(attrs, (), (Escalation(Atom("door", "=", "ON")),))
    wl = mitigate(m)
    assert not wl.mitigable and wl.residual == ATTACK


def test_unknown_rule_in_watchlist(home):
    with pytest.raises(Exception, match="unknown rules"):
        apply_watchlist(home, ["R99"])
