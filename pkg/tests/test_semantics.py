from chaincheck.model import (
    ACTUATOR, SENSOR, Atom, AttributeDecl, EnumDomain, ModelSpec, Rule,
)
from chaincheck.semantics import EngineConfig, fired_rules, is_successor, successors


def _quiet(home, **values):
    state = home.initial_state().as_dict()
    state.update(values)
    return state


def test_hot_room_fires_fan_and_ac(home):
    s = _quiet(home, temperature=33)
    out = fired_rules(s, home)
    assert out["fan"] == "ON" and out["ac"] == "ON"


def test_nothing_fires():
    m = ModelSpec((AttributeDecl("x", EnumDomain(("A", "B")), ACTUATOR, initial="A"),),
                  (Rule("r", Atom("x", "=", "B"), (("x", "A"),)),))
    assert fired_rules({"x": "A"}, m) == {}


def test_priority_breaks_conflicts(home):
    # R10 (fan ON) outranks R12 (fan OFF); force both triggers with a synthetic state
    rules = (home.rule("R10"), Rule("R12", Atom("temperature", ">=", 0), (("fan", "OFF"),),
                                    priority=11))
    m = home.replace(rules=rules)
    assert fired_rules(_quiet(home, temperature=30), m)["fan"] == "ON"


def test_gps_spoof_successor(home):
    s = _quiet(home, location=5)
    assert any(t["location"] == 0 for t in (x.as_dict() for x in successors(s, home)))


def test_closed_system_has_one_successor():
    m = ModelSpec((AttributeDecl("x", EnumDomain(("A", "B")), ACTUATOR, initial="A"),), ())
    assert len(successors({"x": "A"}, m)) == 1


def test_boolean_sensor_branches_twice():
    m = ModelSpec((AttributeDecl("s", EnumDomain(("T", "F")), SENSOR, initial="T",
                                 window=EnumDomain(("T", "F"))),), ())
    assert len(successors({"s": "T"}, m)) == 2


def test_attacker_switch(home):
    s = _quiet(home, location=5)
    t = dict(s, location=50)  # outside the sensor window
    assert is_successor(s, t, home)
    assert not is_successor(s, t, home, EngineConfig(attacker_enabled=False))
