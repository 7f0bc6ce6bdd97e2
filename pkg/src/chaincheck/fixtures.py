"""Ready-made models: the smart-home example and a small overlapping-chains model."""

from __future__ import annotations

from importlib import resources

from .model import (
    ACTUATOR, OTHER, PRIVATE, PUBLIC, SENSOR, Atom, AttributeDecl, EnumDomain,
    Escalation, ModelSpec, Rule, parse_model,
)

ON_OFF = EnumDomain(("ON", "OFF"))


def smart_home_text() -> str:
    return resources.files("chaincheck").joinpath("data/smart_home.json").read_text("utf-8")


def smart_home(vulnerable=None, labels=None) -> ModelSpec:
    """Twelve-rule home with a car-location geofence, camera and smart lock.

    By default ``location`` and ``light1`` are attacker-controlled,
    ``occupancy`` is private and ``light1``, ``light2`` and ``location``
    are public.
    """
    model = parse_model(smart_home_text())
    if vulnerable is not None:
        model = model.with_vulnerable(vulnerable)
    if labels is not None:
        model = model.with_labels(labels)
    return model


def smart_home_privacy_labels() -> dict[str, str]:
    labels = {n: OTHER for n in smart_home().names}
    labels["occupancy"] = PRIVATE
    for n in ("light1", "light2", "location"):
        labels[n] = PUBLIC
    return labels


def overlapping_chains() -> ModelSpec:
    """Three attack chains that end in ``alarm = OFF``, two of them sharing a rule.

    A spoofable ``mode`` sensor starts each chain: away -> A, B, C;
    night -> D, E, C; vacation -> F, G, H.
    """
    mode = AttributeDecl("mode", EnumDomain(("idle", "away", "night", "vacation")), SENSOR,
                         vulnerable=True, window=EnumDomain(("idle",)), initial="idle")
    attrs = [
        mode,
        AttributeDecl("blinds", ON_OFF, ACTUATOR, initial="OFF"),
        AttributeDecl("heater", EnumDomain(("OFF", "LOW", "HIGH")), ACTUATOR, initial="OFF"),
        AttributeDecl("hub", ON_OFF, ACTUATOR, initial="OFF"),
        AttributeDecl("siren", ON_OFF, ACTUATOR, initial="OFF"),
        AttributeDecl("alarm", ON_OFF, ACTUATOR, initial="ON"),
    ]
    spec = [
        ("A", Atom("mode", "=", "away"), (("blinds", "ON"),)),
        ("B", Atom("blinds", "=", "ON"), (("hub", "ON"),)),
        ("C", Atom("hub", "=", "ON"), (("alarm", "OFF"),)),
        ("D", Atom("mode", "=", "night"), (("heater", "LOW"),)),
        ("E", Atom("heater", "=", "LOW"), (("hub", "ON"),)),
        ("F", Atom("mode", "=", "vacation"), (("heater", "HIGH"),)),
        ("G", Atom("heater", "=", "HIGH"), (("siren", "ON"),)),
        ("H", Atom("siren", "=", "ON"), (("alarm", "OFF"),)),
    ]
    rules = tuple(Rule(rid, trig, act, priority=i) for i, (rid, trig, act) in enumerate(spec))
    return ModelSpec(tuple(attrs), rules, (Escalation(Atom("alarm", "=", "OFF")),))
