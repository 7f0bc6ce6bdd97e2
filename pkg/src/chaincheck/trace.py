"""Counterexample traces and their JSON form."""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import PRIVATE, ModelSpec, _typed
from .semantics import EngineConfig, is_product_successor, is_successor


@dataclass
class Step:
    state: dict
    fired: list[str] = field(default_factory=list)
    injected: list[tuple[str, object]] = field(default_factory=list)
    env: list[tuple[str, object]] = field(default_factory=list)
    right: dict | None = None
    fired_right: list[str] | None = None

    def to_json(self) -> dict:
        out: dict = {}
        if self.right is None:
            out["state"] = dict(self.state)
            out["fired"] = list(self.fired)
        else:
            out["left"] = dict(self.state)
            out["right"] = dict(self.right)
            out["fired"] = list(self.fired)
            out["fired_right"] = list(self.fired_right or [])
        out["injected"] = [{"attr": a, "value": v} for a, v in self.injected]
        out["env"] = [{"attr": a, "value": v} for a, v in self.env]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Step":
        pairs = lambda key: [(d["attr"], d["value"]) for d in obj.get(key, [])]
        if "left" in obj:
            return cls(dict(obj["left"]), list(obj.get("fired", [])), pairs("injected"),
                       pairs("env"), dict(obj["right"]), list(obj.get("fired_right", [])))
        return cls(dict(obj["state"]), list(obj.get("fired", [])), pairs("injected"), pairs("env"))


@dataclass
class Trace:
    steps: list[Step]
    kind: str = "escalation"

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    @property
    def transitions(self) -> int:
        return len(self.steps) - 1

    @property
    def states(self) -> list[dict]:
        return [s.state for s in self.steps]

    @property
    def pairs(self) -> list[tuple[dict, dict]]:
        return [(s.state, s.right) for s in self.steps]

    def fired_sequence(self) -> list[str]:
        """Rule ids in firing order (left copy for product traces), repeats kept."""
        return [r for s in self.steps for r in s.fired]

    def fired_set(self) -> set[str]:
        out = set(self.fired_sequence())
        for s in self.steps:
            out.update(s.fired_right or [])
        return out

    def to_json(self) -> list[dict]:
        return [s.to_json() for s in self.steps]

    @classmethod
    def from_json(cls, steps: list[dict]) -> "Trace":
        parsed = [Step.from_json(s) for s in steps]
        kind = "privacy" if parsed and parsed[0].right is not None else "escalation"
        return cls(parsed, kind)

    def to_text(self) -> str:
        lines = []
        for t, s in enumerate(self.steps):
            head = f"step {t}"
            if s.fired or s.fired_right:
                fr = ",".join(s.fired) or "-"
                if s.right is not None:
                    fr += " | " + (",".join(s.fired_right or []) or "-")
                head += f"  fired: {fr}"
            if s.injected:
                head += "  injected: " + ", ".join(f"{a}={v}" for a, v in s.injected)
            if s.env:
                head += "  env: " + ", ".join(f"{a}={v}" for a, v in s.env)
            lines.append(head)
            if s.right is None:
                lines.append("    " + _fmt_state(s.state))
            else:
                lines.append("    L " + _fmt_state(s.state))
                lines.append("    R " + _fmt_state(s.right))
        return "\n".join(lines)


def _fmt_state(state: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in state.items())


def replay(trace: Trace, model: ModelSpec, config: EngineConfig = EngineConfig()) -> bool:
    """Whether every consecutive pair of the trace is a legal transition of ``model``.

    Also requires step 0 to be an initial state (for product traces the left
    copy must be the model's initial state and the right copy may differ only
    on PRIVATE attributes).
    """
    if not trace.steps:
        return False
    init = model.initial_state().as_dict()
    first = trace.steps[0]
    if not _same_state(first.state, init, model):
        return False
    if trace.kind == "privacy":
        labels = model.labels
        if first.right is None:
            return False
        for n in model.names:
            if labels.get(n) != PRIVATE and not _same_state(
                    {n: first.right[n]}, {n: init[n]}, None):
                return False
        for a, b in zip(trace.steps, trace.steps[1:]):
            if not is_product_successor((a.state, a.right), (b.state, b.right), model, config):
                return False
        return True
    for a, b in zip(trace.steps, trace.steps[1:]):
        if not is_successor(a.state, b.state, model, config):
            return False
    return True


def _same_state(a: dict, b: dict, model) -> bool:
    keys = model.names if model is not None else list(b)
    return all(k in a and _typed(a[k]) == _typed(b[k]) for k in keys)
