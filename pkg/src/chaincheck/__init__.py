"""Model checking for trigger-action home automation rules.

Finds rule chains that let an attacker who controls a few devices reach a
forbidden state, and chains that leak private attribute values into
publicly observable ones.
"""

__version__ = "0.1.0"

from .engine import ATTACK, SECURE, UNKNOWN, ConfigError, Verdict, check_escalation, check_privacy
from .grouping import group_model
from .mitigation import (
    Watchlist, apply_watchlist, enumerate_attacks, exact_hitting_set, greedy_watchlist, mitigate,
)
from .model import (
    ModelError, ModelSpec, load_model, model_from_dict, model_to_dict, parse_model,
    serialize_model,
)
from .oracle import brute_check_escalation, brute_check_privacy
from .pipeline import ESCALATION, PRIVACY, PipelineOptions, RunReport, run_check
from .pruning import prune_for_escalation, prune_for_privacy
from .semantics import EngineConfig
from .trace import Trace, replay

__all__ = [
    "ATTACK", "SECURE", "UNKNOWN", "ESCALATION", "PRIVACY",
    "ConfigError", "ModelError", "ModelSpec", "Verdict", "RunReport", "Trace", "Watchlist",
    "EngineConfig", "PipelineOptions",
    "apply_watchlist", "brute_check_escalation", "brute_check_privacy", "check_escalation",
    "check_privacy", "enumerate_attacks", "exact_hitting_set", "greedy_watchlist",
    "group_model", "load_model", "mitigate", "model_from_dict", "model_to_dict",
    "parse_model", "prune_for_escalation", "prune_for_privacy", "replay", "run_check",
    "serialize_model",
]
