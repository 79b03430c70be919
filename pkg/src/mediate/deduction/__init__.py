from .cartography import extract_cartography
from .engine import (
    DeductionEngine,
    MediationInstances,
    SelectionResult,
    SelectedFunction,
    assign_functions,
    default_rule_groups,
    seed_store,
    select_functions,
)
from .rules import RuleGroup, TraceEntry, apply_group, load_rule_groups

__all__ = [
    "DeductionEngine",
    "MediationInstances",
    "RuleGroup",
    "SelectionResult",
    "SelectedFunction",
    "TraceEntry",
    "apply_group",
    "assign_functions",
    "default_rule_groups",
    "extract_cartography",
    "load_rule_groups",
    "seed_store",
    "select_functions",
]
