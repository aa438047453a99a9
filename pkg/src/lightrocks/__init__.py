"""Modelling, validation, flattening and simulated execution of
hierarchical robot assembly tasks (tasks, skills and actions)."""

from .compiler import FlatModel, FlattenError, emit_dot, flatten
from .dsl import ParseError, parse, parse_file, print_model
from .engine import RunOutcome, TraceEvent, check_trace, run_model
from .model import Component, Diagnostic, Model, resolve_names, validate
from .scenarios import load_scenario, run_scenario
from .world import EnvironmentalModel, build_world, load_world

__all__ = [
    "Component", "Diagnostic", "EnvironmentalModel", "FlatModel", "FlattenError", "Model",
    "ParseError", "RunOutcome", "TraceEvent", "build_world", "check_trace", "emit_dot",
    "flatten", "load_scenario", "load_world", "parse", "parse_file", "print_model",
    "resolve_names", "run_model", "run_scenario", "validate",
]
__version__ = "0.1.0"
