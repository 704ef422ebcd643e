"""Experiment orchestration: scenarios, configs, the six experiments and the CLI."""

from .config import dumps_config, echo_config, load_config, parse_config, resolve_scenario
from .experiments import EXPERIMENTS, Check, delta_ladder
from .runner import RerunResult, RunResult, rerun, run_experiment
from .scenarios import (REGISTRY, Oracle, Registry, Scenario, default_registry,
                        list_scenarios, scenario_echo)

__all__ = ["Check", "EXPERIMENTS", "Oracle", "REGISTRY", "Registry", "RerunResult",
           "RunResult", "Scenario", "default_registry", "delta_ladder", "dumps_config",
           "echo_config", "list_scenarios", "load_config", "parse_config", "rerun",
           "resolve_scenario", "run_experiment", "scenario_echo"]
