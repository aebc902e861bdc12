"""Configuration, experiment orchestration, statistics and run persistence."""
from .config import ConfigError, ExperimentConfig, build_config, parse_config_file, parse_config_text
from .runner import RunReport, audit, read_table, run
from .stats import ks_critical_value, ks_statistic

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunReport",
    "audit",
    "build_config",
    "ks_critical_value",
    "ks_statistic",
    "parse_config_file",
    "parse_config_text",
    "read_table",
    "run",
]
