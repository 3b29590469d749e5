"""Experiment orchestration: configuration, seeded Monte Carlo and reporting."""

from __future__ import annotations

from pathlib import Path

from ..errors import ConfigError
from .acceptance import run_acceptance, summary_table
from .config import EXPERIMENTS, ExperimentConfig, load_config, make_config, validate_config
from .experiments import RUNNERS
from .report import RunReport, emit_plot_data, write_report

__all__ = ["EXPERIMENTS", "ExperimentConfig", "RunReport", "emit_plot_data", "load_config",
           "make_config", "run_experiment", "summary_table"]


def run_experiment(cfg: ExperimentConfig, criteria=None) -> RunReport:
    """Dispatch to the named experiment and, if ``cfg.out_dir`` is set, write
    ``report.json`` plus CSV data files there.

    ``criteria`` restricts an ``accept-all`` run to the given criterion ids.
    """
    if not isinstance(cfg, ExperimentConfig):
        raise ConfigError("run_experiment needs an ExperimentConfig")
    validate_config(cfg)
    if cfg.experiment == "accept-all":
        report = run_acceptance(cfg, only=criteria)
    else:
        report = RUNNERS[cfg.experiment](cfg)
    if cfg.out_dir:
        write_report(report, cfg.out_dir)
        if report.criteria:
            (Path(cfg.out_dir) / "summary.txt").write_text(summary_table(report) + "\n")
    return report
