"""Command-line entry point: ``warmstart <command> [--config PATH] [--seed N] [--out DIR]``."""

from __future__ import annotations

import logging
import sys
import time

import click

from . import protocol, stats
from .config import load_config
from .kernels import BACKEND

log = logging.getLogger("warmstart")


def _setup(verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _seeds(config, seed):
    return config.seeds if seed is None else (seed,)


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                      help="Protocol configuration (INI key/value file).")(fn)
    fn = click.option("--seed", type=int, default=None, help="Run a single seed instead of the configured list.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default="runs/default", show_default=True,
                      help="Output directory.")(fn)
    fn = click.option("-v", "--verbose", is_flag=True, help="Log progress and timings to stderr.")(fn)
    return fn


def _run(stages, config_path, seed, out, verbose):
    _setup(verbose)
    config = load_config(config_path)
    t0 = time.perf_counter()
    try:
        failures = protocol.run_stages(config, out, stages, _seeds(config, seed))
    except protocol.StageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    log.info("finished %s in %.1fs (kernels: %s)", ",".join(stages), time.perf_counter() - t0, BACKEND)
    if failures:
        for f in failures:
            click.echo(f"error: {f}", err=True)
        sys.exit(1)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Initialization strategies, alpha search, weight-level ensembles and
    significance analysis on synthetic shifted cohorts."""


def _stage_command(stage, help_text):
    @_common
    def command(config_path, seed, out, verbose):
        _run((stage,), config_path, seed, out, verbose)
    command.__doc__ = help_text
    return main.command(name=stage)(command)


_stage_command("generate", "Generate internal and external cohorts.")
_stage_command("train", "Train Cold/Warm models on the P and F tranches.")
_stage_command("search-alpha", "Search alpha1/alpha2 and train the Shrink models.")
_stage_command("ensemble", "Build EWA, F-SLSQP and AGELFS ensembles.")
_stage_command("evaluate", "Score every model on the internal and external tests.")
_stage_command("significance", "Pairwise MCC and recall significance tests.")
_stage_command("report", "Emit figure data and the cross-seed summary.")


@main.command("run-all")
@_common
@click.option("--stage", type=click.Choice(protocol.STAGES), default=None,
              help="Resume from this stage (earlier stages must already be complete).")
def run_all(config_path, seed, out, verbose, stage):
    """Run the full protocol."""
    stages = protocol.STAGES if stage is None else protocol.STAGES[protocol.STAGES.index(stage):]
    _run(stages, config_path, seed, out, verbose)


@main.command("replicate-paper")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the table to this CSV instead of stdout.")
def replicate_paper(out):
    """Significance chain on the published MCC values (no training)."""
    results = protocol.replicate_paper_significance(protocol.published_comparisons())
    rows = protocol.replication_rows(results)
    if out:
        stats.write_csv(out, protocol.REPLICATION_COLUMNS, rows)
    else:
        click.echo(",".join(protocol.REPLICATION_COLUMNS))
        for r in rows:
            click.echo(",".join(str(x) for x in r))


if __name__ == "__main__":
    main()
