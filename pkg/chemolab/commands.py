import json
import logging
import sys
from dataclasses import replace
from functools import update_wrapper
from pathlib import Path

import click

from .config import json_safe
from .exceptions import ChemolabException, ConfigurationError
from .scenarios import (
    SCENARIOS,
    build_run_config,
    lyapunov_check,
    run_scenario,
    run_sweep,
    run_thresholds,
)


class ExceptionHandlerGroup(click.Group):
    """
    Report package errors as a one-line message and exit status 1
    """

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except ChemolabException as e:
            raise click.ClickException(str(e)) from e


LOG_LEVELS = [logging.WARNING, logging.INFO, logging.DEBUG]


@click.group(cls=ExceptionHandlerGroup)
@click.option("--verbose", "-v", count=True, help="Log more, repeat for debug")
@click.pass_context
def cli(ctx, verbose: int = 0):
    ctx.ensure_object(dict)
    logging.basicConfig(
        level=LOG_LEVELS[min(verbose, len(LOG_LEVELS) - 1)],
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


RUN_OPTIONS = [
    click.option("--scenario", "-s", type=click.Choice(list(SCENARIOS))),
    click.option(
        "--config",
        "-c",
        "config_path",
        type=click.Path(dir_okay=False, path_type=Path),
        help="JSON or YAML config document",
    ),
    click.option("--set", "overrides", multiple=True, help="Override as key=value"),
    click.option("--out", "-o", type=click.Path(file_okay=False, path_type=Path)),
    click.option("--seed", type=int),
]


def with_run_config(f):
    """
    Add the shared config options and pass a built RunConfig as the first argument
    """

    @click.pass_context
    def new_func(ctx, *args, scenario, config_path, overrides, out, seed, **kwargs):
        config = build_run_config(
            scenario=scenario,
            config_path=config_path,
            overrides=overrides,
            out=out,
            seed=seed,
        )
        return ctx.invoke(f, config, *args, **kwargs)

    new_func = update_wrapper(new_func, f)
    for option in reversed(RUN_OPTIONS):
        new_func = option(new_func)
    return new_func


def echo_json(data):
    click.echo(json.dumps(json_safe(data), indent=2, allow_nan=False))


@cli.command()
@with_run_config
@click.option("--snapshots", is_flag=True, help="Store states at each sample")
def simulate(config, snapshots: bool = False):
    """
    Run a scenario and report its summary

    Usage:
        chemolab simulate --scenario extinction --out runs/extinction
        chemolab simulate --config run.json --set params.r=3 --seed 4
    """
    if snapshots:
        config = replace(config, save_snapshots=True)
    summary = run_scenario(config)
    echo_json(summary.as_dict())


@cli.command()
@with_run_config
def thresholds(config):
    """
    Print the threshold report for the configured parameters

    Usage:
        chemolab thresholds --set params.a=1 --set params.f=0
    """
    echo_json(run_thresholds(config.sim.params).as_dict())


@cli.command()
@with_run_config
@click.option("--workers", "-w", type=int, help="Worker cap, default CHEMO_THREADS")
def sweep(config, workers: int | None = None):
    """
    Run a parameter sweep and write one CSV row per point

    Usage:
        chemolab sweep --config sweep.yml --out runs/sweep
    """
    summaries = run_sweep(config, workers=workers)
    failed = sum(1 for summary in summaries if summary.error)
    click.echo(f"Swept {len(summaries)} points, {failed} failed")
    if config.out:
        click.echo(f"Results in {config.out}")


@cli.command("lyapunov-check")
@with_run_config
@click.argument("snapshots", type=click.Path(dir_okay=False, path_type=Path))
def lyapunov_check_cmd(config, snapshots: Path):
    """
    Re-evaluate the Lyapunov functional on stored snapshots

    Usage:
        chemolab lyapunov-check --scenario persistence runs/persistence/snapshots.npz
    """
    if not snapshots.exists():
        raise ConfigurationError(f"Snapshot file {snapshots} not found")
    echo_json(lyapunov_check(config, snapshots).as_dict())


def invoke():
    cli(obj={})
