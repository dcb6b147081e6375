"""Command-line entry point: ``fdrfusion <subcommand> [options]``."""

from __future__ import annotations

import functools
import sys

import click

from . import experiments as ex
from .config import ConfigError, parse_config
from .errors import ParameterError
from .fusion import DEFAULT_GAMMA_GRID, MEASURES


def _floats(text: str | None):
    if text is None:
        return None
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise click.BadParameter(f"expected a comma-separated list of numbers, got {text!r}") from None


def scenario_options(func):
    """Shared flags; each scenario flag overrides the same key from ``--config``."""
    opts = [
        click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), help="key = value file"),
        click.option("--seed", "seed", type=int, help="master seed (u64)"),
        click.option("--trials", "trials", type=int, help="Monte Carlo trials"),
        click.option("--out", "out", type=click.Path(dir_okay=False, writable=True), help="CSV path (default stdout)"),
        click.option("--workers", "workers", type=int, default=1, show_default=True, help="worker processes"),
        click.option("--N", "N", type=int, help="number of sensors"),
        click.option("--R", "R", type=float, help="ROI radius"),
        click.option("--d0", "d0", type=float, help="target radius of influence"),
        click.option("--P0", "P0", type=float, help="target signal power"),
        click.option("--alpha", "alpha", type=float, help="Byzantine fraction"),
        click.option("--gamma", "gamma", type=float, help="FDR level"),
        click.option("--p-fa-target", "p_fa_target", type=float, help="system false-alarm target"),
        click.option("--p-fa-identical", "p_fa_identical", type=float, help="identical-threshold baseline p_fa"),
    ]
    for opt in reversed(opts):
        func = opt(func)

    @functools.wraps(func)
    def wrapper(config, out, workers, **kwargs):
        keys = ("seed", "trials", "N", "R", "d0", "P0", "alpha", "gamma", "p_fa_target", "p_fa_identical")
        overrides = {k: kwargs.pop(k) for k in keys}
        try:
            scenario = parse_config(config, overrides)
            result = func(scenario=scenario, workers=workers, **kwargs)
        except (ConfigError, ParameterError) as exc:
            raise click.UsageError(str(exc)) from None
        text = result.to_csv()
        if out:
            with open(out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)

    return wrapper


@click.group()
@click.version_option(package_name="artifact")
def main():
    """FDR-based distributed detection under Byzantine attack: experiments emitting CSV."""


@main.command()
@scenario_options
@click.option("--alphas", default="0,0.5,1", show_default=True)
def tables(scenario, workers, alphas):
    """G1 count pmf: Monte Carlo integral vs end-to-end simulation."""
    return ex.run_tables(scenario, _floats(alphas), workers=workers)


@main.command("fdr-sweep")
@scenario_options
@click.option("--alphas", default="0,0.25,0.5,0.75,1", show_default=True)
def fdr_sweep(scenario, workers, alphas):
    """Realised FDR and mean count against the Byzantine fraction."""
    return ex.run_fdr_sweep(scenario, _floats(alphas), workers=workers)


@main.command()
@scenario_options
@click.option("--gammas", default=",".join(map(str, DEFAULT_GAMMA_GRID)), show_default=True)
@click.option("--measures", default=",".join(MEASURES), show_default=True)
@click.option("--source", type=click.Choice(["auto", "numerical", "mc", "asymptotic"]), default="auto",
              show_default=True)
def design(scenario, workers, gammas, measures, source):
    """Grid search of gamma under each design criterion."""
    return ex.run_design(scenario, _floats(gammas), [m.strip() for m in measures.split(",")], source=source,
                         workers=workers)


@main.command()
@scenario_options
@click.option("--p-fa-grid", "p_fa_grid", default=None, help="P_FA values (default 0.02..0.5)")
@click.option("--source", type=click.Choice(["auto", "numerical", "mc", "asymptotic"]), default="auto",
              show_default=True)
def roc(scenario, workers, p_fa_grid, source):
    """ROC of the FDR scheme and the identical-threshold baseline."""
    return ex.run_roc(scenario, _floats(p_fa_grid) or ex.DEFAULT_PFA_GRID, source=source, workers=workers)


@main.command("alpha-pd")
@scenario_options
@click.option("--alphas", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1", show_default=True)
@click.option("--gammas", default=",".join(map(str, DEFAULT_GAMMA_GRID)), show_default=True)
def alpha_pd(scenario, workers, alphas, gammas):
    """P_D against alpha for fixed and re-optimised gamma."""
    return ex.run_alpha_pd_sweep(scenario, _floats(alphas), _floats(gammas), workers=workers)


@main.command()
@scenario_options
@click.option("--region-alphas", default="0,0.5", show_default=True)
@click.option("--region-gammas", default="0.25,0.1", show_default=True)
@click.option("--alpha-before", type=float, default=0.0, show_default=True)
@click.option("--alpha-after", type=float, default=0.7, show_default=True)
@click.option("--change-at", type=int, default=30, show_default=True)
@click.option("--horizon", type=int, default=150, show_default=True)
@click.option("--T0", "T0", type=int, default=30, show_default=True)
@click.option("--switch-after", type=int, default=1, show_default=True)
@click.option("--no-flush", is_flag=True, help="keep the window when parameters switch")
def adaptive(scenario, workers, region_alphas, region_gammas, alpha_before, alpha_after, change_at, horizon, T0,
             switch_after, no_flush):
    """Adaptive vs fixed detector over time with a step change in alpha."""
    return ex.run_adaptive(scenario, region_alphas=_floats(region_alphas), region_gammas=_floats(region_gammas),
                           alpha_before=alpha_before, alpha_after=alpha_after, change_at=change_at,
                           horizon=horizon, T0=T0, flush_on_switch=not no_flush, switch_after=switch_after,
                           workers=workers)


@main.command()
@scenario_options
@click.option("--hypothesis", type=click.Choice(["G0", "G1"]), default="G1", show_default=True)
@click.option("--method", type=click.Choice(ex.PMF_METHODS), default="numerical", show_default=True)
@click.option("--i-max", "i_max", type=int, default=None)
def pmf(scenario, workers, hypothesis, method, i_max):
    """Count pmf for one hypothesis."""
    try:
        return ex.run_pmf(scenario, hypothesis, method, i_max=i_max, workers=workers)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


if __name__ == "__main__":
    main()
