"""Command-line interface."""

from __future__ import annotations

import logging
from pathlib import Path

import click

from . import harness


def _load_config(config_path, gamma, alpha, seed, out, threads):
    cfg = harness.ExperimentConfig.from_toml(config_path)
    if gamma:
        cfg.gammas = tuple(float(g) for g in gamma)
    if alpha is not None:
        cfg.alphas = (float(alpha),)
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.out_dir = Path(out)
    if threads is not None:
        cfg.threads = threads
    return cfg


def _common(f):
    f = click.option("--config", "config_path", required=True, type=click.Path(exists=True))(f)
    f = click.option("--gamma", multiple=True, type=float, help="override gamma list")(f)
    f = click.option("--alpha", type=float, default=None, help="override density weight")(f)
    f = click.option("--seed", type=int, default=None)(f)
    f = click.option("--out", type=click.Path(), default=None)(f)
    f = click.option("--threads", type=int, default=None)(f)
    return f


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


@main.command("train-ensemble")
@_common
def train_ensemble(config_path, gamma, alpha, seed, out, threads):
    """Train the base model and all three ensembles (cached by config hash)."""
    cfg = _load_config(config_path, gamma, alpha, seed, out, threads)
    harness.run_offline(cfg)
    click.echo(f"offline artifacts ready under {cfg.out_dir}")


@main.command("train-flow")
@_common
def train_flow(config_path, gamma, alpha, seed, out, threads):
    """Train the conditional flows (runs any missing upstream stages)."""
    cfg = _load_config(config_path, gamma, alpha, seed, out, threads)
    harness.run_offline(cfg)
    click.echo(f"flows ready under {cfg.out_dir}")


@main.command()
@_common
@click.option("--method", type=click.Choice(["croce", "baseline"]), default="croce")
def generate(config_path, gamma, alpha, seed, out, threads, method):
    """Generate counterfactuals for every test instance and gamma."""
    cfg = _load_config(config_path, gamma, alpha, seed, out, threads)
    path = harness.generate(cfg, method)
    click.echo(f"results written to {path}")


@main.command()
@_common
@click.option("--method", type=click.Choice(["croce", "baseline"]), default="croce")
def evaluate(config_path, gamma, alpha, seed, out, threads, method):
    """Score persisted counterfactuals (validity, proximity, plausibility, robustness)."""
    cfg = _load_config(config_path, gamma, alpha, seed, out, threads)
    harness.evaluate(cfg, method)
    click.echo(f"report written under {cfg.out_dir / 'reports' / method}")


@main.command()
@_common
@click.option("--sweep", "sweep_kind", type=click.Choice(["gamma", "alpha"]), default="gamma")
def sweep(config_path, gamma, alpha, seed, out, threads, sweep_kind):
    """Robustness/proximity trade-off table over gamma or alpha."""
    cfg = _load_config(config_path, gamma, alpha, seed, out, threads)
    if sweep_kind == "alpha" and alpha is None and len(cfg.alphas) == 1:
        cfg.alphas = (1.0, 2.0, 5.0, 10.0, 20.0)
    path = harness.run_sweep(cfg, sweep_kind)
    click.echo(f"sweep written to {path}")


@main.command("reproduce-moons")
@click.option("--out", type=click.Path(), default="runs/moons")
@click.option("--seed", type=int, default=7)
@click.option("--threads", type=int, default=1)
def reproduce_moons(out, seed, threads):
    """One-shot benchmark reproduction on the two-moons dataset."""
    ok = harness.reproduce_moons(out, seed, threads)
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
