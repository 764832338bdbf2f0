"""Command line entry point: charfront solve|kretschmann|kernel|validate.

Exit codes: 0 success, 1 pipeline error or failed check, 2 bad configuration.
Nothing is written before the configuration has been parsed and validated.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import pipeline
from .checks import run_suite
from .config import RunConfig, load_config
from .errors import CharfrontError, ConfigError, ZeroEnergy


def _load(config: str, out: str | None) -> tuple[RunConfig, Path]:
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    target = out or cfg.output.directory
    if target is None:
        click.echo("config error: no output directory (use --out or output.directory)", err=True)
        sys.exit(2)
    return cfg, Path(target)


def _fail(exc: Exception) -> None:
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


def _common(fn):
    fn = click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                      help="Output directory (created if missing).")(fn)
    fn = click.option("--config", "config", type=click.Path(), required=True,
                      help="YAML run configuration.")(fn)
    return fn


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Characteristic-front solvers for short-pulse focusing data."""


@main.command()
@_common
def solve(config, out):
    """Solve the field system per angle; write fields.csv and summary.json."""
    cfg, target = _load(config, out)
    try:
        data = cfg.pulse.data()
        states = pipeline.solve_all(cfg, data)
        summary = {"angles": [pipeline.state_summary(st, data) for st in states]}
    except (CharfrontError, ValueError) as exc:
        _fail(exc)
    target.mkdir(parents=True, exist_ok=True)
    if "csv" in cfg.output.formats:
        pipeline.write_fields_csv(target / "fields.csv", states)
    if "json" in cfg.output.formats:
        pipeline.write_json(target / "summary.json", summary)


@main.command()
@_common
def kretschmann(config, out):
    """Rescaled Kretschmann scalar and blowup fit; write ktilde.csv and blowup.json."""
    cfg, target = _load(config, out)
    try:
        results = pipeline.kretschmann_all(cfg)
    except (CharfrontError, ValueError) as exc:
        _fail(exc)
    done = [r for r in results if not isinstance(r, ZeroEnergy)]
    if not done:
        click.echo("error: zero energy on every angle, nothing to analyse", err=True)
        sys.exit(1)
    angles = []
    for k, r in enumerate(results):
        if isinstance(r, ZeroEnergy):
            angles.append({"angle": k, "status": "zero energy", "detail": str(r)})
        else:
            angles.append({"status": "ok", **r.report.as_dict()})
    target.mkdir(parents=True, exist_ok=True)
    if "csv" in cfg.output.formats:
        pipeline.write_ktilde_csv(target / "ktilde.csv", done)
    if "json" in cfg.output.formats:
        pipeline.write_json(target / "blowup.json", {"angles": angles})
    for a in angles:
        if a["status"] == "ok":
            verdict = "blowup" if a["criterion_pass"] else "criterion fails"
            click.echo(f"angle {a['angle']}: p_fit={a['p_fit']:.4f} p_pred={a['p_pred']:.4f} {verdict}")


@main.command()
@_common
def kernel(config, out):
    """Specialized kernel monitor and kernel-vs-direct error; write kernel.json."""
    cfg, target = _load(config, out)
    try:
        rows = pipeline.kernel_all(cfg)
    except (CharfrontError, ValueError) as exc:
        _fail(exc)
    target.mkdir(parents=True, exist_ok=True)
    pipeline.write_json(target / "kernel.json", {"angles": rows})


@main.command()
@_common
def validate(config, out):
    """Run the acceptance checks; write report.json; exit 0 iff all pass."""
    cfg, target = _load(config, out)
    report = run_suite(cfg, log=click.echo)
    target.mkdir(parents=True, exist_ok=True)
    pipeline.write_json(target / "report.json", report.as_dict())
    click.echo("all checks passed" if report.passed else "some checks failed")
    sys.exit(0 if report.passed else 1)


if __name__ == "__main__":
    main()
