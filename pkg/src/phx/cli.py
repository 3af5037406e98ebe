"""Operator and CI command line: validate, hash, run, assess, whatif,
prioritise, serve.

Machine contract: stdout carries JSON (or JSONL for `run`), stderr carries
human text, and exit codes are meaningful (`validate`: 0 clean / 1 errors;
`run`: 0 completed / 2 failed / 3 cancelled).
"""

import json
import sys

import click

from .canonical import canonical_json
from .cyberrange import Scenario, run_assessment, what_if
from .dispatch import SimulationProfile
from .engine import Engine, ExecStatus
from .errors import PhxError
from .model.parsing import canonical_hash as playbook_hash
from .model.parsing import parse_playbook
from .model.validation import validate as validate_playbook
from .risk import AlertInput, load_risk_model, prioritise, score_alert


def _load_playbook(path, mode="strict"):
    try:
        with open(path, "rb") as fh:
            return parse_playbook(fh.read(), mode=mode)
    except FileNotFoundError:
        raise click.ClickException(f"no such file: {path}")
    except PhxError as exc:
        raise click.ClickException(f"{path}: {exc.code}: {exc.message}")


def _load_profile(path):
    if path is None:
        return SimulationProfile()
    try:
        return SimulationProfile.load(path)
    except (OSError, PhxError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"profile {path}: {exc}")


def _parse_binding(playbook, key, raw):
    variables = playbook.variables()
    variable = variables.get(key)
    if variable is None:
        raise click.ClickException(f"--bind {key}: not a declared variable")
    var_type = variable.var_type
    try:
        if var_type == "integer":
            return int(raw)
        if var_type == "float":
            return float(raw)
        if var_type == "boolean":
            if raw not in ("true", "false"):
                raise ValueError(f"expected true/false, got {raw!r}")
            return raw == "true"
        if var_type == "list-of-string":
            return [item for item in raw.split(",") if item]
        return raw
    except ValueError as exc:
        raise click.ClickException(f"--bind {key}: {exc}")


@click.group()
def main():
    """Resilience playbook tooling."""


@main.command()
@click.argument("file", type=click.Path())
@click.option("--strict/--lenient", "strict", default=True,
              help="Reject unknown fields (default) or preserve them.")
def validate(file, strict):
    """Validate a playbook; findings go to stderr, exit 1 on errors."""
    from .model.parsing import playbook_from_obj

    try:
        with open(file, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        raise click.ClickException(f"no such file: {file}")
    try:
        obj = json.loads(raw.decode("utf-8"))
        playbook = playbook_from_obj(obj, mode="strict" if strict else "lenient")
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        click.echo(f"error $ {exc}", err=True)
        sys.exit(1)
    except PhxError as exc:
        click.echo(f"error {exc.details.get('path', '$')} {exc.message}", err=True)
        sys.exit(1)
    report = validate_playbook(playbook)
    for finding in report.findings:
        click.echo(f"{finding.severity} {finding.path} {finding.message}", err=True)
    sys.exit(0 if report.executable else 1)


@main.command(name="hash")
@click.argument("file", type=click.Path())
def hash_command(file):
    """Canonical SHA-256 of a playbook document."""
    playbook = _load_playbook(file, mode="lenient")
    click.echo(playbook_hash(playbook))


@main.command()
@click.argument("file", type=click.Path())
@click.option("--mode", type=click.Choice(["dry-run", "range"]), default="dry-run")
@click.option("--seed", type=int, default=None, help="Simulation seed (generated if omitted).")
@click.option("--bind", "binds", multiple=True, metavar="NAME=VALUE",
              help="Bind an external variable; parsed by its declared type.")
@click.option("--profile", "profile_path", type=click.Path(), default=None)
@click.option("--auto-approve/--no-auto-approve", default=True,
              help="Approve manual steps automatically (default for offline runs).")
def run(file, mode, seed, binds, profile_path, auto_approve):
    """Execute a playbook offline; event log as JSONL on stdout."""
    playbook = _load_playbook(file)
    bindings = {}
    for item in binds:
        key, sep, raw = item.partition("=")
        if not sep:
            raise click.ClickException(f"--bind needs NAME=VALUE, got {item!r}")
        bindings[key] = _parse_binding(playbook, key, raw)
    engine = Engine(profile=_load_profile(profile_path), auto_approve_manual=auto_approve)
    try:
        record = engine.start_execution(playbook, bindings, mode=mode, seed=seed)
        engine.advance(record)
    except PhxError as exc:
        raise click.ClickException(f"{exc.code}: {exc.message}")
    for event in record.events:
        click.echo(canonical_json(event.to_json_obj()))
    status = record.status
    if status == ExecStatus.COMPLETED.value:
        sys.exit(0)
    if status == ExecStatus.CANCELLED.value:
        sys.exit(3)
    if status == ExecStatus.FAILED.value:
        click.echo(f"execution failed: {record.failure_reason}", err=True)
        sys.exit(2)
    click.echo(f"execution ended {status} (manual steps pending?)", err=True)
    sys.exit(2)


@main.command()
@click.argument("file", type=click.Path())
@click.option("--scenario", "scenario_path", type=click.Path(), required=True)
@click.option("--runs", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.option("--profile", "profile_path", type=click.Path(), default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Also write one-row-per-run CSV here.")
def assess(file, scenario_path, runs, seed, profile_path, csv_path):
    """Score a playbook against a scenario over N seeded range runs."""
    playbook = _load_playbook(file)
    try:
        scenario = Scenario.load(scenario_path)
    except (OSError, json.JSONDecodeError, PhxError) as exc:
        raise click.ClickException(f"scenario {scenario_path}: {exc}")
    try:
        report = run_assessment(playbook, scenario, _load_profile(profile_path),
                                runs=runs, base_seed=seed)
    except PhxError as exc:
        raise click.ClickException(f"{exc.code}: {exc.message}")
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
    click.echo(json.dumps(report.to_json_obj(), indent=2, sort_keys=True))


@main.command()
@click.argument("candidate", type=click.Path())
@click.argument("baseline", type=click.Path())
@click.option("--scenario", "scenario_path", type=click.Path(), required=True)
@click.option("--runs", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.option("--profile", "profile_path", type=click.Path(), default=None)
def whatif(candidate, baseline, scenario_path, runs, seed, profile_path):
    """Compare a what-if candidate against a baseline playbook."""
    candidate_pb = _load_playbook(candidate)
    baseline_pb = _load_playbook(baseline)
    try:
        scenario = Scenario.load(scenario_path)
    except (OSError, json.JSONDecodeError, PhxError) as exc:
        raise click.ClickException(f"scenario {scenario_path}: {exc}")
    try:
        comparison = what_if(candidate_pb, baseline_pb, scenario,
                             _load_profile(profile_path), runs=runs, base_seed=seed)
    except PhxError as exc:
        raise click.ClickException(f"{exc.code}: {exc.message}")
    click.echo(json.dumps(comparison.to_json_obj(), indent=2, sort_keys=True))


@main.command()
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--alerts", "alerts_path", type=click.Path(), required=True)
def prioritise_command(model_path, alerts_path):
    """Order alerts by risk; ids to stdout, one per line, most urgent first."""
    try:
        model = load_risk_model(model_path)
    except (OSError, json.JSONDecodeError, PhxError) as exc:
        raise click.ClickException(f"model {model_path}: {exc}")
    try:
        with open(alerts_path, "r", encoding="utf-8") as fh:
            raw_alerts = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"alerts {alerts_path}: {exc}")
    try:
        scored = [score_alert(model, AlertInput.from_json_obj(a)) for a in raw_alerts]
    except PhxError as exc:
        raise click.ClickException(f"{exc.code}: {exc.message}")
    for item in prioritise(scored):
        click.echo(item.alert.alert_id)


main.add_command(prioritise_command, name="prioritise")


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
def serve(config_path):
    """Run the HTTP service."""
    import uvicorn

    from .api import create_app, load_config

    config = load_config(config_path)
    app = create_app(config)
    uvicorn.run(app, host=config.listen_host, port=config.listen_port, log_level="info")


if __name__ == "__main__":
    main()
