"""Command line client for the simulation service.

Commands call the HTTP API; by default an in-process instance of the app
serves them, so no daemon is needed.  Point --server at a running instance
to execute remotely instead.  All files land on the client side, under
--out.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click
import httpx
import yaml

from .harness import apply_overrides, load_scenario

POLICIES = ("algorithm1", "bandit", "opt", "multicast")


def _client(ctx: click.Context) -> httpx.Client:
    server = ctx.obj.get("server")
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # in-process mode: drive the ASGI app directly, no daemon required
    import warnings

    with warnings.catch_warnings():
        # some fastapi/starlette pairings warn on this import
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app, raise_server_exceptions=False)


def _post(ctx: click.Context, path: str, payload: dict) -> dict:
    with _client(ctx) as client:
        try:
            resp = client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise click.ClickException(f"service unreachable: {exc}")
    if resp.status_code >= 400:
        try:
            body = resp.json()
            detail = body.get("detail", resp.text)
            name = body.get("error", f"HTTP {resp.status_code}")
        except ValueError:
            detail, name = resp.text, f"HTTP {resp.status_code}"
        raise click.ClickException(f"{name}: {detail}")
    return resp.json()


def _write_files(files: dict[str, str], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(files.items()):
        (out_dir / name).write_text(text)
    click.echo(f"wrote {len(files)} files to {out_dir}")


def _load_run_scenario(path: str, seed: Optional[int]) -> dict:
    scn = load_scenario(path)
    if seed is not None:
        scn = apply_overrides(scn, {"seed": seed})
    return scn.model_dump(mode="json")


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; default executes in process.")
@click.pass_context
def main(ctx: click.Context, server: Optional[str]) -> None:
    """Deterministic overlay, dataflow, and routing-game simulations."""
    ctx.obj = {"server": server}


@main.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Output directory (default runs/<name>-s<seed>).")
@click.option("--policy", type=click.Choice(POLICIES), default=None,
              help="Override the routing policy.")
@click.option("--trace", is_flag=True, help="Also emit events.csv.")
@click.pass_context
def run(ctx, scenario, seed, out, policy, trace):
    """Execute one scenario and write its metrics files."""
    payload = {
        "scenario": _load_run_scenario(scenario, seed),
        "policy": policy,
        "trace": trace,
    }
    body = _post(ctx, "/runs", payload)
    out_dir = Path(out) if out else Path("runs") / f"{body['name']}-s{payload['scenario']['seed']}"
    _write_files(body["files"], out_dir)
    for name, ok in sorted(body["validity"].items()):
        click.echo(f"  {name}: {'ok' if ok else 'FAILED'}")
    if not body["valid"]:
        for note in body["notes"]:
            click.echo(f"  note: {note}", err=True)
        raise SystemExit(1)


def _parse_vary(pairs: tuple[str, ...]) -> dict:
    vary = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.ClickException(f"--vary needs key=v1,v2,..., got {pair!r}")
        key, _, values = pair.partition("=")
        vary[key] = [yaml.safe_load(v) for v in values.split(",") if v != ""]
        if not vary[key]:
            raise click.ClickException(f"--vary {key} has no values")
    return vary


@main.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--vary", multiple=True, metavar="KEY=V1,V2,...",
              help="Dotted scenario key and its values; repeatable.")
@click.option("--seed", type=int, default=None, help="Override the base seed.")
@click.option("--out", type=click.Path(file_okay=False), default="sweep")
@click.option("--policy", type=click.Choice(POLICIES), default=None)
@click.option("--workers", type=int, default=1)
@click.pass_context
def sweep(ctx, scenario, vary, seed, out, policy, workers):
    """Run a grid of scenario variations and tabulate the results."""
    payload = {
        "scenario": _load_run_scenario(scenario, seed),
        "vary": _parse_vary(vary),
        "policy": policy,
        "workers": workers,
    }
    body = _post(ctx, "/sweeps", payload)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.csv").write_text(body["table"])
    failed = 0
    for idx, run_body in enumerate(body["runs"]):
        _write_files(run_body["files"], out_dir / f"run-{idx:03d}")
        failed += 0 if run_body["valid"] else 1
    click.echo(f"{len(body['runs'])} runs, table in {out_dir / 'sweep.csv'}")
    if failed:
        click.echo(f"{failed} runs failed validity checks", err=True)
        raise SystemExit(1)


@main.command("overlay-check")
@click.argument("dump", type=click.Path(exists=True))
@click.pass_context
def overlay_check(ctx, dump):
    """Validate an overlay dump (overlay.json from a run)."""
    path = Path(dump)
    if path.is_dir():
        path = path / "overlay.json"
    data = json.loads(path.read_text())
    body = _post(ctx, "/overlay/check", {"dump": data})
    if body["ok"]:
        click.echo("overlay dump is structurally sound")
        return
    for problem in body["problems"]:
        click.echo(f"  {problem}", err=True)
    raise SystemExit(1)


@main.command("regret-eval")
@click.argument("history", type=click.Path(exists=True, dir_okay=False))
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="Scenario file; defaults to the manifest beside the history.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the table here instead of stdout.")
@click.pass_context
def regret_eval(ctx, history, scenario_path, out):
    """Recompute per-episode equilibrium gaps from a packets.csv history."""
    hist_path = Path(history)
    if scenario_path:
        scn = load_scenario(scenario_path).model_dump(mode="json")
    else:
        manifest_path = hist_path.parent / "manifest.json"
        if not manifest_path.exists():
            raise click.ClickException(
                "no --scenario given and no manifest.json beside the history"
            )
        scn = json.loads(manifest_path.read_text())["scenario"]
    body = _post(ctx, "/regret/eval", {"history_csv": hist_path.read_text(), "scenario": scn})
    lines = [",".join(body["header"])]
    lines += [",".join(repr(x) for x in row) for row in body["rows"]]
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Also write the replayed run's files.")
@click.pass_context
def replay(ctx, manifest, out):
    """Re-run a manifest's scenario and verify byte-identical metrics."""
    path = Path(manifest)
    if path.is_dir():
        path = path / "manifest.json"
    body = _post(ctx, "/replays", {"manifest": json.loads(path.read_text())})
    if out:
        _write_files(body["run"]["files"], Path(out))
    if body["identical"]:
        click.echo("replay reproduced every metrics file exactly")
        return
    for diff in body["diffs"]:
        click.echo(f"  {diff}", err=True)
    raise SystemExit(1)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
