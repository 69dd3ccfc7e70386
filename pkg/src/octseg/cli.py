"""Command line client.

All the work happens in the run engine; each subcommand just builds a
request model and dispatches it, in-process by default or to a running
service when --server is given. Exit codes: 0 success, 1 usage errors,
2 missing or unreadable inputs, 3 algorithm degeneracy.

A key=value config file can preload any flag of `segment` (flag names
without the leading dashes, lists comma-separated); explicit flags win
over file values.
"""

import json
import sys

import click
import pydantic

from . import pipeline
from .errors import DegeneracyError, ParseError
from .schemas import (
    ConvertRequest,
    EvalRequest,
    PhantomRequest,
    SegmentRequest,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_DEGENERATE = 3

_STATUS_TO_EXIT = {400: EXIT_IO, 404: EXIT_IO, 409: EXIT_DEGENERATE, 422: EXIT_USAGE}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _post(server: str, endpoint: str, payload: dict) -> dict:
    import httpx

    try:
        resp = httpx.post(f"{server.rstrip('/')}{endpoint}", json=payload, timeout=3600.0)
    except httpx.HTTPError as exc:
        raise CliError(f"cannot reach {server}: {exc}", EXIT_IO)
    if resp.status_code >= 300:
        try:
            body = resp.json()
        except ValueError:
            body = {"message": resp.text}
        message = body.get("message") or json.dumps(body)
        raise CliError(f"server error ({resp.status_code}): {message}",
                       _STATUS_TO_EXIT.get(resp.status_code, EXIT_USAGE))
    return resp.json()


def _echo_report(report: dict):
    for stage in report.get("stages", []):
        click.echo(f"  {stage['name']:<16} {stage['ms']:9.1f} ms")
    click.echo(f"  {'total':<16} {report.get('total_ms', 0.0):9.1f} ms")
    for name, path in report.get("surfaces", {}).items():
        click.echo(f"surface {name}: {path}")
    if report.get("metrics"):
        click.echo(json.dumps(report["metrics"], indent=2))
    for note in report.get("warnings", []):
        click.echo(f"warning: {note}", err=True)


def _load_config_file(path) -> dict:
    values = {}
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise click.UsageError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            values[key.strip().replace("-", "_")] = raw.strip()
    return values


_BOOLISH = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def _coerce(key: str, raw: str):
    if key in ("align", "rescale"):
        try:
            return _BOOLISH[raw.lower()]
        except KeyError:
            raise click.UsageError(f"config value for {key} must be boolean, got {raw!r}")
    if key == "emit":
        return [e for e in raw.split(",") if e]
    if key in ("detector", "pre", "input", "out"):
        return raw
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


@click.group()
def cli():
    """Retinal layer segmentation toolkit."""


@cli.command()
@click.option("--input", "input_path", default=None,
              help="Scan directory of A-scan text files, or a phantom spec file.")
@click.option("--out", "out_dir", default=None, help="Output directory.")
@click.option("--pre", default=None,
              help="Preprocessor: none, binarize=<T>, otsu, or zs=<ops>.")
@click.option("--detector", default=None,
              type=click.Choice(["rpe", "ilm", "both", "canny"]))
@click.option("--w1", type=float, default=None, help="Edge-map cost weight.")
@click.option("--w2", type=float, default=None, help="Axial-gradient cost weight.")
@click.option("--w3", type=float, default=None, help="Extra cost term weight.")
@click.option("--sigma", type=float, default=None,
              help="Cross-slice Gaussian smoothing sigma for traced boundaries.")
@click.option("--align/--no-align", "align", default=None,
              help="Cross-correlation A-scan alignment before tracing.")
@click.option("--max-shift", type=int, default=None, help="Alignment lag bound.")
@click.option("--canny-sigma", type=float, default=None)
@click.option("--canny-low", type=float, default=None)
@click.option("--canny-high", type=float, default=None)
@click.option("--seed", type=int, default=None, help="Phantom seed override.")
@click.option("--threads", type=int, default=None, help="Worker threads.")
@click.option("--emit", default=None,
              help="Extra artifacts, comma list from ppm,obj,metrics.")
@click.option("--zscale", type=float, default=None, help="OBJ depth scale.")
@click.option("--rescale", is_flag=True, default=None,
              help="Stretch intensities into 8 bits on load and dump.")
@click.option("--config", "config_path", default=None,
              help="key=value file preloading any of these flags.")
@click.option("--server", default=None, help="Dispatch to a running service.")
def segment(config_path, server, **flags):
    """Detect layer surfaces in a volume and write them out."""
    rename = {"pre": "preprocessor", "zscale": "z_scale"}
    values = {}
    if config_path:
        try:
            file_values = _load_config_file(config_path)
        except OSError as exc:
            raise CliError(str(exc), EXIT_IO)
        for key, raw in file_values.items():
            key = rename.get(key, key)
            if key in ("input", "input_path"):
                values["input_path"] = raw
            elif key in ("out", "out_dir"):
                values["out_dir"] = raw
            else:
                values[key] = _coerce(key, raw)
    for key, val in flags.items():
        if val is None:
            continue
        key = rename.get(key, key)
        if key == "emit":
            val = [e for e in val.split(",") if e]
        values[key] = val

    for needed, flag in (("input_path", "--input"), ("out_dir", "--out")):
        if not values.get(needed):
            raise click.UsageError(f"missing {flag} (give the flag or set it in --config)")

    req = SegmentRequest(**values)
    if server:
        report = _post(server, "/segment", req.model_dump())
    else:
        report = pipeline.run_segment(req).model_dump()
    _echo_report(report)


@cli.command()
@click.option("--input", "input_path", required=True, help="Scan directory.")
@click.option("--out", "out_dir", required=True, help="Output directory.")
@click.option("--rescale", is_flag=True, default=False)
@click.option("--server", default=None)
def convert(input_path, out_dir, rescale, server):
    """Dump every slice of a text volume as a PPM image."""
    req = ConvertRequest(input_path=input_path, out_dir=out_dir, rescale=rescale)
    if server:
        report = _post(server, "/convert", req.model_dump())
    else:
        report = pipeline.run_convert(req).model_dump()
    _echo_report(report)


@cli.command()
@click.option("--out", "out_dir", required=True, help="Output directory.")
@click.option("--spec", "spec_path", default=None, help="Phantom spec file (key=value).")
@click.option("--seed", type=int, default=None, help="Seed override.")
@click.option("--server", default=None)
def phantom(out_dir, spec_path, seed, server):
    """Generate a synthetic volume with ground-truth surfaces."""
    req = PhantomRequest(out_dir=out_dir, spec_path=spec_path, seed=seed)
    if server:
        report = _post(server, "/phantom", req.model_dump())
    else:
        report = pipeline.run_phantom(req).model_dump()
    click.echo(json.dumps(report, indent=2))


@cli.command("eval")
@click.option("--detected", "detected_path", required=True, help="Detected surface grid.")
@click.option("--truth", "truth_path", required=True, help="Ground-truth surface grid.")
@click.option("--server", default=None)
def eval_cmd(detected_path, truth_path, server):
    """Score a detected surface against ground truth."""
    req = EvalRequest(detected_path=detected_path, truth_path=truth_path)
    if server:
        report = _post(server, "/eval", req.model_dump())
    else:
        report = pipeline.run_eval(req).model_dump()
    click.echo(json.dumps(report, indent=2))


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except pydantic.ValidationError as exc:
        click.echo(f"usage error: {exc}", err=True)
        return EXIT_USAGE
    except CliError as exc:
        click.echo(str(exc), err=True)
        return exc.code
    except ParseError as exc:
        click.echo(f"input error: {exc}", err=True)
        return EXIT_IO
    except (FileNotFoundError, NotADirectoryError, IsADirectoryError, PermissionError) as exc:
        click.echo(f"input error: {exc}", err=True)
        return EXIT_IO
    except DegeneracyError as exc:
        click.echo(f"degenerate input: {exc}", err=True)
        return EXIT_DEGENERATE
    except ValueError as exc:
        click.echo(f"usage error: {exc}", err=True)
        return EXIT_USAGE
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
