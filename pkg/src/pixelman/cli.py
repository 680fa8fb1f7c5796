"""Command-line entry points: edit, bench, serve.

Exit codes: 0 success, 2 invalid arguments, 3 backend unavailable,
4 job failure.
"""
from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from .bench import load_manifest, run_benchmark
from .config import load_config_file, sampler_config_from_dict
from .errors import BackendUnavailableError, ConfigurationError, PixelManError
from .io import load_image, load_mask, save_image
from .sampler import EditRequest, run_edit

EXIT_INVALID = 2
EXIT_BACKEND = 3
EXIT_FAILURE = 4


def _build_config(config_path, **overrides):
    if config_path:
        cfg = load_config_file(config_path)
        data = dataclasses.asdict(cfg)
    else:
        data = {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return sampler_config_from_dict(data)


@click.group()
def main():
    """Inversion-free consistent object editing."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True))
@click.option("--task", type=click.Choice(["move", "resize", "paste"]), default="move")
@click.option("--dx", type=int, default=0)
@click.option("--dy", type=int, default=0)
@click.option("--scale", type=float, default=1.0)
@click.option("--ref", "ref_path", type=click.Path(exists=True))
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--backend", type=str, default=None)
@click.option("--no-guidance", is_flag=True, help="disable latent optimization")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
def edit(input_path, mask_path, task, dx, dy, scale, ref_path, steps, seed,
         backend, no_guidance, out_dir, config_path):
    """Run one edit job; writes output.png and report.json to --out."""
    try:
        cfg = _build_config(config_path, steps=steps, seed=seed, backend=backend)
        if no_guidance:
            cfg.guidance.enabled = False
        request = EditRequest(
            task=task,
            image=load_image(input_path),
            object_mask=load_mask(mask_path),
            dx=dx, dy=dy, scale=scale,
            reference=load_image(ref_path) if ref_path else None,
        )
    except (ConfigurationError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INVALID)

    try:
        report = run_edit(request, cfg)
    except BackendUnavailableError as exc:
        click.echo(f"backend unavailable: {exc}", err=True)
        sys.exit(EXIT_BACKEND)
    except PixelManError as exc:
        click.echo(f"job failed: {exc}", err=True)
        sys.exit(EXIT_FAILURE)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image(report.output, out / "output.png")
    (out / "report.json").write_text(json.dumps(report.summary(), indent=2))
    click.echo(f"done: nfe={report.nfe} latency={report.latency:.2f}s -> {out}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--steps", type=int, default=None)
@click.option("--backend", type=str, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
def bench(manifest_path, steps, backend, seed, out_dir, config_path):
    """Run a task manifest and emit report.json / report.csv."""
    try:
        cfg = _build_config(config_path, steps=steps, seed=seed, backend=backend)
        manifest = load_manifest(manifest_path)
    except (ConfigurationError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    if not manifest.entries:
        click.echo("warning: empty manifest", err=True)
    try:
        report = run_benchmark(manifest, cfg, out_dir)
    except BackendUnavailableError as exc:
        click.echo(f"backend unavailable: {exc}", err=True)
        sys.exit(EXIT_BACKEND)
    click.echo(json.dumps(report.aggregate(), indent=2))


@main.command()
@click.option("--host", default="127.0.0.1", envvar="PIXELMAN_HOST")
@click.option("--port", type=int, default=8000, envvar="PIXELMAN_PORT")
@click.option("--backend", default="toy", envvar="PIXELMAN_BACKEND")
@click.option("--max-jobs", type=int, default=2, envvar="PIXELMAN_MAX_JOBS")
@click.option("--config", "config_path", type=click.Path(exists=True))
def serve(host, port, backend, max_jobs, config_path):
    """Start the HTTP edit service."""
    import uvicorn

    from .service import create_app
    default_config = {}
    if config_path:
        default_config = dataclasses.asdict(load_config_file(config_path))
    app = create_app(default_config=default_config, max_jobs=max_jobs,
                     backend_id=backend)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
