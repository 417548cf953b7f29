"""Command-line interface.

Batch workflows (generate, train, eval, curve) drive the library
directly; `predict` can either run locally from a checkpoint or act as
a thin client against a running service (`--server`), and `serve`
launches the FastAPI app.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import datagen, pipeline
from .chem import Geometry
from .errors import OospaError
from .model import load_checkpoint


def _fail(exc: Exception) -> "click.ClickException":
    return click.ClickException(str(exc))


def _load_geometry_file(path) -> tuple[Geometry, tuple | None]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    coords = np.array(obj["coords"], dtype=float)
    elements = tuple(obj.get("elements") or ("H",) * coords.shape[0])
    geom = Geometry(coords, elements, family=obj.get("family", "custom"))
    edges = obj.get("edges")
    if edges is not None:
        edges = tuple(tuple(sorted(e)) for e in edges)
    return geom, edges


@click.group()
def main():
    """Orbital-optimized SPA data generation, training and prediction."""


@main.command()
@click.option("--family", type=click.Choice(datagen.FAMILIES), required=True)
@click.option("--n", type=int, required=True, help="Atom count (even, 4-12)")
@click.option("--count", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--workers", type=int, default=1, show_default=True)
def generate(family, n, count, seed, out, workers):
    """Generate a JSON Lines dataset of orbital-optimized records."""
    try:
        summary = datagen.generate_dataset(family, n, count, seed, out, workers=workers)
    except OospaError as exc:
        raise _fail(exc)
    click.echo(json.dumps({"out": out, **summary}))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--resume", type=click.Path(exists=True), default=None)
def train(config_path, out_dir, resume):
    """Train from a JSON config mirroring TrainConfig field names."""
    try:
        cfg = pipeline.TrainConfig.from_file(config_path)
        result = pipeline.train(cfg, out_dir, resume_from=resume)
    except OospaError as exc:
        raise _fail(exc)
    click.echo(
        json.dumps(
            {
                "checkpoint": str(result.checkpoint_path),
                "metrics": str(result.metrics_path),
                "best_epoch": result.best_epoch,
                "best_val_loss": result.best_val_loss,
            }
        )
    )


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--geometry", "geometry_path", type=click.Path(exists=True), required=True)
@click.option("--server", default=None, help="Service URL; used instead of a local checkpoint")
def predict(checkpoint, geometry_path, server):
    """Predict the orbital rotation for one geometry (JSON file)."""
    try:
        geom, edges = _load_geometry_file(geometry_path)
    except (OSError, KeyError, ValueError, OospaError) as exc:
        raise _fail(exc)
    if server:
        import httpx

        payload = {"coords": geom.coords.tolist(), "elements": list(geom.elements)}
        if edges is not None:
            payload["edges"] = [list(e) for e in edges]
        response = httpx.post(f"{server.rstrip('/')}/predict", json=payload, timeout=120.0)
        if response.status_code != 200:
            raise click.ClickException(f"server error {response.status_code}: {response.text}")
        click.echo(json.dumps(response.json()))
        return
    if checkpoint is None:
        raise click.ClickException("either --checkpoint or --server is required")
    try:
        model, _ = load_checkpoint(checkpoint)
        prediction = pipeline.predict_orbitals(model, geom, edges)
    except OospaError as exc:
        raise _fail(exc)
    click.echo(
        json.dumps(
            {
                "n": geom.n_atoms,
                "edges": [list(e) for e in prediction.edges],
                "a_upper": prediction.a_upper.tolist(),
                "m_oo": prediction.m_pred.tolist(),
                "elapsed_ms": prediction.elapsed_s * 1e3,
            }
        )
    )


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--dataset", type=click.Path(exists=True), required=True)
@click.option("--report", type=click.Path(dir_okay=False), required=True)
@click.option("--warm-start", is_flag=True, default=False)
def eval_command(checkpoint, dataset, report, warm_start):
    """Evaluate predicted-orbital energies against a reference dataset."""
    try:
        model, _ = load_checkpoint(checkpoint)
        records = datagen.load_dataset(dataset)
        result = pipeline.evaluate(model, records, warm_start=warm_start)
    except OospaError as exc:
        raise _fail(exc)
    result.write_csv(report)
    summary = {
        "records": len(result.rows),
        "mae_model": result.mae_model(),
        "mae_init": result.mae_init(),
        "per_size_mae": {str(k): v for k, v in result.per_size_mae().items()},
        "mean_predict_s": result.mean_predict_s(),
    }
    if warm_start:
        summary["warm_start_win_fraction"] = result.warm_start_win_fraction()
    click.echo(json.dumps(summary))


@main.command()
@click.option("--family", type=click.Choice(["linear_equidistant", "ring"]), required=True)
@click.option("--n", type=int, required=True)
@click.option("--grid", required=True, help="start:stop:steps in Angstrom")
@click.option("--mode", type=click.Choice(["reference", "predicted", "warm"]), default="reference")
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def curve(family, n, grid, mode, checkpoint, out):
    """Potential-energy curve over a spacing grid, written as CSV."""
    try:
        start, stop, steps = grid.split(":")
        spacings = np.linspace(float(start), float(stop), int(steps))
    except ValueError as exc:
        raise click.ClickException(f"bad --grid {grid!r}: expected start:stop:steps") from exc
    model = None
    try:
        if checkpoint is not None:
            model, _ = load_checkpoint(checkpoint)
        rows = pipeline.energy_curve(family, n, spacings, mode=mode, model=model)
    except OospaError as exc:
        raise _fail(exc)
    pipeline.write_curve_csv(rows, out)
    click.echo(json.dumps({"out": out, "rows": len(rows)}))


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(checkpoint, host, port):
    """Launch the FastAPI inference service."""
    import uvicorn

    from .service import create_app

    try:
        app = create_app(checkpoint)
    except OospaError as exc:
        raise _fail(exc)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
