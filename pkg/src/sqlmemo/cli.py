"""Command-line entry points for the pipeline and its individual stages.

Exit codes: 0 success, 1 configuration error, 2 stage failure, 3 provider
failure.
"""

from __future__ import annotations

import json
import logging
import sys

import click

from .dataset_io import ValidationError
from .llm import LlmProvider, MockProvider, ProviderError, RemoteProvider
from .metrics import AccuracyMatrix, metrics
from .pipeline import Pipeline, RunConfig, StageError

EXIT_CONFIG, EXIT_STAGE, EXIT_PROVIDER = 1, 2, 3


def _provider(kind: str, mock_script: str | None) -> LlmProvider:
    if kind == "mock":
        if not mock_script:
            raise click.UsageError("--mock-script is required with --provider mock")
        return MockProvider.from_script_file(mock_script)
    return RemoteProvider()


def _pipeline(config, store, seed, permute, provider, mock_script, **overrides) -> Pipeline:
    perm = [int(x) for x in permute.split(",")] if permute else None
    try:
        cfg = RunConfig(stream_config=config, store_root=store, seed=seed,
                        permute=perm, **overrides)
        prov = _provider(provider, mock_script)
        return Pipeline(cfg, prov)
    except (ValidationError, FileNotFoundError, ValueError) as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except ProviderError as e:
        click.echo(f"provider error: {e}", err=True)
        sys.exit(EXIT_PROVIDER)


def _common(f):
    f = click.option("--config", required=True, help="task-stream config JSON")(f)
    f = click.option("--store", required=True, help="artifact store root")(f)
    f = click.option("--seed", default=7, show_default=True, type=int)(f)
    f = click.option("--permute", default=None,
                     help="comma-separated task permutation (cold start)")(f)
    f = click.option("--provider", default="mock", show_default=True,
                     type=click.Choice(["remote", "mock"]))(f)
    f = click.option("--mock-script", default=None, help="mock response script JSONL")(f)
    return f


def _run_stage(fn):
    try:
        out = fn()
        click.echo(json.dumps(out, sort_keys=True))
    except StageError as e:
        click.echo(f"stage error: {e}", err=True)
        sys.exit(EXIT_STAGE)
    except FileNotFoundError as e:
        click.echo(f"stage error: {e}", err=True)
        sys.exit(EXIT_STAGE)
    except ProviderError as e:
        click.echo(f"provider error: {e}", err=True)
        sys.exit(EXIT_PROVIDER)


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("run-stream")
@_common
@click.option("--k", default=80, show_default=True, type=int)
@click.option("--n-ske", default=10, show_default=True, type=int)
@click.option("--n-cfg", default=3, show_default=True, type=int)
@click.option("--lam", default=0.1, show_default=True, type=float)
@click.option("--m-max", default=3, show_default=True, type=int)
@click.option("--r-top", default=3, show_default=True, type=int)
@click.option("--epochs", default=40, show_default=True, type=int)
def run_stream(config, store, seed, permute, provider, mock_script,
               k, n_ske, n_cfg, lam, m_max, r_top, epochs):
    """Run the full pipeline over every task in the stream."""
    pipe = _pipeline(config, store, seed, permute, provider, mock_script,
                     k=k, n_ske=n_ske, n_cfg=n_cfg, lam=lam, m_max=m_max,
                     r_top=r_top, epochs=epochs)
    _run_stage(pipe.run_stream)


@main.command("analyze")
@_common
@click.option("--task", "task_index", required=True, type=int,
              help="1-based task position in the stream")
def analyze(config, store, seed, permute, provider, mock_script, task_index):
    """Extract the feature set and component bias for one task."""
    pipe = _pipeline(config, store, seed, permute, provider, mock_script)

    def run():
        current, bias = pipe.stage_analyze(task_index)
        return {"task_id": current.task_id, "feature_set_size": len(current.skeletons),
                "bias_size": len(bias.skeletons)}
    _run_stage(run)


@main.command("genmem")
@_common
@click.option("--task", "task_index", required=True, type=int)
def genmem(config, store, seed, permute, provider, mock_script, task_index):
    """Generate and calibrate skeleton-guided pseudo samples for one task."""
    pipe = _pipeline(config, store, seed, permute, provider, mock_script)

    def run():
        kept = pipe.stage_genmem(task_index)
        return {"kept": len(kept)}
    _run_stage(run)


@main.command("calibrate")
@_common
@click.option("--task", "task_index", required=True, type=int)
def calibrate(config, store, seed, permute, provider, mock_script, task_index):
    """Report calibration results for one task (requires genmem artifacts)."""
    pipe = _pipeline(config, store, seed, permute, provider, mock_script)

    def run():
        task = pipe.stream.tasks[task_index - 1]
        if not pipe.store.has(task.task_id, "xske_report.json"):
            raise StageError("calibrate",
                             f"missing genmem artifacts for task {task.task_id!r}; "
                             "run genmem first")
        return pipe.store.load_json("xske_report.json", task_id=task.task_id)
    _run_stage(run)


@main.command("synth")
@_common
@click.option("--task", "task_index", required=True, type=int)
def synth(config, store, seed, permute, provider, mock_script, task_index):
    """Synthesize intra-task entity-swap variants for one task."""
    pipe = _pipeline(config, store, seed, permute, provider, mock_script)

    def run():
        records = pipe.stage_synth(task_index)
        return {"variants": len(records)}
    _run_stage(run)


@main.command("eval")
@_common
def eval_cmd(config, store, seed, permute, provider, mock_script):
    """Print continual-learning metrics from the stored accuracy matrices."""
    pipe = _pipeline(config, store, seed, permute, provider, mock_script)

    def run():
        out = {}
        for kind in ("em", "ex"):
            matrix = AccuracyMatrix.from_json(pipe.store.load_json(f"matrix_{kind}.json"))
            out[kind] = metrics(matrix)
        return out
    _run_stage(run)


if __name__ == "__main__":
    main()
