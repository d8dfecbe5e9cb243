"""Master orchestrator for the RNA sequence design pipeline.

Usage:
    # Featurize backbones into graph JSON files (default: $RNA_DESIGN_CACHE_DIR)
    python orchestrator.py featurize data/pdb/*.pdb

    # Cluster a corpus and write a split manifest
    python orchestrator.py split data/pdb --kind multi_state --out runs/split.json

    # Train (one run directory per seed)
    python orchestrator.py train --manifest runs/split.json --corpus data/pdb --seed 0 --seed 1 --seed 2

    # Design sequences for one or more conformations
    python orchestrator.py design runs/seed_0/best.ckpt state1.pdb state2.pdb --n-samples 16

    # Evaluate on the test split
    python orchestrator.py eval runs/seed_0/best.ckpt --manifest runs/split.json --corpus data/pdb

    # Rank a fitness landscape against random mutagenesis
    python orchestrator.py rank runs/seed_0/best.ckpt wt.pdb --landscape landscape.csv --budgets 10,100,1000

    # Summarize a run directory
    python orchestrator.py status runs

Logs go to stderr (and a session log under logs/sessions/); machine outputs are
written to files only. Exit codes: 0 success, 1 internal error, 2 input validation.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import pandas as pd
import typer
import yaml
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

import config
from analysis.evaluate import evaluate_split, ground_truth_structures, score_designs_mcc, summarize_split
from analysis.fitness import evaluate_strategies, load_landscape
from analysis.reporting import (
    print_budget_reports,
    print_designs,
    print_eval_summary,
    write_budget_reports,
    write_designs,
    write_table,
)
from core.errors import InputValidationError
from core.featurizer import dump_graph, featurize_ensemble, noised_states
from logging_config import get_session_log_path, log_environment_info, setup_pipeline_logging
from runner.checkpoint import load_checkpoint
from runner.sample import sample_designs
from runner.schema import RunConfig, SamplingConfig, SplitManifest, TrainConfig
from runner.train import ensemble_graph, select_states, train as train_model
from runner.utils import compute_config_fingerprint, derive_rng, file_sha256, read_json_file, write_json_file
from structures.clustering import cluster_structures
from structures.formats import parse_fixed_positions, read_dot_bracket_file
from structures.pdb import group_ensembles, load_corpus, parse_pdb
from structures.splits import make_multi_state_split, make_single_state_split, read_test_ids, select_split
from structures.types import Ensemble, RnaStructure

load_dotenv()

app = typer.Typer(help="Geometric RNA sequence design pipeline")
console = Console(stderr=True)
logger = logging.getLogger("orchestrator")

EXIT_INTERNAL = 1
EXIT_VALIDATION = 2


@app.callback()
def main(
    ctx: typer.Context,
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
    session_log: bool = typer.Option(True, help="Tee logs into logs/sessions/"),
) -> None:
    """Configure pipeline logging once per invocation."""
    command = ctx.invoked_subcommand or "cli"
    setup_pipeline_logging(
        level=logging.DEBUG if verbose else logging.INFO,
        log_file=get_session_log_path(command) if session_log else None,
    )


@contextmanager
def cli_errors(command: str) -> Iterator[None]:
    """Map pipeline exceptions onto exit codes (2 validation, 1 internal)."""
    try:
        yield
    except typer.Exit:
        raise
    except (InputValidationError, ValidationError, FileNotFoundError) as e:
        console.print(f"[red]✗ {command}: {e}[/red]")
        logger.error(f"{command} failed validation: {e}")
        raise typer.Exit(EXIT_VALIDATION)
    except Exception as e:
        console.print(f"[red]✗ {command}: internal error: {e}[/red]")
        logger.exception(f"{command} failed")
        raise typer.Exit(EXIT_INTERNAL)


def load_config_file(path: Optional[Path]) -> Dict[str, Any]:
    """JSON or YAML config as a dict (empty when no file is given)."""
    if path is None:
        return {}
    if not path.is_file():
        raise InputValidationError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) if path.suffix in (".yaml", ".yml") else json.load(f)
    if not isinstance(data, dict):
        raise InputValidationError(f"{path}: config must be a mapping")
    return data


def build_train_config(file_data: Dict[str, Any], overrides: Dict[str, Any], model_overrides: Dict[str, Any]) -> TrainConfig:
    """Config file values (top level or under "train"), overridden by non-None flags."""
    if "train" in file_data:
        data = dict(file_data["train"])
    else:
        data = {k: v for k, v in file_data.items() if k not in ("seeds", "sampling")}
    data.update({k: v for k, v in overrides.items() if v is not None})
    model = dict(data.get("model", {}))
    model.update({k: v for k, v in model_overrides.items() if v is not None})
    data["model"] = model
    return TrainConfig(**data)


def read_structures(paths: List[Path]) -> List[RnaStructure]:
    structures: List[RnaStructure] = []
    for path in paths:
        if not path.is_file():
            raise InputValidationError(f"PDB file not found: {path}")
        structures.extend(parse_pdb(path.read_text(encoding="utf-8"), name=path.stem))
    return structures


def parse_budgets(text: str) -> List[int]:
    try:
        budgets = [int(token) for token in text.split(",") if token.strip()]
    except ValueError:
        raise InputValidationError(f"Budgets must be comma-separated integers, got '{text}'")
    if not budgets or any(b < 0 for b in budgets):
        raise InputValidationError(f"Budgets must be non-negative, got '{text}'")
    return budgets


@app.command()
def featurize(
    inputs: List[Path] = typer.Argument(..., help="PDB files"),
    out: Optional[Path] = typer.Option(None, help=f"Output directory (default: ${config.CACHE_DIR_ENV})"),
    knn_k: int = typer.Option(config.KNN_K, help="Neighbours per node"),
    jobs: int = typer.Option(1, help="Parallel workers"),
) -> None:
    """Write one graph JSON per chain."""
    with cli_errors("featurize"):
        out_dir = out or Path(os.getenv(config.CACHE_DIR_ENV, config.DEFAULT_CACHE_DIR))
        out_dir.mkdir(parents=True, exist_ok=True)
        structures = read_structures(inputs)

        def write_one(structure: RnaStructure) -> Path:
            path = out_dir / f"{structure.id}.json"
            path.write_text(dump_graph(featurize_ensemble([structure], kmax=knn_k)), encoding="utf-8")
            return path

        with ThreadPoolExecutor(max_workers=max(jobs, 1)) as executor:
            written = list(executor.map(write_one, structures))
        console.print(f"[green]✓[/green] Featurized {len(written)} chains into {out_dir}")


@app.command()
def split(
    corpus: Path = typer.Argument(..., exists=True, file_okay=False, help="Directory of PDB files"),
    kind: str = typer.Option("multi_state", help="single_state or multi_state"),
    out: Path = typer.Option(Path("runs/split.json"), help="Manifest path"),
    test_ids: Optional[Path] = typer.Option(None, exists=True, help="Test id listing (single_state)"),
    seed: int = typer.Option(config.DEFAULT_SEED, help="Split seed"),
    threshold: float = typer.Option(config.TM_SCORE_THRESHOLD, help="TM-score clustering threshold"),
) -> None:
    """Cluster a corpus and write a train/val/test manifest."""
    with cli_errors("split"):
        if kind not in config.SPLIT_KINDS:
            raise InputValidationError(f"Unknown split kind '{kind}', expected one of {config.SPLIT_KINDS}")
        ensembles = load_corpus(corpus)
        clusters = cluster_structures(ensembles, threshold=threshold)
        listing = read_test_ids(test_ids.read_text(encoding="utf-8")) if test_ids else []
        if kind == "single_state":
            manifest = make_single_state_split(ensembles, clusters, listing, seed=seed)
        else:
            manifest = make_multi_state_split(ensembles, clusters, seed=seed)
        manifest.config_fingerprint = compute_config_fingerprint(
            {"kind": kind, "seed": seed, "threshold": threshold, "test_ids": listing,
             "corpus": sorted(e.id for e in ensembles)}
        )
        write_json_file(manifest.model_dump(), out)
        console.print(
            f"[green]✓[/green] {kind}: {len(manifest.train)} train / {len(manifest.val)} val / "
            f"{len(manifest.test)} test -> {out}"
        )


def _load_manifest(path: Path) -> SplitManifest:
    data = read_json_file(path)
    if data is None:
        raise InputValidationError(f"Manifest not found: {path}")
    return SplitManifest(**data)


@app.command()
def train(
    manifest: Path = typer.Option(..., exists=True, help="Split manifest"),
    corpus: Path = typer.Option(..., exists=True, file_okay=False, help="Directory of PDB files"),
    out: Path = typer.Option(Path("runs"), help="Output directory; one seed_<s>/ per seed"),
    config_file: Optional[Path] = typer.Option(None, "--config", exists=True, help="JSON/YAML config"),
    seed: Optional[List[int]] = typer.Option(None, help="Seed (repeatable)"),
    max_epochs: Optional[int] = typer.Option(None),
    max_steps: Optional[int] = typer.Option(None),
    lr: Optional[float] = typer.Option(None),
    max_states: Optional[int] = typer.Option(None),
    max_train_len: Optional[int] = typer.Option(None),
    decoder: Optional[str] = typer.Option(None, help="AR or NAR"),
    resume: bool = typer.Option(False, help="Continue from seed_<s>/last.ckpt"),
    progress: bool = typer.Option(True, help="Show a progress bar"),
) -> None:
    """Train one model per seed on the manifest's train split."""
    with cli_errors("train"):
        log_environment_info(logger)
        file_data = load_config_file(config_file)
        run = RunConfig(
            subcommand="train",
            inputs=[str(manifest), str(corpus)],
            output_dir=str(out),
            train=build_train_config(
                file_data,
                {"max_epochs": max_epochs, "max_steps": max_steps, "lr": lr, "max_states": max_states,
                 "max_train_len": max_train_len},
                {"decoder_kind": decoder},
            ),
            seeds=list(seed) if seed else file_data.get("seeds", [config.DEFAULT_SEED]),
        )
        split_manifest = _load_manifest(manifest)
        ensembles = load_corpus(corpus)

        table = Table(title="Training runs")
        table.add_column("Seed", style="cyan")
        table.add_column("Epochs")
        table.add_column("Best monitor", style="green")
        table.add_column("Checkpoint")
        for s in run.seeds:
            cfg = run.train.model_copy(update={"seed": s})
            run_dir = out / f"seed_{s}"
            write_json_file({"train": cfg.model_dump(), "manifest": str(manifest),
                             "manifest_fingerprint": split_manifest.config_fingerprint}, run_dir / "config.json")
            result = train_model(cfg, split_manifest, ensembles, run_dir, resume=resume, progress=progress)
            ckpt = result.best_checkpoint
            table.add_row(str(s), str(len(result.history)), f"{result.best_val_recovery:.3f}",
                          f"{ckpt} ({file_sha256(ckpt)[:12]})" if ckpt else "-")
        console.print(table)


def _design_ensembles(structures: List[RnaStructure], noised: int, seed: int) -> List[Ensemble]:
    ensembles = group_ensembles(structures)
    if noised <= 0:
        return ensembles
    expanded = []
    for e_idx, ensemble in enumerate(ensembles):
        rng = derive_rng(seed, config.STREAM_NOISE, e_idx)
        states = [s for state in ensemble.states for s in noised_states(state, noised, config.NOISE_SIGMA, rng)]
        expanded.append(Ensemble(sequence=ensemble.sequence, states=states, id=ensemble.id))
    return expanded


@app.command()
def design(
    checkpoint: Path = typer.Argument(..., exists=True, help="Model checkpoint"),
    inputs: List[Path] = typer.Argument(..., help="PDB files; chains with one sequence form one ensemble"),
    out: Path = typer.Option(Path("designs"), help="Output directory"),
    n_samples: int = typer.Option(config.DEFAULT_N_SAMPLES, help="Designs per ensemble"),
    temperature: float = typer.Option(config.DEFAULT_TEMPERATURE, help="Sampling temperature"),
    max_states: int = typer.Option(config.DEFAULT_MAX_STATES, help="Conformations used per ensemble"),
    fixed_positions: Optional[Path] = typer.Option(None, exists=True, help="Template or 1-based ranges to keep"),
    dot_bracket: Optional[Path] = typer.Option(None, exists=True, help="Ground-truth secondary structure"),
    noised_states_k: int = typer.Option(0, "--noised-states", help="Noised copies per input conformation"),
    seed: int = typer.Option(config.DEFAULT_SEED),
) -> None:
    """Sample designs; write FASTA plus a JSON sidecar per ensemble."""
    with cli_errors("design"):
        sampling = SamplingConfig(n_samples=n_samples, temperature=temperature, max_states=max_states, seed=seed)
        model = load_checkpoint(checkpoint).model
        ensembles = _design_ensembles(read_structures(inputs), noised_states_k, seed)
        if noised_states_k > 0:
            sampling.max_states = max(sampling.max_states, noised_states_k)
        truth_override = None
        if dot_bracket is not None:
            _, truth_override = read_dot_bracket_file(dot_bracket.read_text(encoding="utf-8"))

        for ensemble in ensembles:
            states = select_states(ensemble, sampling.max_states)
            mg = featurize_ensemble(states, kmax=model.cfg.knn_k)
            fixed = {}
            if fixed_positions is not None:
                chain_fixed = parse_fixed_positions(fixed_positions.read_text(encoding="utf-8"),
                                                    ensemble.sequence, len(ensemble))
                fixed = {node: chain_fixed[int(pos)] for node, pos in enumerate(mg.positions) if int(pos) in chain_fixed}
            designs = sample_designs(model, mg, sampling.n_samples, sampling.temperature,
                                     fixed=fixed, seed=sampling.seed, native=mg.sequence)
            overrides = {s.id: truth_override for s in states} if truth_override else None
            score_designs_mcc(designs, ground_truth_structures(states, mg, overrides))
            metadata = {
                "checkpoint_sha256": file_sha256(checkpoint),
                "ensemble_id": ensemble.id,
                "state_ids": mg.state_ids,
                "positions": [int(p) for p in mg.positions],
                "native": mg.sequence,
                "sampling": sampling.model_dump(),
                "fixed_positions": {str(k): v for k, v in sorted(fixed.items())},
                "config_fingerprint": compute_config_fingerprint(sampling.model_dump()),
            }
            paths = write_designs(designs, out, ensemble.id, metadata)
            print_designs(designs, title=f"Designs for {ensemble.id}")
            console.print(f"[green]✓[/green] Wrote {', '.join(str(p) for p in paths)}")


@app.command(name="eval")
def evaluate(
    checkpoint: Path = typer.Argument(..., exists=True, help="Model checkpoint"),
    manifest: Path = typer.Option(..., exists=True, help="Split manifest"),
    corpus: Path = typer.Option(..., exists=True, file_okay=False, help="Directory of PDB files"),
    split_name: str = typer.Option("test", "--split", help="train, val or test"),
    out: Path = typer.Option(Path("eval"), help="Output directory"),
    n_samples: int = typer.Option(config.DEFAULT_N_SAMPLES),
    temperature: float = typer.Option(config.DEFAULT_TEMPERATURE),
    max_states: int = typer.Option(config.DEFAULT_MAX_STATES),
    seed: int = typer.Option(config.DEFAULT_SEED),
    jobs: int = typer.Option(1, help="Parallel workers"),
) -> None:
    """Recovery, perplexity and self-consistency MCC over one split."""
    with cli_errors("eval"):
        if split_name not in ("train", "val", "test"):
            raise InputValidationError(f"Unknown split '{split_name}'")
        sampling = SamplingConfig(n_samples=n_samples, temperature=temperature, max_states=max_states, seed=seed)
        model = load_checkpoint(checkpoint).model
        ensembles = select_split(load_corpus(corpus), _load_manifest(manifest), split_name)
        if not ensembles:
            raise InputValidationError(f"Split '{split_name}' has no ensembles in {corpus}")

        def run_chunk(item):
            idx, ensemble = item
            return evaluate_split(model, [ensemble], n_samples, temperature, max_states, seed + idx * n_samples)

        with ThreadPoolExecutor(max_workers=max(jobs, 1)) as executor:
            frames = list(executor.map(run_chunk, enumerate(ensembles)))
        frame = pd.concat(frames, ignore_index=True)
        summary = summarize_split(frame)
        metadata = {
            "checkpoint_sha256": file_sha256(checkpoint),
            "split": split_name,
            "sampling": sampling.model_dump(),
            "summary": summary,
            "config_fingerprint": compute_config_fingerprint(sampling.model_dump()),
        }
        write_table(frame, out, f"eval_{split_name}", metadata)
        print_eval_summary(frame, title=f"Evaluation on {split_name}")
        console.print(
            f"[green]✓[/green] recovery {summary['recovery']:.3f}, native perplexity "
            f"{summary['native_perplexity']:.3f}, mcc {summary['mcc']:.3f} ({config.FOLDING_ORACLE})"
        )


@app.command()
def rank(
    checkpoint: Path = typer.Argument(..., exists=True, help="Model checkpoint"),
    backbone: List[Path] = typer.Argument(..., help="Wild-type PDB file(s); chains must share one sequence"),
    landscape_path: Path = typer.Option(..., "--landscape", exists=True, help="CSV with sequence,fitness"),
    budgets: str = typer.Option("10,100,1000", help="Comma-separated design budgets"),
    wild_type: Optional[str] = typer.Option(None, help="Wild-type sequence (default: the backbone's)"),
    single_state: bool = typer.Option(False, help="Condition on the first wild-type state only"),
    n_sims: int = typer.Option(config.DEFAULT_N_SIMS, help="Simulations per random baseline"),
    out: Path = typer.Option(Path("ranking"), help="Output directory"),
    seed: int = typer.Option(config.DEFAULT_SEED),
) -> None:
    """Perplexity ranking of a fitness landscape vs random mutagenesis."""
    with cli_errors("rank"):
        model = load_checkpoint(checkpoint).model
        ensembles = group_ensembles(read_structures(backbone))
        if len(ensembles) != 1:
            raise InputValidationError(f"Wild-type backbone files hold {len(ensembles)} different sequences")
        ensemble = ensembles[0]
        mg = ensemble_graph(ensemble, 1 if single_state else ensemble.k, model.cfg.knn_k)
        landscape = load_landscape(landscape_path, wild_type=wild_type or ensemble.sequence)
        reports = evaluate_strategies(
            landscape, parse_budgets(budgets), model=model, mg=mg, n_sims=n_sims, seed=seed,
            chain_length=len(ensemble),
        )
        metadata = {
            "checkpoint_sha256": file_sha256(checkpoint),
            "landscape_sha256": file_sha256(landscape_path),
            "wild_type": landscape.wild_type,
            "wild_type_fitness": landscape.wild_type_fitness,
            "n_states": mg.k,
            "config_fingerprint": compute_config_fingerprint(
                {"budgets": budgets, "n_sims": n_sims, "seed": seed, "single_state": single_state}
            ),
        }
        write_budget_reports(reports, out, metadata)
        print_budget_reports(reports)


@app.command()
def status(run_dir: Path = typer.Argument(Path("runs"), help="Run directory")) -> None:
    """Show checkpoints, training history and outputs under a run directory."""
    console.print("\n[bold]Pipeline Status[/bold]\n")
    if not run_dir.exists():
        console.print(f"[yellow]○[/yellow] {run_dir} does not exist")
        raise typer.Exit(EXIT_VALIDATION)

    manifests = sorted(p for p in run_dir.glob("*.json") if "split_name" in (read_json_file(p) or {}))
    for path in manifests:
        data = read_json_file(path)
        console.print(f"[green]✓[/green] Manifest {path.name} ({data['split_name']}): "
                      f"{len(data['train'])} train / {len(data['val'])} val / {len(data['test'])} test")

    histories = sorted(run_dir.rglob("history.json"))
    if not histories:
        console.print("[yellow]○[/yellow] No training runs")
    for path in histories:
        epochs = (read_json_file(path) or {}).get("epochs", [])
        if not epochs:
            console.print(f"[yellow]○[/yellow] {path.parent}: no completed epochs")
            continue
        best = max(epochs, key=lambda h: h["monitor"])
        last = epochs[-1]
        console.print(f"[green]✓[/green] {path.parent}: {len(epochs)} epochs, best recovery "
                      f"{best['monitor']:.3f} at epoch {best['epoch']}, last lr {last['lr']:.2e}")
        for name in ("best.ckpt", "last.ckpt"):
            if (path.parent / name).exists():
                console.print(f"  • {name}")

    outputs = sorted(run_dir.rglob("eval_*.json")) + sorted(run_dir.rglob("fitness_ranking.json"))
    for path in outputs:
        console.print(f"[green]✓[/green] Report {path.relative_to(run_dir)}")
    console.print()


if __name__ == "__main__":
    app()
