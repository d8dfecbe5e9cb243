"""End-to-end tests for the orchestrator CLI on a toy hairpin corpus."""

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError
from typer.testing import CliRunner

sys.path.insert(0, str(Path(__file__).parent.parent))

from conftest import tiny_train_config
from analysis.evaluate import EVAL_COLUMNS
from analysis.fitness import REPORT_COLUMNS
from core.model import RnaDesignModel
from orchestrator import app, build_train_config
from runner.checkpoint import save_checkpoint
from runner.schema import RunConfig, SplitManifest
from runner.utils import read_json_file, write_json_file
from structures.formats import read_fasta
from structures.pdb import load_corpus, parse_pdb, write_pdb
from structures.synthetic import hairpin_corpus

runner = CliRunner()


def invoke(*args):
    return runner.invoke(app, ["--no-session-log", *[str(a) for a in args]])


@pytest.fixture
def pdb_dir(tmp_path):
    directory = tmp_path / "pdb"
    directory.mkdir()
    for ensemble in hairpin_corpus(6, np.random.default_rng(11), flexible_fraction=0.5):
        for state in ensemble.states:
            (directory / f"{state.id}.pdb").write_text(write_pdb(state), encoding="utf-8")
    return directory


@pytest.fixture
def checkpoint(tmp_path):
    cfg = tiny_train_config()
    return save_checkpoint(tmp_path / "tiny.ckpt", RnaDesignModel(cfg.model, seed=0))


@pytest.fixture
def manifest(tmp_path, pdb_dir):
    path = tmp_path / "split.json"
    result = invoke("split", pdb_dir, "--kind", "multi_state", "--out", path)
    assert result.exit_code == 0, result.output
    return path


@pytest.fixture
def train_manifest(tmp_path, pdb_dir):
    """Every ensemble in train, independent of how the toy corpus clusters."""
    ids = sorted(e.id for e in load_corpus(pdb_dir))
    manifest = SplitManifest(split_name="multi_state", train=ids, val=[], test=[],
                             cluster_assignments={}, seed=0)
    return write_json_file(manifest.model_dump(), tmp_path / "all_train.json")


def test_split_writes_reproducible_manifest(tmp_path, pdb_dir, manifest):
    data = read_json_file(manifest)
    assert data["split_name"] == "multi_state"
    assert len(data["train"]) + len(data["val"]) + len(data["test"]) == 6
    assert data["config_fingerprint"]

    again = tmp_path / "again.json"
    assert invoke("split", pdb_dir, "--kind", "multi_state", "--out", again).exit_code == 0
    assert again.read_bytes() == manifest.read_bytes()


def test_split_input_errors_exit_2(tmp_path, pdb_dir):
    assert invoke("split", tmp_path / "nowhere", "--out", tmp_path / "m.json").exit_code == 2
    assert invoke("split", pdb_dir, "--kind", "random", "--out", tmp_path / "m.json").exit_code == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert invoke("split", empty, "--out", tmp_path / "m.json").exit_code == 2


def test_featurize_writes_graph_per_chain(tmp_path, pdb_dir):
    out = tmp_path / "graphs"
    files = sorted(pdb_dir.glob("*.pdb"))[:2]
    result = invoke("featurize", *files, "--out", out, "--knn-k", 6, "--jobs", 2)
    assert result.exit_code == 0, result.output
    written = sorted(p.name for p in out.glob("*.json"))
    assert written == sorted(f"{p.stem}_A.json" for p in files)
    graph = json.loads((out / written[0]).read_text(encoding="utf-8"))
    assert graph["sequence"]


def test_design_writes_fasta_and_sidecar(tmp_path, pdb_dir, checkpoint):
    pdb = sorted(pdb_dir.glob("*.pdb"))[0]
    fixed = tmp_path / "fixed.txt"
    fixed.write_text("1-3\n", encoding="utf-8")

    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = invoke("design", checkpoint, pdb, "--out", out, "--n-samples", 4,
                        "--fixed-positions", fixed, "--seed", 5)
        assert result.exit_code == 0, result.output
        outputs.append(out)

    fastas = sorted(outputs[0].glob("*.fasta"))
    assert len(fastas) == 1
    records = read_fasta(fastas[0].read_text(encoding="utf-8"))
    assert len(records) == 4
    sidecar = read_json_file(fastas[0].with_suffix(".json"))
    native = sidecar["metadata"]["native"]
    assert all(seq[:3] == native[:3] for _, seq in records)
    assert sidecar["metadata"]["fixed_positions"] == {"0": native[0], "1": native[1], "2": native[2]}
    assert fastas[0].read_bytes() == (outputs[1] / fastas[0].name).read_bytes()


def test_design_rejects_bad_sampling(tmp_path, pdb_dir, checkpoint):
    pdb = sorted(pdb_dir.glob("*.pdb"))[0]
    result = invoke("design", checkpoint, pdb, "--out", tmp_path / "d", "--temperature", 0)
    assert result.exit_code == 2


def test_train_then_status(tmp_path, pdb_dir, train_manifest):
    cfg_path = tmp_path / "train.json"
    cfg_path.write_text(json.dumps(tiny_train_config(max_epochs=1).model_dump()), encoding="utf-8")
    runs = tmp_path / "runs"
    result = invoke("train", "--manifest", train_manifest, "--corpus", pdb_dir, "--out", runs,
                    "--config", cfg_path, "--seed", 0, "--no-progress")
    assert result.exit_code == 0, result.output
    run_dir = runs / "seed_0"
    assert (run_dir / "best.ckpt").exists()
    assert read_json_file(run_dir / "config.json")["train"]["seed"] == 0
    assert len(read_json_file(run_dir / "history.json")["epochs"]) == 1

    status = invoke("status", runs)
    assert status.exit_code == 0, status.output
    assert "best.ckpt" in status.output


def test_status_missing_dir(tmp_path):
    assert invoke("status", tmp_path / "absent").exit_code == 2


def test_eval_writes_table(tmp_path, pdb_dir, train_manifest, checkpoint):
    out = tmp_path / "eval"
    result = invoke("eval", checkpoint, "--manifest", train_manifest, "--corpus", pdb_dir, "--split", "train",
                    "--out", out, "--n-samples", 2, "--max-states", 2)
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out / "eval_train.csv")
    assert list(frame.columns) == EVAL_COLUMNS
    assert len(frame) == 6
    assert read_json_file(out / "eval_train.json")["metadata"]["split"] == "train"


def test_eval_unknown_split(tmp_path, pdb_dir, manifest, checkpoint):
    result = invoke("eval", checkpoint, "--manifest", manifest, "--corpus", pdb_dir, "--split", "holdout")
    assert result.exit_code == 2


def test_rank_writes_one_row_per_strategy_and_budget(tmp_path, pdb_dir, checkpoint):
    pdb = sorted(pdb_dir.glob("*.pdb"))[0]
    sequence = parse_pdb(pdb.read_text(encoding="utf-8"))[0].sequence
    variants = [sequence] + [sequence[:i] + ("A" if sequence[i] != "A" else "C") + sequence[i + 1:]
                             for i in range(6)]
    landscape = tmp_path / "landscape.csv"
    pd.DataFrame({"sequence": variants, "fitness": np.linspace(0.0, 1.0, len(variants))}).to_csv(
        landscape, index=False)

    out = tmp_path / "ranking"
    result = invoke("rank", checkpoint, pdb, "--landscape", landscape, "--budgets", "1,2",
                    "--n-sims", 20, "--out", out)
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out / "fitness_ranking.csv")
    assert list(frame.columns) == REPORT_COLUMNS
    assert len(frame) == 8
    assert read_json_file(out / "fitness_ranking.json")["metadata"]["wild_type"] == sequence


def test_rank_rejects_bad_budgets(tmp_path, pdb_dir, checkpoint):
    pdb = sorted(pdb_dir.glob("*.pdb"))[0]
    landscape = tmp_path / "landscape.csv"
    landscape.write_text("sequence,fitness\nAAAA,1.0\n", encoding="utf-8")
    result = invoke("rank", checkpoint, pdb, "--landscape", landscape, "--budgets", "ten")
    assert result.exit_code == 2


def test_flags_override_config_file(tmp_path):
    file_data = {"seeds": [1, 2], "lr": 0.01, "max_epochs": 4, "model": {"decoder_kind": "NAR"}}
    cfg = build_train_config(file_data, {"max_epochs": 2, "lr": None}, {"decoder_kind": None})
    assert (cfg.lr, cfg.max_epochs, cfg.decoder_kind) == (0.01, 2, "NAR")
    nested = build_train_config({"train": {"max_epochs": 3}}, {}, {"decoder_kind": "AR"})
    assert nested.max_epochs == 3 and nested.decoder_kind == "AR"


def test_run_config_rejects_missing_inputs_and_empty_seeds(tmp_path):
    with pytest.raises(ValidationError):
        RunConfig(subcommand="train", inputs=[str(tmp_path / "absent.json")])
    with pytest.raises(ValidationError):
        RunConfig(subcommand="train", seeds=[])
    assert RunConfig(subcommand="status", inputs=[str(tmp_path)]).seeds == [42]
