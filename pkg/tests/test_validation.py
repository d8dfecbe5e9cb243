"""Unit tests for split manifest validation."""

import json
import sys
from pathlib import Path

import pytest
from typer.testing import CliRunner

sys.path.insert(0, str(Path(__file__).parent.parent))

from runner.schema import SplitManifest
from validation.validate_split import app, check_manifest, validate_manifest_file


def _manifest(**overrides) -> SplitManifest:
    data = {
        "split_name": "multi_state",
        "train": ["a", "b"],
        "val": ["c"],
        "test": ["d", "e"],
        "cluster_assignments": {"a": 0, "b": 0, "c": 1, "d": 2, "e": 2},
        "seed": 0,
    }
    data.update(overrides)
    return SplitManifest(**data)


def test_valid_manifest_has_no_errors():
    assert check_manifest(_manifest()) == []


def test_cluster_spanning_splits():
    manifest = _manifest(cluster_assignments={"a": 0, "b": 0, "c": 0, "d": 2, "e": 2})
    errors = check_manifest(manifest)
    assert errors == ["cluster 0 spans ['train', 'val']"]


def test_cluster_size_cap():
    ids = [f"t{i}" for i in range(6)]
    manifest = _manifest(test=ids, cluster_assignments={**{i: 3 for i in ids}, "a": 0, "b": 0, "c": 1})
    assert check_manifest(manifest) == ["test cluster 3 has 6 sequences (max 5)"]
    single = _manifest(split_name="single_state", test=ids,
                       cluster_assignments={**{i: 3 for i in ids}, "a": 0, "b": 0, "c": 1})
    assert check_manifest(single) == []


def test_unclustered_ids_belong_to_train():
    manifest = _manifest(cluster_assignments={"a": 0, "b": 0, "d": 2, "e": 2})
    assert check_manifest(manifest) == ["c: unclustered id in val"]
    single = _manifest(split_name="single_state", cluster_assignments={"a": 0, "b": 0, "c": 1})
    assert check_manifest(single) == []


def test_excluded_and_corpus_checks():
    manifest = _manifest(excluded=["a", "z"])
    assert check_manifest(manifest) == ["a: excluded id also listed in a split"]
    assert check_manifest(_manifest(), corpus_ids={"a", "b", "c", "d"}) == ["e: not in corpus"]


def test_validate_manifest_file(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps(_manifest().model_dump()), encoding="utf-8")
    assert validate_manifest_file(good) == (True, [])

    missing_ok, missing_errors = validate_manifest_file(tmp_path / "absent.json")
    assert not missing_ok and "File not found" in missing_errors[0]

    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    assert validate_manifest_file(broken)[1][0].startswith("JSON parse error")

    overlap = tmp_path / "overlap.json"
    data = _manifest().model_dump()
    data["val"] = ["a"]
    overlap.write_text(json.dumps(data), encoding="utf-8")
    ok, errors = validate_manifest_file(overlap)
    assert not ok and "overlap" in errors[0]


@pytest.mark.parametrize("valid", [True, False])
def test_cli_exit_code(tmp_path, valid):
    manifest = _manifest() if valid else _manifest(excluded=["a"])
    path = tmp_path / "split.json"
    path.write_text(json.dumps(manifest.model_dump()), encoding="utf-8")
    result = CliRunner().invoke(app, [str(path)])
    assert result.exit_code == (0 if valid else 1)
    expected = "1/1 manifests valid" if valid else "0/1 manifests valid"
    assert expected in result.output
