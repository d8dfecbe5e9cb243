"""Split manifest validation: disjointness, whole clusters, and cluster-size caps."""

import json
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

import typer
from pydantic import ValidationError

import config
from runner.schema import SplitManifest
from structures.clustering import UNCLUSTERED
from structures.pdb import load_corpus
from structures.splits import cluster_sizes

app = typer.Typer(help="Validate split manifests")


def check_manifest(
    manifest: SplitManifest,
    corpus_ids: Optional[Set[str]] = None,
    max_cluster_sequences: int = config.MAX_CLUSTER_SEQUENCES,
) -> List[str]:
    """Rule violations of an already-parsed manifest (empty when valid).

    Rules:
      - no cluster has members in two of train/val/test;
      - validation clusters (and multi-state test clusters) hold at most
        `max_cluster_sequences` ids;
      - unclustered ids appear only in train (single-state test ids excepted);
      - excluded ids appear in no split list;
      - with a corpus, every listed id exists in it.
    """
    errors: List[str] = []
    placement: Dict[int, Set[str]] = {}
    for split in ("train", "val", "test"):
        for eid in getattr(manifest, split):
            cluster = manifest.cluster_assignments.get(eid, UNCLUSTERED)
            if cluster == UNCLUSTERED:
                if split == "val" or (split == "test" and manifest.split_name == "multi_state"):
                    errors.append(f"{eid}: unclustered id in {split}")
                continue
            placement.setdefault(cluster, set()).add(split)
    for cluster, splits in sorted(placement.items()):
        if len(splits) > 1:
            errors.append(f"cluster {cluster} spans {sorted(splits)}")

    capped = ["val"] if manifest.split_name == "single_state" else ["val", "test"]
    for split in capped:
        for cluster, size in sorted(cluster_sizes(manifest, split).items()):
            if cluster != UNCLUSTERED and size > max_cluster_sequences:
                errors.append(f"{split} cluster {cluster} has {size} sequences (max {max_cluster_sequences})")

    listed = set(manifest.train) | set(manifest.val) | set(manifest.test)
    for eid in sorted(set(manifest.excluded) & listed):
        errors.append(f"{eid}: excluded id also listed in a split")

    if corpus_ids is not None:
        for eid in sorted(listed - corpus_ids):
            errors.append(f"{eid}: not in corpus")
    return errors


def validate_manifest_file(
    manifest_path: Path,
    corpus_ids: Optional[Set[str]] = None,
) -> Tuple[bool, List[str]]:
    """Validate a manifest JSON file.

    Args:
        manifest_path: Path to the manifest
        corpus_ids: Ensemble ids of the corpus, when available

    Returns:
        Tuple of (is_valid, list_of_errors)
    """
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = SplitManifest(**json.load(f))
    except FileNotFoundError:
        return False, [f"File not found: {manifest_path}"]
    except json.JSONDecodeError as e:
        return False, [f"JSON parse error: {e}"]
    except ValidationError as e:
        return False, [
            f"{'.'.join(str(loc) for loc in error['loc']) or 'manifest'}: {error['msg']}"
            for error in e.errors()
        ]
    errors = check_manifest(manifest, corpus_ids)
    return not errors, errors


@app.command()
def main(
    manifests: List[Path] = typer.Argument(..., help="Manifest JSON files"),
    corpus: Optional[Path] = typer.Option(None, help="Corpus directory of PDB files"),
) -> None:
    """Validate one or more split manifests; exit 1 if any fails."""
    corpus_ids = None
    if corpus is not None:
        corpus_ids = {e.id for e in load_corpus(corpus)}

    results = [(path, *validate_manifest_file(path, corpus_ids)) for path in manifests]
    for path, is_valid, errors in results:
        if is_valid:
            print(f"✓ {path.name}")
        else:
            print(f"✗ {path.name}")
            for error in errors:
                print(f"  - {error}")

    valid_count = sum(1 for _, is_valid, _ in results if is_valid)
    print(f"\n{valid_count}/{len(results)} manifests valid")
    if valid_count < len(results):
        raise typer.Exit(1)


if __name__ == "__main__":
    app()
