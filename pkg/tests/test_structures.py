"""Unit tests for structure IO, superposition, clustering and splits.

Tests:
- PDB parsing (masking, chains, errors) and writing
- Kabsch RMSD and TM-score invariances
- Greedy clustering by TM-score / sequence identity
- Single-state and multi-state split rules
- FASTA, dot-bracket and fixed-position formats
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.errors import InputValidationError, PdbParseError
from runner.schema import SplitManifest
from structures.align import kabsch_rmsd, superpose, tm_d0, tm_score
from structures.clustering import (
    UNCLUSTERED,
    cluster_members,
    cluster_structures,
    sequence_identity,
)
from structures.formats import (
    parse_dot_bracket,
    parse_fixed_positions,
    read_dot_bracket_file,
    read_fasta,
    to_dot_bracket,
    write_fasta,
)
from structures.pdb import group_ensembles, load_corpus, parse_pdb, write_pdb
from structures.splits import (
    TIE_BREAK_NOTE,
    intra_sequence_rmsd,
    make_multi_state_split,
    make_single_state_split,
    read_test_ids,
    select_split,
)
from structures.synthetic import (
    bend,
    flexible_ensemble,
    ideal_hairpin,
    random_coil,
    random_rotation,
    rigid_transform,
)
from structures.types import C4_BEAD, Ensemble, RnaStructure


# ---------------------------------------------------------------------------
# PDB IO
# ---------------------------------------------------------------------------

def test_write_then_parse_reproduces_backbone(hairpin):
    structure, _ = hairpin
    parsed = parse_pdb(write_pdb(structure), name="hp")
    assert len(parsed) == 1
    back = parsed[0]
    assert back.id == "hp_A"
    assert back.sequence == structure.sequence
    assert back.mask.all()
    assert np.allclose(back.beads, structure.beads, atol=1e-3)


def test_missing_bead_masks_residue(hairpin):
    structure, _ = hairpin
    lines = write_pdb(structure).splitlines()
    # drop the P atom of residue 3
    kept = [l for l in lines if not (l.startswith("ATOM") and l[12:16].strip() == "P" and int(l[22:26]) == 3)]
    parsed = parse_pdb("\n".join(kept))[0]
    assert len(parsed) == len(structure)
    assert not parsed.mask[2]
    assert parsed.mask.sum() == len(structure) - 1


def test_chains_become_separate_structures(hairpin):
    structure, _ = hairpin
    other = RnaStructure(
        id="x", sequence=structure.sequence, beads=structure.beads + 50.0,
        mask=structure.mask, chain_id="B",
    )
    text = write_pdb(structure).replace("END\n", "") + write_pdb(other)
    parsed = parse_pdb(text, name="two")
    assert [s.id for s in parsed] == ["two_A", "two_B"]


def test_unknown_atom_residue_raises():
    line = "ATOM      1  P   XYZ A   1       0.000   0.000   0.000  1.00  0.00           P"
    with pytest.raises(PdbParseError):
        parse_pdb(line)


def test_hetatm_ligands_are_skipped(hairpin):
    structure, _ = hairpin
    ligand = "HETATM  999  C1  LIG A 100       1.000   1.000   1.000  1.00  0.00           C"
    parsed = parse_pdb(ligand + "\n" + write_pdb(structure))[0]
    assert parsed.sequence == structure.sequence


def test_no_rna_raises():
    with pytest.raises(PdbParseError):
        parse_pdb("REMARK nothing here\nEND\n")


def test_malformed_coordinates_raise():
    line = "ATOM      1  P     G A   1       x.xxx   0.000   0.000  1.00  0.00           P"
    with pytest.raises(PdbParseError):
        parse_pdb(line)


def test_load_corpus_groups_by_sequence(tmp_path, hairpin):
    structure, _ = hairpin
    (tmp_path / "a.pdb").write_text(write_pdb(structure))
    (tmp_path / "b.pdb").write_text(write_pdb(bend(structure, 0.5)))
    coil = random_coil(15, np.random.default_rng(2))
    (tmp_path / "c.pdb").write_text(write_pdb(coil))

    ensembles = load_corpus(tmp_path)
    assert len(ensembles) == 2
    by_seq = {e.sequence: e for e in ensembles}
    assert [s.id for s in by_seq[structure.sequence].states] == ["a_A", "b_A"]
    assert [e.id for e in ensembles] == sorted(e.id for e in ensembles)


def test_load_corpus_missing_directory(tmp_path):
    with pytest.raises(InputValidationError):
        load_corpus(tmp_path / "nope")


def test_group_ensembles_ids_depend_on_sequence_only(hairpin):
    structure, _ = hairpin
    a = group_ensembles([structure])[0]
    b = group_ensembles([structure.with_beads(structure.beads, "_copy")])[0]
    assert a.id == b.id


def test_ensemble_rejects_mismatched_states(hairpin, coil):
    structure, _ = hairpin
    with pytest.raises(InputValidationError):
        Ensemble(sequence=structure.sequence, states=[structure, coil])


# ---------------------------------------------------------------------------
# Superposition
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_rmsd_zero_under_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    coords = rng.normal(size=(20, 3)) * 5.0
    moved = coords @ random_rotation(rng).T + rng.normal(size=3) * 10.0
    assert kabsch_rmsd(coords, moved) == pytest.approx(0.0, abs=1e-9)
    assert tm_score(coords, moved) == pytest.approx(1.0)


def test_superpose_maps_onto_target():
    rng = np.random.default_rng(3)
    coords = rng.normal(size=(10, 3))
    moved = coords @ random_rotation(rng).T + 4.0
    assert np.allclose(superpose(coords, moved), moved, atol=1e-9)


def test_rmsd_needs_three_points():
    with pytest.raises(InputValidationError):
        kabsch_rmsd(np.zeros((2, 3)), np.zeros((2, 3)))


def test_tm_d0_floor_and_growth():
    assert tm_d0(5) == pytest.approx(0.3)
    assert tm_d0(100) == pytest.approx(0.6 * np.sqrt(99.5) - 2.5)


def test_tm_score_drops_for_unrelated_structures():
    rng = np.random.default_rng(4)
    a = random_coil(40, rng).beads[:, C4_BEAD]
    b = random_coil(40, rng).beads[:, C4_BEAD]
    assert tm_score(a, b) < 0.45


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

def test_sequence_identity():
    assert sequence_identity("ACGU", "ACGU") == 1.0
    assert sequence_identity("ACGU", "ACGA") == 0.75
    assert sequence_identity("CGU", "AACGU") == 1.0


def _single(structure):
    return Ensemble(sequence=structure.sequence, states=[structure])


def test_same_fold_clusters_together():
    rng = np.random.default_rng(0)
    a, _ = ideal_hairpin(6, 4, rng, "a", stem_sequence="GGGGGG")
    b, _ = ideal_hairpin(6, 4, rng, "b", stem_sequence="CCCCCC")
    rotated = rigid_transform(b, random_rotation(rng), np.array([5.0, 0.0, 0.0]))
    coil = random_coil(16, rng, sequence="A" * 16)
    ensembles = [_single(a), _single(rotated), _single(coil)]

    clusters = cluster_structures(ensembles)
    assert clusters[ensembles[0].id] == clusters[ensembles[1].id]
    assert clusters[ensembles[2].id] != clusters[ensembles[0].id]


def test_long_rnas_are_unclustered():
    rng = np.random.default_rng(0)
    long_one = _single(random_coil(30, rng))
    short_one = _single(random_coil(12, rng))
    clusters = cluster_structures([long_one, short_one], max_length=20)
    assert clusters[long_one.id] == UNCLUSTERED
    assert clusters[short_one.id] == 0


def test_cluster_members_inverts_assignments():
    assert cluster_members({"b": 0, "a": 0, "c": 1}) == {0: ["a", "b"], 1: ["c"]}


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def _assert_whole_clusters(manifest: SplitManifest):
    where = {}
    for split in ("train", "val", "test"):
        for eid in getattr(manifest, split):
            cluster = manifest.cluster_assignments.get(eid, UNCLUSTERED)
            if cluster != UNCLUSTERED:
                where.setdefault(cluster, set()).add(split)
    assert all(len(s) == 1 for s in where.values())


def test_single_state_split_holds_out_test_clusters(corpus):
    clusters = cluster_structures(corpus)
    test_id = corpus[0].id
    manifest = make_single_state_split(corpus, clusters, [test_id], seed=1, val_size=3)

    assert test_id in manifest.test
    assert not set(manifest.train) & set(manifest.test)
    _assert_whole_clusters(manifest)
    test_cluster = clusters[test_id]
    cluster_size = sum(1 for c in clusters.values() if c == test_cluster)
    if cluster_size <= 5:
        assert all(eid in manifest.test for eid, c in clusters.items() if c == test_cluster)


def test_single_state_split_is_deterministic(corpus):
    clusters = cluster_structures(corpus)
    a = make_single_state_split(corpus, clusters, [corpus[1].id], seed=9, val_size=3)
    b = make_single_state_split(corpus, clusters, [corpus[1].id], seed=9, val_size=3)
    assert a.model_dump() == b.model_dump()


def test_oversized_test_cluster_keeps_only_listed_ids():
    rng = np.random.default_rng(0)
    stems = ["GGGGGG", "GGGGGC", "GGGGCG", "GGGCGG", "GGCGGG", "GCGGGG", "CGGGGG"]
    ensembles = [_single(ideal_hairpin(6, 4, rng, f"h{i}", stem_sequence=s)[0]) for i, s in enumerate(stems)]
    clusters = cluster_structures(ensembles)
    assert len(set(clusters.values())) == 1

    manifest = make_single_state_split(ensembles, clusters, [ensembles[0].id], seed=0)
    assert manifest.test == [ensembles[0].id]
    assert len(manifest.excluded) == 6
    assert not manifest.train and not manifest.val


def test_single_state_split_rejects_unknown_test_id(corpus):
    with pytest.raises(InputValidationError):
        make_single_state_split(corpus, cluster_structures(corpus), ["missing"])


def test_short_rnas_are_dropped():
    rng = np.random.default_rng(0)
    short = _single(random_coil(8, rng))
    ok = _single(random_coil(12, rng))
    clusters = cluster_structures([short, ok])
    with pytest.raises(InputValidationError):
        make_single_state_split([short, ok], clusters, [short.id])


def test_intra_sequence_rmsd():
    rng = np.random.default_rng(0)
    structure, _ = ideal_hairpin(6, 4, rng)
    assert intra_sequence_rmsd(_single(structure)) == 0.0
    moved = rigid_transform(structure, random_rotation(rng), np.ones(3), "_m")
    assert intra_sequence_rmsd(Ensemble(structure.sequence, [structure, moved])) == pytest.approx(0.0, abs=1e-9)
    assert intra_sequence_rmsd(flexible_ensemble(structure, 3, 0.8)) > 0.5


def test_multi_state_split_tests_flexible_clusters():
    rng = np.random.default_rng(0)
    rigid = [_single(ideal_hairpin(5, 4, rng, f"r{i}", stem_sequence=s)[0]) for i, s in enumerate(["GGGGG", "CCCCC", "GCGCG"])]
    base, _ = ideal_hairpin(7, 5, rng, "f", stem_sequence="GCGCGCG")
    flexible = flexible_ensemble(base, 3, 0.8)
    ensembles = rigid + [flexible]
    clusters = cluster_structures(ensembles)

    manifest = make_multi_state_split(ensembles, clusters, seed=0, test_size=2, val_size=2)
    assert manifest.test == [flexible.id]
    assert TIE_BREAK_NOTE in manifest.notes
    assert set(manifest.train) | set(manifest.val) == {e.id for e in rigid}
    assert not manifest.val
    _assert_whole_clusters(manifest)


def test_manifest_rejects_overlap():
    with pytest.raises(ValidationError):
        SplitManifest(split_name="single_state", train=["a"], val=["a"], test=[],
                      cluster_assignments={}, seed=0)


def test_select_split_orders_by_id(corpus):
    manifest = SplitManifest(
        split_name="single_state", train=[e.id for e in corpus[::-1]], val=[], test=[],
        cluster_assignments={}, seed=0,
    )
    assert [e.id for e in select_split(corpus, manifest, "train")] == sorted(e.id for e in corpus)


def test_read_test_ids_skips_comments():
    assert read_test_ids("a\n# header\nb  # trailing\n\n") == ["a", "b"]
    assert read_test_ids(None) == []


# ---------------------------------------------------------------------------
# Formats
# ---------------------------------------------------------------------------

def test_fasta_round_trip():
    records = [("one", "ACGU"), ("two desc", "GGCC")]
    assert read_fasta(write_fasta(records)) == records


def test_fasta_needs_header():
    with pytest.raises(InputValidationError):
        read_fasta("ACGU\n")


def test_dot_bracket_pairs():
    assert parse_dot_bracket("((..))") == [(0, 5), (1, 4)]
    assert parse_dot_bracket("(([..)).]") == [(0, 6), (1, 5), (2, 8)]
    assert to_dot_bracket(6, [(0, 5), (1, 4)]) == "((..))"
    assert to_dot_bracket(9, [(0, 6), (1, 5), (2, 8)]) == "(([..)).]"


def test_dot_bracket_unbalanced():
    with pytest.raises(InputValidationError):
        parse_dot_bracket("(()")
    with pytest.raises(InputValidationError):
        parse_dot_bracket("())")


def test_dot_bracket_file():
    assert read_dot_bracket_file(">x\nGGGAAACCC\n(((...)))\n") == ("GGGAAACCC", "(((...)))")
    assert read_dot_bracket_file("((..))") == (None, "((..))")
    with pytest.raises(InputValidationError):
        read_dot_bracket_file("GGAC\n((..))")


def test_fixed_positions_template():
    assert parse_fixed_positions("G--C", None, 4) == {0: "G", 3: "C"}
    with pytest.raises(InputValidationError):
        parse_fixed_positions("G--", None, 4)


def test_fixed_positions_ranges():
    native = "ACGUACGUAC"
    fixed = parse_fixed_positions("1-3, 10", native, 10)
    assert fixed == {0: "A", 1: "C", 2: "G", 9: "C"}
    with pytest.raises(InputValidationError):
        parse_fixed_positions("0-3", native, 10)
    with pytest.raises(InputValidationError):
        parse_fixed_positions("5-11", native, 10)
    with pytest.raises(InputValidationError):
        parse_fixed_positions("1-3", None, 10)
