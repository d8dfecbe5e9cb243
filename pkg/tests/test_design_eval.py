"""Unit tests for sequence design, metrics, folding and evaluation.

Tests:
- Sampling: fixed positions, logit bias, greedy limit, seeding
- Scoring: perplexity anchors and agreement with sampled log-probabilities
- Metrics: recovery, perplexity, diversity
- Nussinov oracle against brute force; MCC; 3D-derived pairs
- Evaluation rows, self-consistency and the graph neighbour count
- Trained AR and NAR models on held-out hairpin clusters
"""

import sys
from functools import lru_cache
from itertools import product
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

import analysis.evaluate as evaluate_module
import config
from conftest import tiny_config
from analysis.evaluate import (
    EVAL_COLUMNS,
    evaluate_ensemble,
    evaluate_split,
    ground_truth_structures,
    score_designs_mcc,
    self_consistency,
    summarize_split,
)
from analysis.folding import (
    SecondaryStructure,
    can_pair,
    mcc,
    nussinov_fold,
    pairs_from_structure,
)
from analysis.metrics import (
    DesignResult,
    diversity,
    hamming,
    perplexity_from_logprobs,
    recovery,
    summarize_designs,
)
from core.errors import DimensionError, InputValidationError
from core.featurizer import featurize_ensemble
from core.model import RnaDesignModel
from runner.sample import (
    design_distribution,
    sample,
    sample_designs,
    score_sequences,
    sequence_logprobs,
)
from runner.schema import TrainConfig
from runner.train import train
from structures.clustering import cluster_structures
from structures.splits import make_multi_state_split, select_split
from structures.synthetic import flexible_ensemble, hairpin_corpus, random_coil
from structures.types import Ensemble


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def test_design_distribution_temperature_and_bias():
    logits = np.array([[1.0, 2.0, 0.0, -1.0]])
    plain = design_distribution(logits, None, 1.0)
    assert np.allclose(plain, np.exp(logits) / np.exp(logits).sum())
    sharp = design_distribution(logits, None, 0.5)
    assert sharp[0, 1] > plain[0, 1]
    biased = design_distribution(logits, np.array([0.0, 0.0, 5.0, 0.0]), 1.0)
    assert biased.argmax() == 2


def test_fixed_positions_are_kept(ar_model, coil_graph):
    template = "GACU" * 3
    fixed = {i: b for i, b in enumerate(template)}
    designs = sample_designs(ar_model, coil_graph, 4, 1.0, fixed=fixed, seed=0)
    assert all(d.sequence == template for d in designs)


def test_partial_fixed_positions(ar_model, coil_graph):
    designs = sample_designs(ar_model, coil_graph, 6, 1.0, fixed={0: "U", 5: "C"}, seed=1)
    assert all(d.sequence[0] == "U" and d.sequence[5] == "C" for d in designs)


def test_large_bias_forces_base(ar_model, coil_graph):
    bias = np.zeros((coil_graph.n, 4))
    bias[:, config.BASE_TO_INDEX["G"]] = 30.0
    designs = sample_designs(ar_model, coil_graph, 4, 1.0, logit_bias=bias, seed=2)
    assert all(set(d.sequence) == {"G"} for d in designs)


def test_greedy_limit_is_deterministic(ar_model, coil_graph):
    a = sample_designs(ar_model, coil_graph, 3, 1e-6, seed=0)
    b = sample_designs(ar_model, coil_graph, 3, 1e-6, seed=99)
    assert len({d.sequence for d in a + b}) == 1


def test_same_seed_same_designs(ar_model, coil_graph):
    a = sample_designs(ar_model, coil_graph, 4, 1.0, seed=5)
    b = sample_designs(ar_model, coil_graph, 4, 1.0, seed=5)
    assert [d.sequence for d in a] == [d.sequence for d in b]
    assert sample(ar_model, coil_graph, 1.0, seed=5).sequence == a[0].sequence


def test_sample_index_and_recovery(ar_model, coil_graph):
    designs = sample_designs(ar_model, coil_graph, 3, 1.0, seed=0, native=coil_graph.sequence)
    assert [d.sample_index for d in designs] == [0, 1, 2]
    for d in designs:
        assert d.recovery == pytest.approx(recovery(d.sequence, coil_graph.sequence))


@pytest.mark.parametrize("kind_fixture", ["ar_model", "nar_model"])
def test_sampled_logprobs_match_teacher_forced_scores(kind_fixture, coil_graph, request):
    model = request.getfixturevalue(kind_fixture)
    designs = sample_designs(model, coil_graph, 3, 1.0, seed=3)
    scored = sequence_logprobs(model, coil_graph, [d.sequence for d in designs])
    for d, row in zip(designs, scored):
        assert np.allclose(d.per_position_logprob, row, atol=1e-9)
    ppl = score_sequences(model, coil_graph, [d.sequence for d in designs])
    assert np.allclose(ppl, [d.perplexity for d in designs])


def test_sampling_rejects_bad_inputs(ar_model, coil_graph):
    with pytest.raises(InputValidationError):
        sample_designs(ar_model, coil_graph, 1, 0.0)
    with pytest.raises(InputValidationError):
        sample_designs(ar_model, coil_graph, 1, 1.0, fixed={0: "T"})
    with pytest.raises(InputValidationError):
        sample_designs(ar_model, coil_graph, 1, 1.0, fixed={99: "A"})
    with pytest.raises(DimensionError):
        sample_designs(ar_model, coil_graph, 1, 1.0, logit_bias=np.zeros((3, 4)))


def test_untrained_recovery_near_chance(ar_model):
    rng = np.random.default_rng(21)
    recoveries = []
    for idx in range(8):
        mg = featurize_ensemble([random_coil(40, rng, structure_id=f"c{idx}")], kmax=8)
        designs = sample_designs(ar_model, mg, 4, 0.1, seed=idx, native=mg.sequence)
        recoveries.extend(d.recovery for d in designs)
    assert 0.15 <= np.mean(recoveries) <= 0.35


# ---------------------------------------------------------------------------
# Perplexity anchors
# ---------------------------------------------------------------------------

def _zero_head(model):
    model.nar_out.weight.data[...] = 0.0
    model.nar_out.bias.data[...] = 0.0


def test_uniform_model_perplexity_is_four(nar_model, coil_graph):
    _zero_head(nar_model)
    assert score_sequences(nar_model, coil_graph, [coil_graph.sequence])[0] == pytest.approx(4.0)


def test_certain_model_perplexity_is_one(nar_model, coil_graph):
    _zero_head(nar_model)
    nar_model.nar_out.bias.data[config.BASE_TO_INDEX["G"]] = 50.0
    ppl = score_sequences(nar_model, coil_graph, ["G" * coil_graph.n])[0]
    assert ppl == pytest.approx(1.0, abs=1e-6)


def test_unknown_bases_are_not_scored(nar_model, coil_graph):
    _zero_head(nar_model)
    seq = "N" + coil_graph.sequence[1:]
    row = sequence_logprobs(nar_model, coil_graph, [seq])[0]
    assert np.isnan(row[0])
    assert score_sequences(nar_model, coil_graph, [seq])[0] == pytest.approx(4.0)


def test_scoring_rejects_wrong_length(ar_model, coil_graph):
    with pytest.raises(DimensionError):
        score_sequences(ar_model, coil_graph, ["ACGU"])


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def test_recovery():
    assert recovery("ACGU", "ACGU") == 1.0
    assert recovery("ACGA", "ACGU") == 0.75
    assert recovery("AAAA", "ANNA") == 1.0
    assert recovery("AAAA", "NNNN") == 0.0
    with pytest.raises(DimensionError):
        recovery("AC", "ACG")


def test_perplexity_from_logprobs():
    assert perplexity_from_logprobs(np.log(np.full(10, 0.25))) == pytest.approx(4.0)
    assert perplexity_from_logprobs([0.0, 0.0]) == 1.0
    assert np.isnan(perplexity_from_logprobs([]))


def test_diversity_and_hamming():
    assert hamming("ACGU", "ACGA") == 1
    assert diversity(["AAAA"]) == 0.0
    assert diversity(["AAAA", "AAAA"]) == 0.0
    assert diversity(["AAAA", "UUUU"]) == 1.0


def test_summarize_designs():
    designs = [
        DesignResult.from_logprobs("AAAA", np.log([0.5] * 4), recovery=0.5, mcc=1.0),
        DesignResult.from_logprobs("AAUU", np.log([0.25] * 4), recovery=1.0),
    ]
    summary = summarize_designs(designs)
    assert summary["n_designs"] == 2
    assert summary["sample_perplexity"] == pytest.approx(3.0)
    assert summary["recovery"] == pytest.approx(0.75)
    assert summary["mcc"] == pytest.approx(1.0)
    assert summary["diversity"] == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# Folding oracle
# ---------------------------------------------------------------------------

def _brute_force_max_pairs(sequence: str, min_loop: int = config.MIN_HAIRPIN_LOOP) -> int:
    @lru_cache(maxsize=None)
    def best(i: int, j: int) -> int:
        if j - i <= min_loop:
            return 0
        value = best(i + 1, j)
        for k in range(i + min_loop + 1, j + 1):
            if can_pair(sequence[i], sequence[k]):
                value = max(value, 1 + best(i + 1, k - 1) + best(k + 1, j))
        return value

    return best(0, len(sequence) - 1)


def _assert_valid_nested(structure: SecondaryStructure):
    pairs = sorted(structure.pairs)
    for a, (i, j) in enumerate(pairs):
        assert j - i >= 4
        for k, l in pairs[a + 1:]:
            assert not (i < k < j < l)


def test_nussinov_anchors():
    assert len(nussinov_fold("AAAA")) == 0
    assert nussinov_fold("GGGAAAACCC").pairs == frozenset({(0, 9), (1, 8), (2, 7)})
    assert nussinov_fold("GGGAAAACCC").dot_bracket() == "(((....)))"
    assert len(nussinov_fold("GAAAU")) == 1
    assert len(nussinov_fold("GAAU")) == 0


def test_nussinov_matches_brute_force_length_twelve():
    rng = np.random.default_rng(12)
    for _ in range(200):
        sequence = "".join(rng.choice(list(config.ALPHABET), size=12))
        folded = nussinov_fold(sequence)
        assert len(folded) == _brute_force_max_pairs(sequence)
        _assert_valid_nested(folded)
        assert all(can_pair(sequence[i], sequence[j]) for i, j in folded.pairs)


@pytest.mark.parametrize("min_loop", [0, 1, 2, 4, 5])
def test_nussinov_honours_min_loop(min_loop):
    rng = np.random.default_rng(min_loop)
    for _ in range(25):
        sequence = "".join(rng.choice(list(config.ALPHABET), size=10))
        folded = nussinov_fold(sequence, min_loop=min_loop)
        assert folded.min_loop == min_loop
        assert len(folded) == _brute_force_max_pairs(sequence, min_loop)
        assert all(j - i > min_loop for i, j in folded.pairs)


@pytest.mark.slow
def test_nussinov_exhaustive_length_eight():
    for letters in product(config.ALPHABET, repeat=8):
        sequence = "".join(letters)
        assert len(nussinov_fold(sequence)) == _brute_force_max_pairs(sequence)


def test_fold_rejects_empty():
    with pytest.raises(InputValidationError):
        nussinov_fold("")


def test_secondary_structure_validation():
    with pytest.raises(InputValidationError):
        SecondaryStructure.from_pairs(10, [(0, 3)])
    with pytest.raises(InputValidationError):
        SecondaryStructure.from_pairs(10, [(0, 5), (0, 9)])
    restricted = SecondaryStructure.from_pairs(10, [(0, 9), (1, 8)]).restrict([0, 1, 2, 3, 4, 5, 6, 7, 9])
    assert restricted.pairs == frozenset({(0, 8)})


def test_secondary_structure_uses_its_min_loop():
    assert SecondaryStructure.from_pairs(10, [(0, 2)], min_loop=1).pairs == frozenset({(0, 2)})
    with pytest.raises(InputValidationError):
        SecondaryStructure.from_pairs(10, [(0, 4)], min_loop=4)

    folded = nussinov_fold("GGAACC", min_loop=2)
    assert folded.pairs == frozenset({(0, 5), (1, 4)})
    assert len(nussinov_fold("GGAACC")) == 0
    assert mcc(folded, folded) == pytest.approx(1.0)

    restricted = folded.restrict([0, 1, 2, 4, 5])
    assert restricted.min_loop == 2
    assert restricted.pairs == frozenset({(0, 4)})


def test_mcc_values():
    truth = SecondaryStructure.from_dot_bracket("(((....)))")
    assert mcc(truth, truth) == pytest.approx(1.0)
    empty = SecondaryStructure.from_pairs(10, [])
    assert mcc(empty, empty) == 0.0
    assert mcc(empty, truth) == 0.0
    half = SecondaryStructure.from_pairs(10, [(0, 9)])
    # 21 candidate pairs with span >= 4: tp=1, fp=0, fn=2, tn=18
    assert mcc(half, truth) == pytest.approx(18 / np.sqrt(1 * 3 * 18 * 20))
    with pytest.raises(InputValidationError):
        mcc(half, SecondaryStructure.from_pairs(11, []))


def test_pairs_from_ideal_hairpin(hairpin):
    structure, pairs = hairpin
    assert pairs_from_structure(structure).pairs == frozenset(pairs)


def test_pairs_from_structure_ignores_masked(hairpin):
    structure, pairs = hairpin
    structure.mask[0] = False
    assert pairs_from_structure(structure).pairs == frozenset(pairs[1:])


def test_dot_bracket_overrides_geometry(hairpin):
    structure, _ = hairpin
    db = "." * len(structure)
    assert len(pairs_from_structure(structure, dot_bracket=db)) == 0
    with pytest.raises(InputValidationError):
        pairs_from_structure(structure, dot_bracket="...")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def test_ground_truth_follows_graph_nodes(hairpin):
    structure, pairs = hairpin
    structure.mask[1] = False
    mg = featurize_ensemble([structure], kmax=8)
    truth = ground_truth_structures([structure], mg)[0]
    assert truth.n == mg.n
    expected = {(i - int(i > 1), j - 1) for i, j in pairs if i != 1}
    assert truth.pairs == frozenset(expected)


def test_score_designs_mcc_sets_fields():
    truth = SecondaryStructure.from_dot_bracket("(((....)))")
    designs = [
        DesignResult.from_logprobs("GGGAAAACCC", np.zeros(10)),
        DesignResult.from_logprobs("AAAAAAAAAA", np.zeros(10)),
    ]
    mean = score_designs_mcc(designs, [truth])
    assert designs[0].mcc == pytest.approx(1.0)
    assert designs[1].mcc == 0.0
    assert designs[0].details["folded"] == "(((....)))"
    assert mean == pytest.approx(0.5)


def test_self_consistency_in_range(ar_model, hairpin):
    structure, _ = hairpin
    ensemble = flexible_ensemble(structure, 2, 0.3)
    score = self_consistency(ar_model, ensemble, n_samples=3, max_states=2, knn_k=8)
    assert -1.0 <= score <= 1.0


def test_self_consistency_with_dot_brackets(ar_model, hairpin):
    structure, _ = hairpin
    ensemble = Ensemble(structure.sequence, [structure])
    score = self_consistency(ar_model, ensemble, n_samples=2, knn_k=8,
                             dot_brackets={structure.id: "." * len(structure)})
    assert score == 0.0


def test_evaluate_ensemble_row(ar_model, hairpin):
    structure, _ = hairpin
    row = evaluate_ensemble(ar_model, Ensemble(structure.sequence, [structure]), n_samples=2, knn_k=8)
    assert list(row) == EVAL_COLUMNS
    assert row["folding_oracle"] == config.FOLDING_ORACLE
    assert row["n_nodes"] == len(structure)
    assert 0.0 <= row["recovery"] <= 1.0
    assert row["native_perplexity"] > 1.0


def test_evaluate_split_frame(ar_model, corpus):
    frame = evaluate_split(ar_model, corpus[:3], n_samples=2, max_states=2)
    assert list(frame.columns) == EVAL_COLUMNS
    assert len(frame) == 3
    summary = summarize_split(frame)
    assert summary["n_ensembles"] == 3
    assert summary["folding_oracle"] == config.FOLDING_ORACLE
    assert 0.0 <= summary["recovery"] <= 1.0


def test_evaluate_split_is_reproducible(ar_model, corpus):
    a = evaluate_split(ar_model, corpus[:2], n_samples=2, seed=4)
    b = evaluate_split(ar_model, corpus[:2], n_samples=2, seed=4)
    assert a.equals(b)


def test_evaluation_graphs_use_model_neighbour_count(monkeypatch, corpus):
    model = RnaDesignModel(tiny_config().model_copy(update={"knn_k": 4}), seed=1)
    seen = []
    build = evaluate_module.ensemble_graph

    def recording_graph(ensemble, max_states, knn_k, *args, **kwargs):
        seen.append(knn_k)
        return build(ensemble, max_states, knn_k, *args, **kwargs)

    monkeypatch.setattr(evaluate_module, "ensemble_graph", recording_graph)
    evaluate_split(model, corpus[:2], n_samples=1)
    assert seen and set(seen) == {4}


@pytest.mark.slow
def test_trained_models_generalize_to_held_out_clusters(tmp_path):
    ensembles = hairpin_corpus(40, np.random.default_rng(21), flexible_fraction=0.5)
    clusters = cluster_structures(ensembles)
    manifest = make_multi_state_split(ensembles, clusters, seed=0, test_size=8, val_size=4,
                                      max_cluster_sequences=10)
    test = select_split(ensembles, manifest, "test")
    assert test
    held_out = {clusters[e.id] for e in test}
    assert held_out.isdisjoint(clusters[eid] for eid in manifest.train)

    results = {}
    for kind in ("AR", "NAR"):
        cfg = TrainConfig(lr=5e-3, max_epochs=20, noise_sigma=0.0, max_states=3, val_samples=2,
                          seed=0, model=tiny_config(decoder_kind=kind))
        model = train(cfg, manifest, ensembles, tmp_path / kind, progress=False).model
        results[kind] = evaluate_split(model, test, n_samples=4, temperature=0.1, max_states=3, seed=0)

    assert results["AR"]["recovery"].mean() > 0.35
    assert results["NAR"]["mcc"].mean() < results["AR"]["mcc"].mean()
