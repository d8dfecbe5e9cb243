"""Test-set evaluation: recovery, perplexity and secondary-structure self-consistency.

Every report row carries the folding oracle label so self-consistency numbers are
never mistaken for thermodynamic-folding results.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

import config
from analysis.folding import SecondaryStructure, mcc, nussinov_fold, pairs_from_structure
from analysis.metrics import DesignResult, summarize_designs
from core.featurizer import MultiGraph
from core.model import RnaDesignModel
from runner.sample import sample_designs, score_sequences
from runner.train import ensemble_graph, select_states
from structures.types import Ensemble, RnaStructure

logger = logging.getLogger(__name__)

EVAL_COLUMNS = [
    "ensemble_id", "length", "n_nodes", "n_states",
    "recovery", "native_perplexity", "sample_perplexity", "mcc", "diversity", "folding_oracle",
]


def ground_truth_structures(
    states: Sequence[RnaStructure],
    mg: MultiGraph,
    dot_brackets: Optional[Dict[str, str]] = None,
) -> List[SecondaryStructure]:
    """Per-state base pairs re-indexed onto the graph's nodes.

    A dot-bracket string keyed by state id overrides the geometric heuristic.
    """
    dot_brackets = dot_brackets or {}
    return [
        pairs_from_structure(state, dot_bracket=dot_brackets.get(state.id)).restrict(mg.positions)
        for state in states
    ]


def score_designs_mcc(designs: Sequence[DesignResult], truths: Sequence[SecondaryStructure]) -> float:
    """Fold each design and average MCC against every ground truth.

    Sets each design's `mcc` to its own average over states.
    """
    if not designs:
        return float("nan")
    for design in designs:
        folded = nussinov_fold(design.sequence)
        design.mcc = float(np.mean([mcc(folded, truth) for truth in truths]))
        design.details["folded"] = folded.dot_bracket()
    return float(np.mean([d.mcc for d in designs]))


def self_consistency(
    model: RnaDesignModel,
    ensemble: Ensemble,
    n_samples: int = config.DEFAULT_N_SAMPLES,
    temperature: float = config.DEFAULT_TEMPERATURE,
    max_states: int = config.DEFAULT_MAX_STATES,
    seed: int = config.DEFAULT_SEED,
    dot_brackets: Optional[Dict[str, str]] = None,
    knn_k: Optional[int] = None,
) -> float:
    """Mean MCC between folded designs and each state's ground-truth pairing.

    Samples `n_samples` designs, folds each with the Nussinov oracle and
    averages MCC over samples and states. Graphs use the neighbour count the
    model was trained with unless `knn_k` is given.
    """
    states = select_states(ensemble, max_states)
    mg = ensemble_graph(ensemble, max_states, knn_k or model.cfg.knn_k)
    designs = sample_designs(model, mg, n_samples, temperature, seed=seed, native=mg.sequence)
    return score_designs_mcc(designs, ground_truth_structures(states, mg, dot_brackets))


def evaluate_ensemble(
    model: RnaDesignModel,
    ensemble: Ensemble,
    n_samples: int = config.DEFAULT_N_SAMPLES,
    temperature: float = config.DEFAULT_TEMPERATURE,
    max_states: int = config.DEFAULT_MAX_STATES,
    seed: int = config.DEFAULT_SEED,
    knn_k: Optional[int] = None,
) -> Dict[str, object]:
    """One evaluation row: sampled recovery, both perplexities, MCC and diversity."""
    states = select_states(ensemble, max_states)
    mg = ensemble_graph(ensemble, max_states, knn_k or model.cfg.knn_k)
    designs = sample_designs(model, mg, n_samples, temperature, seed=seed, native=mg.sequence)
    score_designs_mcc(designs, ground_truth_structures(states, mg))
    summary = summarize_designs(designs)
    return {
        "ensemble_id": ensemble.id,
        "length": len(ensemble),
        "n_nodes": mg.n,
        "n_states": mg.k,
        "recovery": summary["recovery"],
        "native_perplexity": float(score_sequences(model, mg, [mg.sequence])[0]),
        "sample_perplexity": summary["sample_perplexity"],
        "mcc": summary["mcc"],
        "diversity": summary["diversity"],
        "folding_oracle": config.FOLDING_ORACLE,
    }


def evaluate_split(
    model: RnaDesignModel,
    ensembles: Sequence[Ensemble],
    n_samples: int = config.DEFAULT_N_SAMPLES,
    temperature: float = config.DEFAULT_TEMPERATURE,
    max_states: int = config.DEFAULT_MAX_STATES,
    seed: int = config.DEFAULT_SEED,
    progress: bool = False,
    knn_k: Optional[int] = None,
) -> pd.DataFrame:
    """Evaluate every ensemble; one row each, ordered as given.

    Ensemble i samples with base seed `seed + i * n_samples` so rows are
    independent of evaluation order.
    """
    rows = []
    for idx, ensemble in enumerate(tqdm(ensembles, desc="evaluating", disable=not progress)):
        rows.append(evaluate_ensemble(
            model, ensemble, n_samples, temperature, max_states, seed + idx * n_samples, knn_k,
        ))
    frame = pd.DataFrame(rows, columns=EVAL_COLUMNS)
    if not frame.empty:
        logger.info(
            f"Evaluated {len(frame)} ensembles: recovery {frame['recovery'].mean():.3f}, "
            f"native perplexity {frame['native_perplexity'].mean():.3f}, mcc {frame['mcc'].mean():.3f}"
        )
    return frame


def summarize_split(frame: pd.DataFrame) -> Dict[str, object]:
    """Averages of each metric over an evaluation table."""
    summary: Dict[str, object] = {"n_ensembles": int(len(frame)), "folding_oracle": config.FOLDING_ORACLE}
    for column in ("recovery", "native_perplexity", "sample_perplexity", "mcc", "diversity"):
        summary[column] = float(frame[column].mean()) if len(frame) else float("nan")
    return summary
