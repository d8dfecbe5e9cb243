"""Sequence design (temperature sampling with fixed positions and logit bias) and scoring."""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import softmax

import config
from analysis.metrics import DesignResult, perplexity_from_logprobs, recovery
from core.autodiff import log_softmax
from core.errors import DimensionError, InputValidationError
from core.featurizer import MultiGraph
from core.model import RnaDesignModel, indices_to_sequence, sequence_to_indices

logger = logging.getLogger(__name__)

SCORE_CHUNK = 64


def design_distribution(logits: np.ndarray, bias: Optional[np.ndarray], temperature: float) -> np.ndarray:
    """softmax((logits + bias) / temperature) over the last axis."""
    adjusted = logits if bias is None else logits + bias
    return softmax(adjusted / temperature, axis=-1)


def _check_inputs(mg: MultiGraph, temperature: float, fixed: Optional[Dict[int, str]], logit_bias: Optional[np.ndarray]):
    if temperature <= 0.0:
        raise InputValidationError(f"temperature must be > 0, got {temperature}")
    fixed = dict(fixed or {})
    for pos, base in fixed.items():
        if not 0 <= pos < mg.n:
            raise InputValidationError(f"fixed position {pos} outside 0..{mg.n - 1}")
        if base not in config.BASE_TO_INDEX:
            raise InputValidationError(f"fixed base '{base}' at position {pos} is not one of {config.ALPHABET}")
    if logit_bias is not None:
        logit_bias = np.asarray(logit_bias, dtype=np.float64)
        if logit_bias.shape != (mg.n, len(config.ALPHABET)):
            raise DimensionError(f"logit bias must be [{mg.n}, 4], got {logit_bias.shape}")
    return fixed, logit_bias


def sample_designs(
    model: RnaDesignModel,
    mg: MultiGraph,
    n_samples: int = config.DEFAULT_N_SAMPLES,
    temperature: float = config.DEFAULT_TEMPERATURE,
    fixed: Optional[Dict[int, str]] = None,
    logit_bias: Optional[np.ndarray] = None,
    seed: int = config.DEFAULT_SEED,
    native: Optional[str] = None,
) -> List[DesignResult]:
    """Design `n_samples` sequences 5' to 3' in one batched pass.

    Sample b draws from its own generator seeded with seed + b. At each
    position the committed prefix conditions the logits; the bias is added
    and the result divided by the temperature before the softmax. Below
    GREEDY_TEMPERATURE the argmax is taken. Fixed positions commit their
    base with probability 1. Log-probabilities are recorded from the
    unbiased, untempered distribution.

    Args:
        model: Trained model
        mg: Featurized ensemble (graph nodes are the designed positions)
        n_samples: Number of designs
        temperature: Sampling temperature (> 0)
        fixed: {node index: base} positions to keep
        logit_bias: [n, 4] additive logit bias
        seed: Base seed
        native: Native sequence over graph nodes, for recovery

    Returns:
        One DesignResult per sample
    """
    fixed, logit_bias = _check_inputs(mg, temperature, fixed, logit_bias)
    if native is not None and len(native) != mg.n:
        raise DimensionError(f"native length {len(native)} != node count {mg.n}")
    greedy = temperature < config.GREEDY_TEMPERATURE
    rngs = [np.random.default_rng(seed + b) for b in range(n_samples)]
    chosen = np.zeros((mg.n, n_samples), dtype=np.int64)
    logprobs = np.zeros((mg.n, n_samples))

    enc = model.encode(mg)
    if model.decoder_kind == "AR":
        decoder = model.start_decoding(enc, n_samples)
        step_logits = decoder.step
    else:
        nar_logits = model.decode_logits_nar(enc).data
        decoder = None

        def step_logits(i: int) -> np.ndarray:
            return np.broadcast_to(nar_logits[i], (n_samples, len(config.ALPHABET)))

    for i in range(mg.n):
        logits = step_logits(i)
        if i in fixed:
            bases = np.full(n_samples, config.BASE_TO_INDEX[fixed[i]], dtype=np.int64)
        elif greedy:
            adjusted = logits if logit_bias is None else logits + logit_bias[i]
            bases = np.argmax(adjusted, axis=-1)
        else:
            probs = design_distribution(logits, None if logit_bias is None else logit_bias[i], temperature)
            bases = np.array([rng.choice(len(config.ALPHABET), p=p) for rng, p in zip(rngs, probs)], dtype=np.int64)
        chosen[i] = bases
        logprobs[i] = log_softmax(logits)[np.arange(n_samples), bases]
        if decoder is not None:
            decoder.commit(i, bases)

    results = []
    for b in range(n_samples):
        sequence = indices_to_sequence(chosen[:, b])
        results.append(DesignResult.from_logprobs(
            sequence,
            logprobs[:, b],
            recovery=recovery(sequence, native) if native is not None else None,
            sample_index=b,
        ))
    return results


def sample(
    model: RnaDesignModel,
    mg: MultiGraph,
    temperature: float = config.DEFAULT_TEMPERATURE,
    fixed: Optional[Dict[int, str]] = None,
    logit_bias: Optional[np.ndarray] = None,
    seed: int = config.DEFAULT_SEED,
    native: Optional[str] = None,
) -> DesignResult:
    """Single design; same as the first sample of sample_designs."""
    return sample_designs(model, mg, 1, temperature, fixed, logit_bias, seed, native)[0]


def sequence_logprobs(model: RnaDesignModel, mg: MultiGraph, sequences: Sequence[str]) -> np.ndarray:
    """Teacher-forced per-position log-probabilities, [len(sequences), n].

    Unknown bases get NaN. AR models score candidates in batches along the
    decoder's sequence axis.
    """
    for seq in sequences:
        if len(seq) != mg.n:
            raise DimensionError(f"sequence length {len(seq)} != node count {mg.n}")
    indices = np.stack([sequence_to_indices(s) for s in sequences], axis=1) if sequences else np.zeros((mg.n, 0), dtype=np.int64)
    enc = model.encode(mg)
    out = np.full((len(sequences), mg.n), np.nan)
    if model.decoder_kind == "NAR":
        logp = log_softmax(model.decode_logits_nar(enc).data)
        for b in range(indices.shape[1]):
            known = indices[:, b] >= 0
            out[b, known] = logp[np.nonzero(known)[0], indices[known, b]]
        return out

    for start in range(0, indices.shape[1], SCORE_CHUNK):
        chunk = indices[:, start:start + SCORE_CHUNK]
        logp = log_softmax(model.decode_logits_ar(enc, chunk).data)     # [n, B, 4]
        for b in range(chunk.shape[1]):
            known = chunk[:, b] >= 0
            rows = np.nonzero(known)[0]
            out[start + b, rows] = logp[rows, b, chunk[rows, b]]
    return out


def score_sequences(model: RnaDesignModel, mg: MultiGraph, sequences: Sequence[str]) -> np.ndarray:
    """Perplexity of each sequence conditioned on the backbone(s)."""
    logprobs = sequence_logprobs(model, mg, sequences)
    return np.array([perplexity_from_logprobs(row[np.isfinite(row)]) for row in logprobs])


def perplexity(model: RnaDesignModel, mg: MultiGraph, sequence: str) -> float:
    """exp(mean negative log-likelihood) of one sequence under teacher forcing."""
    return float(score_sequences(model, mg, [sequence])[0])
