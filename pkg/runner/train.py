"""Training loop: one ensemble per step, Adam, plateau scheduling on validation recovery."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

import config
from analysis.metrics import recovery
from core.autodiff import Tape
from core.errors import InputValidationError, TrainingDivergedError
from core.featurizer import MultiGraph, featurize_ensemble
from core.model import RnaDesignModel, indices_to_sequence, sequence_to_indices
from runner.checkpoint import load_checkpoint, save_checkpoint
from runner.optim import Adam, PlateauScheduler
from runner.sample import sample_designs, score_sequences
from runner.schema import SplitManifest, TrainConfig
from runner.utils import compute_config_fingerprint, derive_rng, read_json_file, write_json_file
from structures.splits import select_split
from structures.types import Ensemble, RnaStructure

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.ckpt"
LAST_CHECKPOINT = "last.ckpt"
HISTORY_FILE = "history.json"


@dataclass
class TrainResult:
    model: RnaDesignModel
    history: List[Dict[str, Any]]
    best_checkpoint: Optional[Path]
    last_checkpoint: Optional[Path]
    best_val_recovery: float
    steps: int = 0
    extras: Dict[str, Any] = field(default_factory=dict)


def select_states(
    ensemble: Ensemble,
    max_states: int,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> List[RnaStructure]:
    """At most `max_states` states of an ensemble.

    Training draws a uniform subset without replacement; evaluation takes the
    first `max_states` by state id.
    """
    if max_states < 1:
        raise InputValidationError(f"max_states must be >= 1, got {max_states}")
    states = sorted(ensemble.states, key=lambda s: s.id)
    if len(states) <= max_states:
        return states
    if training:
        if rng is None:
            raise InputValidationError("training-mode state selection needs an rng")
        picked = np.sort(rng.choice(len(states), size=max_states, replace=False))
        return [states[i] for i in picked]
    return states[:max_states]


def ensemble_graph(
    ensemble: Ensemble,
    max_states: int,
    knn_k: int,
    noise_sigma: float = 0.0,
    state_rng: Optional[np.random.Generator] = None,
    noise_rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> MultiGraph:
    states = select_states(ensemble, max_states, state_rng, training)
    return featurize_ensemble(states, noise_sigma if training else 0.0, noise_rng, knn_k)


def _trainable(ensembles: Sequence[Ensemble], max_len: int) -> List[Ensemble]:
    kept = []
    for e in ensembles:
        if len(e) > max_len:
            continue
        if e.common_mask().sum() < 2 or not any(b in config.BASE_TO_INDEX for b in e.sequence):
            logger.warning(f"Skipping ensemble {e.id}: too few resolved residues or no known bases")
            continue
        kept.append(e)
    return kept


def evaluate_recovery(
    model: RnaDesignModel,
    ensembles: Sequence[Ensemble],
    cfg: TrainConfig,
    seed: int,
) -> Dict[str, float]:
    """Mean sampled recovery and mean native perplexity over ensembles."""
    if not ensembles:
        return {"recovery": float("nan"), "perplexity": float("nan")}
    recoveries, perplexities = [], []
    for idx, ensemble in enumerate(ensembles):
        mg = ensemble_graph(ensemble, cfg.max_states, cfg.model.knn_k)
        designs = sample_designs(model, mg, cfg.val_samples, cfg.val_temperature,
                                 seed=seed + idx * cfg.val_samples, native=mg.sequence)
        recoveries.append(np.mean([d.recovery for d in designs]))
        perplexities.append(score_sequences(model, mg, [mg.sequence])[0])
    return {"recovery": float(np.mean(recoveries)), "perplexity": float(np.mean(perplexities))}


def train(
    cfg: TrainConfig,
    manifest: SplitManifest,
    corpus: Sequence[Ensemble],
    out_dir: Path,
    resume: bool = False,
    progress: bool = True,
) -> TrainResult:
    """Train a model on the manifest's train split, selecting on validation recovery.

    Each epoch shuffles the training ensembles, featurizes each with fresh
    coordinate noise, and takes one Adam step per ensemble on the
    label-smoothed cross-entropy. After the epoch, validation recovery
    (VAL_SAMPLES designs at VAL_TEMPERATURE) drives the plateau scheduler
    and the best checkpoint. All per-epoch randomness is derived from
    (seed, stream, epoch, index), so a resumed run repeats a fresh one.

    Args:
        cfg: Training configuration
        manifest: Split manifest
        corpus: All ensembles referenced by the manifest
        out_dir: Directory for checkpoints and history.json
        resume: Continue from out_dir/last.ckpt when present
        progress: Show a tqdm progress bar over epochs

    Returns:
        TrainResult with the final model and history

    Raises:
        InputValidationError: If the train split is empty
        TrainingDivergedError: On a non-finite loss or gradient
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set = _trainable(select_split(corpus, manifest, "train"), cfg.max_train_len)
    val_set = _trainable(select_split(corpus, manifest, "val"), cfg.max_train_len)
    if not train_set:
        raise InputValidationError("Train split is empty after filtering")
    if not val_set:
        logger.warning("Validation split is empty; monitoring training recovery instead")

    fingerprint = compute_config_fingerprint(cfg.model_dump())
    model = RnaDesignModel(cfg.model, seed=cfg.seed)
    names = [name for name, _ in model.named_parameters()]
    optimizer = Adam(model.parameters(), lr=cfg.lr, names=names)
    scheduler = PlateauScheduler(lr=cfg.lr, factor=cfg.plateau_factor, patience=cfg.plateau_patience)
    history: List[Dict[str, Any]] = []
    start_epoch = 0
    steps = 0
    best = -np.inf

    last_path = out_dir / LAST_CHECKPOINT
    best_path = out_dir / BEST_CHECKPOINT
    if resume and last_path.exists():
        ckpt = load_checkpoint(last_path)
        for p, q in zip(model.parameters(), ckpt.model.parameters()):
            p.data[...] = q.data
        if ckpt.adam_state is not None:
            optimizer.state = ckpt.adam_state
        if ckpt.scheduler is not None:
            scheduler = ckpt.scheduler
        optimizer.lr = scheduler.lr
        history = (read_json_file(out_dir / HISTORY_FILE) or {}).get("epochs", [])
        start_epoch = ckpt.epoch + 1
        steps = int(ckpt.header["extra"].get("steps", 0))
        best = max([h["monitor"] for h in history], default=-np.inf)
        logger.info(f"Resuming from {last_path} at epoch {start_epoch}")

    logger.info(f"Training on {len(train_set)} ensembles, validating on {len(val_set)}; config {fingerprint[:12]}")
    epochs = range(start_epoch, cfg.max_epochs)
    bar = tqdm(epochs, desc="epochs", disable=not progress)
    for epoch in bar:
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            break
        lr_used = optimizer.lr
        order = derive_rng(cfg.seed, config.STREAM_SHUFFLE, epoch).permutation(len(train_set))
        losses, train_recoveries = [], []
        for idx in order:
            ensemble = train_set[idx]
            mg = ensemble_graph(
                ensemble, cfg.max_states, cfg.model.knn_k, cfg.noise_sigma,
                state_rng=derive_rng(cfg.seed, config.STREAM_STATES, epoch, idx),
                noise_rng=derive_rng(cfg.seed, config.STREAM_NOISE, epoch, idx),
                training=True,
            )
            target = sequence_to_indices(mg.sequence)
            optimizer.zero_grad()
            with Tape() as tape:
                loss, logits = model.loss(mg, target, cfg.label_smoothing, training=True,
                                          rng=derive_rng(cfg.seed, config.STREAM_DROPOUT, epoch, idx))
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(f"Non-finite loss {value} at epoch {epoch} on ensemble {ensemble.id}")
            tape.backward(loss)
            optimizer.step()
            steps += 1
            losses.append(value)
            predicted = indices_to_sequence(np.argmax(logits.data, axis=-1))
            train_recoveries.append(recovery(predicted, mg.sequence))
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                break

        val = evaluate_recovery(model, val_set, cfg, derive_seed(cfg.seed, epoch))
        train_recovery = float(np.mean(train_recoveries))
        monitor = val["recovery"] if val_set else train_recovery
        optimizer.lr = scheduler.step(monitor)

        record = {
            "epoch": epoch,
            "steps": steps,
            "train_loss": float(np.mean(losses)),
            "train_recovery": train_recovery,
            "val_recovery": val["recovery"] if val_set else None,
            "val_perplexity": val["perplexity"] if val_set else None,
            "monitor": monitor,
            "lr": lr_used,
        }
        history.append(record)
        bar.set_postfix(loss=f"{record['train_loss']:.3f}", rec=f"{monitor:.3f}")
        logger.info(f"epoch {epoch}: loss {record['train_loss']:.4f} train_rec {train_recovery:.3f} "
                    f"monitor {monitor:.3f} lr {lr_used:.2e}")

        extra = {"steps": steps, "config_fingerprint": fingerprint, "train_config": cfg.model_dump()}
        if monitor > best:
            best = monitor
            save_checkpoint(best_path, model, epoch, extra={**extra, "val_recovery": monitor})
        save_checkpoint(last_path, model, epoch, optimizer, scheduler, extra=extra)
        write_json_file({"config_fingerprint": fingerprint, "epochs": history}, out_dir / HISTORY_FILE)

    return TrainResult(
        model=model,
        history=history,
        best_checkpoint=best_path if best_path.exists() else None,
        last_checkpoint=last_path if last_path.exists() else None,
        best_val_recovery=float(best),
        steps=steps,
    )


def derive_seed(seed: int, epoch: int) -> int:
    """Integer seed for validation sampling in one epoch."""
    return int(derive_rng(seed, config.STREAM_VALIDATION, epoch).integers(0, 2**31 - 1))
