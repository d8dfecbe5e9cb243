"""Adam optimizer and reduce-on-plateau learning-rate scheduler."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

import config
from core.autodiff import Tensor
from core.errors import DimensionError, TrainingDivergedError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Per-parameter moment accumulators and the shared step counter."""

    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params], v=[np.zeros_like(p.data) for p in params])


class Adam:
    """Bias-corrected Adam.

    Args:
        params: Parameters to update in place
        lr: Learning rate
        betas: (beta1, beta2)
        eps: Denominator epsilon
        names: Parameter names used in divergence diagnostics
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = config.LEARNING_RATE,
        betas=config.ADAM_BETAS,
        eps: float = config.ADAM_EPS,
        names: Optional[Sequence[str]] = None,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.names = list(names) if names is not None else [f"param_{i}" for i in range(len(self.params))]
        self.state = AdamState.zeros_like(self.params)

    def step(self) -> None:
        """Apply one update from the parameters' accumulated gradients.

        Raises:
            TrainingDivergedError: If any gradient is NaN or infinite
        """
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps, self.names)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = config.ADAM_BETAS[0],
    beta2: float = config.ADAM_BETAS[1],
    eps: float = config.ADAM_EPS,
    names: Optional[Sequence[str]] = None,
) -> None:
    """One bias-corrected Adam update, in place on params and state."""
    bad = [
        (names[i] if names else f"param_{i}")
        for i, g in enumerate(grads) if not np.all(np.isfinite(g))
    ]
    if bad:
        raise TrainingDivergedError(f"Non-finite gradient in {len(bad)} parameter(s): {bad[:5]}")
    for p, g, m in zip(params, grads, state.m):
        if p.data.shape != g.shape or m.shape != g.shape:
            raise DimensionError(f"Adam shape mismatch: param {p.data.shape}, grad {g.shape}, moment {m.shape}")

    state.step += 1
    bias1 = 1.0 - beta1 ** state.step
    bias2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)


@dataclass
class PlateauScheduler:
    """Multiply the learning rate by `factor` after `patience` epochs without improvement.

    Monitors a metric to maximize (validation recovery).
    """

    lr: float = config.LEARNING_RATE
    factor: float = config.PLATEAU_FACTOR
    patience: int = config.PLATEAU_PATIENCE
    best: float = -np.inf
    bad_epochs: int = 0
    num_reductions: int = 0
    history: List[float] = field(default_factory=list)

    def step(self, metric: float) -> float:
        """Record one epoch's metric and return the learning rate for the next epoch."""
        self.history.append(float(metric))
        if metric > self.best:
            self.best = float(metric)
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs > self.patience:
                self.lr *= self.factor
                self.num_reductions += 1
                self.bad_epochs = 0
                logger.info(f"Validation plateau: learning rate reduced to {self.lr:.3e}")
        return self.lr

    def state_dict(self) -> Dict:
        return {
            "lr": self.lr, "factor": self.factor, "patience": self.patience,
            "best": None if not np.isfinite(self.best) else self.best,
            "bad_epochs": self.bad_epochs, "num_reductions": self.num_reductions,
            "history": list(self.history),
        }

    @classmethod
    def from_state_dict(cls, state: Dict) -> "PlateauScheduler":
        best = state.get("best")
        return cls(
            lr=state["lr"], factor=state["factor"], patience=state["patience"],
            best=-np.inf if best is None else best,
            bad_epochs=state["bad_epochs"], num_reductions=state["num_reductions"],
            history=list(state.get("history", [])),
        )
