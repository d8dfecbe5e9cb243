"""Shared fixtures: a tiny network configuration and small synthetic backbones."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.featurizer import featurize_ensemble
from core.model import RnaDesignModel
from runner.schema import ModelConfig, TrainConfig
from structures.synthetic import hairpin_corpus, ideal_hairpin, random_coil
from structures.types import Ensemble


def tiny_config(decoder_kind: str = "AR", dropout: float = 0.0) -> ModelConfig:
    return ModelConfig(
        node_scalar_dim=8,
        node_vector_dim=4,
        edge_scalar_dim=8,
        edge_vector_dim=2,
        num_encoder_layers=2,
        num_decoder_layers=2,
        dropout=dropout,
        seq_embed_dim=4,
        num_message_gvps=2,
        decoder_kind=decoder_kind,
        knn_k=8,
    )


def tiny_train_config(**overrides) -> TrainConfig:
    values = dict(
        lr=1e-3,
        max_epochs=2,
        noise_sigma=0.0,
        max_states=2,
        val_samples=2,
        seed=7,
        model=tiny_config(),
    )
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def model_config() -> ModelConfig:
    return tiny_config()


@pytest.fixture
def ar_model() -> RnaDesignModel:
    return RnaDesignModel(tiny_config("AR"), seed=3)


@pytest.fixture
def nar_model() -> RnaDesignModel:
    return RnaDesignModel(tiny_config("NAR"), seed=3)


@pytest.fixture
def hairpin():
    """(structure, pairs) of a 5-bp stem with a 4-nt loop."""
    return ideal_hairpin(5, 4, np.random.default_rng(0), stem_sequence="GGCGC")


@pytest.fixture
def coil():
    return random_coil(12, np.random.default_rng(1))


@pytest.fixture
def coil_ensemble(coil) -> Ensemble:
    return Ensemble(sequence=coil.sequence, states=[coil])


@pytest.fixture
def coil_graph(coil):
    return featurize_ensemble([coil], kmax=8)


@pytest.fixture
def corpus():
    """Twelve hairpin ensembles, some of them multi-state."""
    return hairpin_corpus(12, np.random.default_rng(5), flexible_fraction=0.5)
