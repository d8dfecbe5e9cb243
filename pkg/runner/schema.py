"""Pydantic schemas for run configuration and split manifests."""

from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

import config


class ModelConfig(BaseModel):
    """Network dimensions, decoder choice and the graph neighbour count."""

    node_scalar_dim: int = Field(config.NODE_SCALAR_DIM, gt=0)
    node_vector_dim: int = Field(config.NODE_VECTOR_DIM, gt=0)
    edge_scalar_dim: int = Field(config.EDGE_SCALAR_DIM, gt=0)
    edge_vector_dim: int = Field(config.EDGE_VECTOR_DIM, gt=0)
    num_encoder_layers: int = Field(config.NUM_ENCODER_LAYERS, ge=1)
    num_decoder_layers: int = Field(config.NUM_DECODER_LAYERS, ge=1)
    dropout: float = Field(config.DROPOUT, ge=0.0, lt=1.0)
    seq_embed_dim: int = Field(config.SEQ_EMBED_DIM, gt=0)
    num_message_gvps: int = Field(config.NUM_MESSAGE_GVPS, ge=1)
    decoder_kind: Literal["AR", "NAR"] = "AR"
    knn_k: int = Field(config.KNN_K, ge=1, description="Neighbours per node in the graphs the model reads")

    model_config = {"extra": "forbid"}


class TrainConfig(BaseModel):
    """Training protocol: Adam, plateau scheduler, label smoothing, coordinate noise."""

    lr: float = Field(config.LEARNING_RATE, gt=0.0)
    max_epochs: int = Field(config.MAX_EPOCHS, ge=1)
    max_steps: Optional[int] = Field(None, ge=1, description="Stop after this many optimizer steps")
    plateau_factor: float = Field(config.PLATEAU_FACTOR, gt=0.0, lt=1.0)
    plateau_patience: int = Field(config.PLATEAU_PATIENCE, ge=0)
    label_smoothing: float = Field(config.LABEL_SMOOTHING, ge=0.0, lt=1.0)
    noise_sigma: float = Field(config.NOISE_SIGMA, ge=0.0)
    max_states: int = Field(config.DEFAULT_MAX_STATES, ge=1)
    max_train_len: int = Field(config.DEFAULT_MAX_TRAIN_LEN, ge=config.MIN_RNA_LENGTH)
    val_samples: int = Field(config.VAL_SAMPLES, ge=1)
    val_temperature: float = Field(config.VAL_TEMPERATURE, gt=0.0)
    seed: int = config.DEFAULT_SEED
    model: ModelConfig = Field(default_factory=ModelConfig)

    model_config = {"extra": "forbid"}

    @property
    def decoder_kind(self) -> str:
        return self.model.decoder_kind


class SamplingConfig(BaseModel):
    """Design-time sampling options."""

    n_samples: int = Field(config.DEFAULT_N_SAMPLES, ge=1)
    temperature: float = Field(config.DEFAULT_TEMPERATURE, gt=0.0)
    max_states: int = Field(config.DEFAULT_MAX_STATES, ge=1)
    seed: int = config.DEFAULT_SEED

    model_config = {"extra": "forbid"}


class RunConfig(BaseModel):
    """One CLI invocation: subcommand, paths, and the nested configs."""

    subcommand: Literal["featurize", "split", "train", "design", "eval", "rank", "status"]
    inputs: List[str] = Field(default_factory=list)
    output_dir: str = "runs"
    train: TrainConfig = Field(default_factory=TrainConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    seeds: List[int] = Field(default_factory=lambda: [config.DEFAULT_SEED])

    model_config = {"extra": "forbid"}

    @field_validator("inputs")
    @classmethod
    def validate_inputs_exist(cls, inputs: List[str]) -> List[str]:
        """Every referenced input path must exist."""
        for path in inputs:
            if not Path(path).exists():
                raise ValueError(f"Input path does not exist: '{path}'")
        return inputs

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, seeds: List[int]) -> List[int]:
        if not seeds:
            raise ValueError("At least one seed is required")
        return seeds


class SplitManifest(BaseModel):
    """Train/validation/test ensemble ids with the clustering that produced them."""

    split_name: Literal["single_state", "multi_state"]
    train: List[str]
    val: List[str]
    test: List[str]
    cluster_assignments: Dict[str, int]
    seed: int
    excluded: List[str] = Field(default_factory=list, description="Eligible ids dropped by the split rule")
    notes: List[str] = Field(default_factory=list)
    config_fingerprint: str = ""

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def validate_disjoint(self) -> "SplitManifest":
        """train, val and test never share an id."""
        train, val, test = set(self.train), set(self.val), set(self.test)
        overlap = (train & val) | (train & test) | (val & test)
        if overlap:
            raise ValueError(f"Split lists overlap on {sorted(overlap)[:5]}")
        return self

    def split_of(self, ensemble_id: str) -> Optional[str]:
        for name in ("train", "val", "test"):
            if ensemble_id in getattr(self, name):
                return name
        return None
