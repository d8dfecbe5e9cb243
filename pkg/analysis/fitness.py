"""Zero-shot fitness ranking: perplexity-ordered mutant selection vs random mutagenesis.

For a design budget m, a strategy picks m variants from a fitness landscape and
scores the best fitness gain over the wild type among them. Random strategies
are simulated many times and reported by median and interquartile range; the
perplexity strategy is deterministic.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import config
from analysis.metrics import hamming
from core.errors import DimensionError, InputValidationError
from core.featurizer import MultiGraph
from core.model import RnaDesignModel
from runner.sample import score_sequences
from runner.utils import derive_rng

logger = logging.getLogger(__name__)

POOL_ORDERS = {
    "all": None,
    "single": (1,),
    "single_double": (1, 2),
}
POOL_STRATEGY = {
    "all": "random_all",
    "single": "random_single",
    "single_double": "random_single_double",
}
PERPLEXITY_STRATEGY = "gRNAde_perplexity"
REPORT_COLUMNS = [
    "strategy", "budget", "median_max_improvement", "q25", "q75",
    "fold_improvement", "n_sims", "pool_size", "clamped",
]


@dataclass
class FitnessRecord:
    sequence: str
    fitness: float
    mutation_order: int


@dataclass
class Landscape:
    """Fitness records plus the wild type they are measured against."""

    wild_type: str
    wild_type_fitness: float
    records: List[FitnessRecord] = field(default_factory=list)

    def pool(self, name: str) -> List[FitnessRecord]:
        """Variants eligible under a random-mutagenesis pool (the wild type is never drawn)."""
        if name not in POOL_ORDERS:
            raise InputValidationError(f"Unknown pool '{name}', expected one of {sorted(POOL_ORDERS)}")
        orders = POOL_ORDERS[name]
        return [
            r for r in self.records
            if r.mutation_order > 0 and (orders is None or r.mutation_order in orders)
        ]


@dataclass
class BudgetReport:
    strategy: str
    budget: int
    median_max_improvement: float
    q25: Optional[float] = None
    q75: Optional[float] = None
    fold_improvement: Optional[float] = None
    n_sims: int = 0
    pool_size: int = 0
    clamped: bool = False

    @property
    def deterministic(self) -> bool:
        return self.strategy == PERPLEXITY_STRATEGY

    def to_dict(self) -> Dict[str, object]:
        row = asdict(self)
        if self.deterministic:
            row.pop("q25")
            row.pop("q75")
        return row


def build_landscape(
    sequences: Sequence[str],
    fitness: Sequence[float],
    wild_type: Optional[str] = None,
    wild_type_fitness: Optional[float] = None,
) -> Landscape:
    """Attach mutation orders to (sequence, fitness) pairs.

    Without `wild_type_fitness`, the wild type's fitness is the mean over the
    records equal to it.

    Raises:
        InputValidationError: If the wild type cannot be determined or has no fitness
        DimensionError: If a sequence length differs from the wild type
    """
    if len(sequences) != len(fitness):
        raise DimensionError(f"{len(sequences)} sequences but {len(fitness)} fitness values")
    if not sequences:
        raise InputValidationError("Landscape is empty")
    if wild_type is None:
        raise InputValidationError("A wild-type sequence is required to compute mutation orders")
    wild_type = wild_type.upper().replace("T", "U")
    records = []
    for seq, value in zip(sequences, fitness):
        seq = str(seq).upper().replace("T", "U")
        if len(seq) != len(wild_type):
            raise DimensionError(f"variant length {len(seq)} != wild-type length {len(wild_type)}")
        records.append(FitnessRecord(seq, float(value), hamming(seq, wild_type)))
    if wild_type_fitness is None:
        matches = [r.fitness for r in records if r.mutation_order == 0]
        if not matches:
            raise InputValidationError("Wild type is not in the landscape; pass its fitness explicitly")
        wild_type_fitness = float(np.mean(matches))
    return Landscape(wild_type, float(wild_type_fitness), records)


def load_landscape(
    path: Union[str, Path],
    wild_type: Optional[str] = None,
    wild_type_fitness: Optional[float] = None,
) -> Landscape:
    """Read a `sequence,fitness` CSV.

    Without an explicit wild type, the first row is taken as the wild type
    when every other row is a variant of it (the common landscape layout).
    """
    path = Path(path)
    if not path.is_file():
        raise InputValidationError(f"Landscape file not found: {path}")
    frame = pd.read_csv(path)
    missing = {"sequence", "fitness"} - set(frame.columns)
    if missing:
        raise InputValidationError(f"{path}: missing column(s) {sorted(missing)}")
    frame = frame.dropna(subset=["sequence", "fitness"])
    if frame.empty:
        raise InputValidationError(f"{path}: no records")
    if wild_type is None:
        wild_type = str(frame["sequence"].iloc[0])
        logger.info(f"No wild type given; using the first record of {path.name}")
    landscape = build_landscape(frame["sequence"].tolist(), frame["fitness"].astype(float).tolist(),
                                wild_type, wild_type_fitness)
    orders = pd.Series([r.mutation_order for r in landscape.records]).value_counts().sort_index()
    logger.info(f"Loaded {len(landscape.records)} records from {path.name}; mutation orders {orders.to_dict()}")
    return landscape


def rank_by_scores(sequences: Sequence[str], perplexities: Sequence[float]) -> List[Tuple[str, float]]:
    """Ascending perplexity, ties by sequence."""
    if len(sequences) != len(perplexities):
        raise DimensionError(f"{len(sequences)} sequences but {len(perplexities)} scores")
    return sorted(zip(sequences, (float(p) for p in perplexities)), key=lambda item: (item[1], item[0]))


def project_to_nodes(sequence: str, mg: MultiGraph, chain_length: Optional[int] = None) -> str:
    """Restrict a full-chain sequence to the graph's nodes."""
    if chain_length is None or chain_length == mg.n:
        if len(sequence) != mg.n:
            raise DimensionError(f"candidate length {len(sequence)} != backbone length {mg.n}")
        return sequence
    if len(sequence) != chain_length:
        raise DimensionError(f"candidate length {len(sequence)} != backbone length {chain_length}")
    return "".join(sequence[i] for i in mg.positions)


def rank_by_perplexity(
    model: RnaDesignModel,
    mg: MultiGraph,
    candidates: Sequence[str],
    chain_length: Optional[int] = None,
) -> List[Tuple[str, float]]:
    """Order candidates by perplexity conditioned on the wild-type backbone(s).

    Args:
        model: Trained model
        mg: Featurized wild-type ensemble
        candidates: Variant sequences
        chain_length: Full chain length when the graph drops unresolved residues

    Returns:
        (sequence, perplexity) pairs, lowest perplexity first
    """
    projected = [project_to_nodes(c, mg, chain_length) for c in candidates]
    return rank_by_scores(candidates, score_sequences(model, mg, projected))


def _improvement_summary(improvements: np.ndarray) -> Tuple[float, float, float]:
    q25, median, q75 = np.percentile(improvements, [25, 50, 75])
    return float(median), float(q25), float(q75)


def fold_improvement(wild_type_fitness: float, improvement: float) -> Optional[float]:
    """Best variant fitness as a multiple of the wild type (positive wild-type fitness only)."""
    if wild_type_fitness <= 0:
        return None
    return float((wild_type_fitness + improvement) / wild_type_fitness)


def simulate_baseline(
    landscape: Landscape,
    pool: str,
    budget: int,
    n_sims: int = config.DEFAULT_N_SIMS,
    rng: Optional[np.random.Generator] = None,
) -> BudgetReport:
    """Random mutagenesis: best fitness gain among `budget` variants drawn without replacement.

    A budget larger than the pool is clamped to the pool size and flagged.

    Raises:
        InputValidationError: If the pool is empty or the budget negative
    """
    candidates = landscape.pool(pool)
    if not candidates:
        raise InputValidationError(f"Pool '{pool}' has no variants")
    if budget < 0:
        raise InputValidationError(f"budget must be >= 0, got {budget}")
    strategy = POOL_STRATEGY[pool]
    if budget == 0:
        return BudgetReport(strategy, 0, 0.0, 0.0, 0.0, fold_improvement(landscape.wild_type_fitness, 0.0),
                            n_sims, len(candidates))

    clamped = budget > len(candidates)
    if clamped:
        logger.warning(f"Budget {budget} exceeds pool '{pool}' of {len(candidates)}; clamping")
    draw = min(budget, len(candidates))
    rng = rng if rng is not None else np.random.default_rng(config.DEFAULT_SEED)
    values = np.array([r.fitness for r in candidates])
    if draw == len(values):
        improvements = np.full(n_sims, values.max() - landscape.wild_type_fitness)
    else:
        improvements = np.array([
            values[rng.choice(len(values), size=draw, replace=False)].max()
            for _ in range(n_sims)
        ]) - landscape.wild_type_fitness
    median, q25, q75 = _improvement_summary(improvements)
    return BudgetReport(
        strategy=strategy, budget=budget, median_max_improvement=median, q25=q25, q75=q75,
        fold_improvement=fold_improvement(landscape.wild_type_fitness, median),
        n_sims=n_sims, pool_size=len(candidates), clamped=clamped,
    )


def perplexity_strategy(landscape: Landscape, ranking: Sequence[Tuple[str, float]], budget: int) -> BudgetReport:
    """Best fitness gain among the `budget` lowest-perplexity variants."""
    fitness = {r.sequence: r.fitness for r in landscape.records}
    variants = [seq for seq, _ in ranking if seq != landscape.wild_type]
    take = variants[:max(budget, 0)]
    improvement = max((fitness[s] for s in take), default=landscape.wild_type_fitness) - landscape.wild_type_fitness
    if budget == 0:
        improvement = 0.0
    return BudgetReport(
        strategy=PERPLEXITY_STRATEGY, budget=budget, median_max_improvement=float(improvement),
        fold_improvement=fold_improvement(landscape.wild_type_fitness, improvement),
        pool_size=len(variants), clamped=budget > len(variants),
    )


def evaluate_strategies(
    landscape: Landscape,
    budgets: Sequence[int],
    model: Optional[RnaDesignModel] = None,
    mg: Optional[MultiGraph] = None,
    perplexities: Optional[Sequence[float]] = None,
    n_sims: int = config.DEFAULT_N_SIMS,
    seed: int = config.DEFAULT_SEED,
    chain_length: Optional[int] = None,
) -> List[BudgetReport]:
    """Three random baselines and the perplexity ranking at every budget.

    Perplexities come from `model` on `mg`, or are given directly (one per
    landscape record). Random pool p at budget index b simulates with the
    generator derived from (seed, simulation stream, p, b).
    """
    if perplexities is None:
        if model is None or mg is None:
            raise InputValidationError("evaluate_strategies needs a model and backbone, or precomputed perplexities")
        ranking = rank_by_perplexity(model, mg, [r.sequence for r in landscape.records], chain_length)
    else:
        ranking = rank_by_scores([r.sequence for r in landscape.records], perplexities)

    reports = []
    for b_idx, budget in enumerate(budgets):
        for p_idx, pool in enumerate(POOL_ORDERS):
            if not landscape.pool(pool):
                logger.warning(f"Pool '{pool}' is empty; skipping {POOL_STRATEGY[pool]}")
                continue
            rng = derive_rng(seed, config.STREAM_SIMULATION, p_idx, b_idx)
            reports.append(simulate_baseline(landscape, pool, budget, n_sims, rng))
        reports.append(perplexity_strategy(landscape, ranking, budget))
    return reports


def reports_frame(reports: Sequence[BudgetReport]) -> pd.DataFrame:
    """Table with one row per (strategy, budget); deterministic rows have empty iqr."""
    return pd.DataFrame([asdict(r) for r in reports], columns=REPORT_COLUMNS)


def synthetic_landscape(
    wild_type: str,
    n_variants: int,
    rng: np.random.Generator,
    noise_sigma: float = 0.1,
    max_order: int = 3,
) -> Tuple[Landscape, np.ndarray]:
    """Random variants whose fitness is minus a latent perplexity plus Gaussian noise.

    Returns:
        (landscape, latent) where latent[i] is the perplexity of record i; the
        wild type is record 0 with latent 1.0
    """
    bases = np.array(list(config.ALPHABET))
    seen = {wild_type}
    sequences = [wild_type]
    while len(sequences) < n_variants + 1:
        order = int(rng.integers(1, max_order + 1))
        chars = list(wild_type)
        for pos in rng.choice(len(wild_type), size=order, replace=False):
            chars[pos] = rng.choice(bases[bases != wild_type[pos]])
        seq = "".join(chars)
        if seq not in seen:
            seen.add(seq)
            sequences.append(seq)
    latent = np.concatenate([[1.0], 1.0 + rng.exponential(1.0, size=n_variants)])
    fitness = -latent + rng.normal(0.0, noise_sigma, size=len(latent))
    landscape = build_landscape(sequences, fitness, wild_type, wild_type_fitness=float(fitness[0]))
    return landscape, latent
