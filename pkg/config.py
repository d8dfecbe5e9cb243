# config.py
# This file serves as the central configuration dashboard for the RNA design pipeline.
# Model hyperparameters, featurization constants, split rules and sampling defaults
# are defined here. Run-time overrides are validated by runner/schema.py.

# ==============================================================================
# --- 1. MODEL HYPERPARAMETERS (training protocol defaults) ---
# ==============================================================================
#
# 4 encoder + 4 decoder GVP-GNN layers, 128 scalar / 16 vector node channels,
# 64 scalar / 4 vector edge channels, dropout 0.5.
#
# Reference parameter count of the full-size model: 2,147,944. Logged next
# to ours for comparison only, never asserted.

NODE_SCALAR_DIM = 128
NODE_VECTOR_DIM = 16
EDGE_SCALAR_DIM = 64
EDGE_VECTOR_DIM = 4
NUM_ENCODER_LAYERS = 4
NUM_DECODER_LAYERS = 4
DROPOUT = 0.5
SEQ_EMBED_DIM = 4
NUM_MESSAGE_GVPS = 3
REFERENCE_PARAM_COUNT = 2_147_944

# Nucleotide alphabet; index order is the logit order everywhere.
ALPHABET = "ACGU"
BASE_TO_INDEX = {base: idx for idx, base in enumerate(ALPHABET)}

# ==============================================================================
# --- 2. FEATURIZATION CONSTANTS ---
# ==============================================================================

KNN_K = 32
NOISE_SIGMA = 0.1               # Angstrom, training only

EDGE_RBF_COUNT = 32
NODE_RBF_COUNT = 16
RBF_D_MIN = 0.0
RBF_D_MAX = 20.0                # Angstrom
POSENC_DIM = 32
POSENC_BASE = 10000.0
SAFE_NORM_EPS = 1e-8

# Node scalar packing: [rbf16(|C4'->P|), rbf16(|C4'->N|),
#                       sin/cos angle(P, C4', N), sin/cos eta, sin/cos theta]
NODE_SCALAR_IN = 2 * NODE_RBF_COUNT + 2 + 4
# Node vector packing: [forward, reverse, C4'->P, C4'->N]
NODE_VECTOR_IN = 4
# Edge scalar packing: [rbf32(|x_j - x_i|), posenc32(j - i)]
EDGE_SCALAR_IN = EDGE_RBF_COUNT + POSENC_DIM
EDGE_VECTOR_IN = 1

# ==============================================================================
# --- 3. DATASET FILTERS AND SPLITS ---
# ==============================================================================

MIN_RNA_LENGTH = 10
MAX_CLUSTERED_LENGTH = 1000     # larger RNAs skip clustering and go to train
TM_SCORE_THRESHOLD = 0.45
SEQUENCE_IDENTITY_THRESHOLD = 0.8
MAX_CLUSTER_SEQUENCES = 5       # val/test clusters hold at most this many sequences
VAL_SIZE = 100
TEST_SIZE = 100
SPLIT_KINDS = ("single_state", "multi_state")

# N-bead pairing heuristic for ground-truth secondary structure
PAIR_N_DISTANCE = 8.9           # Angstrom
PAIR_N_TOLERANCE = 1.0
MIN_HAIRPIN_LOOP = 3            # j - i >= MIN_HAIRPIN_LOOP + 1
CANONICAL_PAIRS = frozenset({"AU", "UA", "GC", "CG", "GU", "UG"})

# ==============================================================================
# --- 4. TRAINING DEFAULTS ---
# ==============================================================================

LEARNING_RATE = 1e-4
MAX_EPOCHS = 50
PLATEAU_FACTOR = 0.9
PLATEAU_PATIENCE = 5
LABEL_SMOOTHING = 0.05
DEFAULT_MAX_STATES = 3
DEFAULT_MAX_TRAIN_LEN = 1000
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
VAL_SAMPLES = 4
VAL_TEMPERATURE = 0.1

# ==============================================================================
# --- 5. SAMPLING AND EVALUATION DEFAULTS ---
# ==============================================================================

DEFAULT_N_SAMPLES = 16
DEFAULT_TEMPERATURE = 0.1
GREEDY_TEMPERATURE = 1e-4       # below this, sampling is argmax
FOLDING_ORACLE = "nussinov-max-pairs"

# Fitness ranking study
DEFAULT_N_SIMS = 10_000

# ==============================================================================
# --- 6. REPRODUCIBILITY ---
# ==============================================================================

DEFAULT_SEED = 42

# Stream ids for numpy SeedSequence splitting: SeedSequence([seed, STREAM, *indices])
STREAM_SPLIT = 1
STREAM_INIT = 2
STREAM_SHUFFLE = 3
STREAM_NOISE = 4
STREAM_DROPOUT = 5
STREAM_STATES = 6
STREAM_SIMULATION = 7
STREAM_VALIDATION = 8

# Environment variable naming the cache directory (the only env var read)
CACHE_DIR_ENV = "RNA_DESIGN_CACHE_DIR"
DEFAULT_CACHE_DIR = ".cache/rna_design"
