"""Application constants.

This file centralizes defaults that are part of the method and the experiment
protocol. Machine- or deployment-dependent knobs (threads, output paths,
benchmark repetitions) live in ``cea_kit.core.config`` instead.
"""

# ============================================================================
# Assembly Constants
# ============================================================================

# Default low-rank bottleneck
DEFAULT_RANK = 8

# RankNorm floor added to each column/row norm
DEFAULT_RANK_NORM_EPSILON = 1e-6

# Number of components kept by the sparse softmax routing variant
DEFAULT_TOP_K = 2

# Injection target tags
TARGET_TAGS = ("Q", "K", "V", "FFN_in")

# Default injection targets (attention query and key)
DEFAULT_INJECTION_TARGETS = ("Q", "K")

# ============================================================================
# Hyper-Adapter Constants
# ============================================================================

# Condensation stride of the depthwise convolution
DEFAULT_CONDENSE_STRIDE = 2

# Cross-attention heads inside each hyper-adapter
DEFAULT_ADAPTER_HEADS = 4

# Residual-direction heads start this much smaller than the routing heads
RESIDUAL_HEAD_INIT_SCALE = 0.1

# Hidden width multiplier of the GAP+MLP factor generator
GAP_MLP_HIDDEN_RATIO = 2

# ============================================================================
# Backbone Constants
# ============================================================================

FFN_RATIO = 2
LAYER_NORM_EPSILON = 1e-5

# ============================================================================
# Objective / Metric Constants
# ============================================================================

# Weight of the Fourier-magnitude term
DEFAULT_LAMBDA_F = 0.10

# SSIM window (Gaussian, side length and sigma) and stabilizers
SSIM_WINDOW_SIZE = 11
SSIM_WINDOW_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

# Paired bootstrap
DEFAULT_BOOTSTRAP_RESAMPLES = 10_000
DEFAULT_CONFIDENCE = 0.95

# ============================================================================
# Optimizer Constants
# ============================================================================

DEFAULT_LEARNING_RATE = 5e-4
DEFAULT_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8

# CPU-sized training budget
DEFAULT_MAX_STEPS = 200
DEFAULT_BATCH_SIZE = 8
DEFAULT_IMAGE_SIZE = 32
DEFAULT_ABLATION_SEEDS = 3

# ============================================================================
# Degradation Constants
# ============================================================================

# Single-letter codes of the compositional family
LOWLIGHT = "L"
HAZE = "H"
RAIN = "R"
SNOW = "S"

# Four single, five double and two triple compositions
CDD11_CATEGORIES = (
    "L", "H", "R", "S",
    "L+H", "L+R", "L+S", "H+R", "H+S",
    "L+H+R", "L+H+S",
)

# All-in-one style family (noise, haze, rain, blur, low-light)
AIO5_CATEGORIES = ("N", "H", "R", "B", "L")

# Category group names used by evaluation tables
GROUP_SINGLE = "Single"
GROUP_DOUBLE = "Double"
GROUP_TRIPLE = "Triple"
GROUP_AVERAGE = "Avg"

# ============================================================================
# Serialization Constants
# ============================================================================

TENSOR_MAGIC = b"CEAT"
TENSOR_FORMAT_VERSION = 1
TENSOR_FILE_SUFFIX = ".ceat"

# ============================================================================
# CLI Exit Codes
# ============================================================================

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERIC_FAILURE = 3
EXIT_INTERNAL_ERROR = 4
