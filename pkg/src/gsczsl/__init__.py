"""Zero-shot classification head with a frozen global class-attribute layer."""
from .evaluation import ClassPartition, EvalReport, gzsl_sweep, harmonic_mean
from .model import HeadConfig, HeadParameters, forward, backward, predict_scores
from .numerics import ValidationError, make_rng
from .semantics import AttributeMatrix, build_affinity, row_normalize, soft_labels
from .training import TrainConfig, fit

__version__ = "0.1.0"
