"""Non-causal state-space features with pyramid matching for dense optical flow and stereo disparity."""

from .blocks import ImagePair, PairFeatures, extract_pair_features
from .config import BlockConfig, MatchConfig, ModelConfig
from .matching import CorrelationPyramid, FieldEstimate
from .metrics import MetricReport, evaluate, somer
from .pipeline import TaskRequest, estimate
from .ssd import ScanInputs, causal_ssd_linear, causal_ssd_quadratic, ncssd_backward, ncssd_forward
from .weights import ModelWeights, init_weights, load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "BlockConfig",
    "CorrelationPyramid",
    "FieldEstimate",
    "ImagePair",
    "MatchConfig",
    "MetricReport",
    "ModelConfig",
    "ModelWeights",
    "PairFeatures",
    "ScanInputs",
    "TaskRequest",
    "causal_ssd_linear",
    "causal_ssd_quadratic",
    "estimate",
    "evaluate",
    "extract_pair_features",
    "init_weights",
    "load_weights",
    "ncssd_backward",
    "ncssd_forward",
    "save_weights",
    "somer",
]
