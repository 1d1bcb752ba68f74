"""Compression toolkit for autoencoder-based time-series anomaly detection.

Modules:
    nn            dense/conv1d layers, backprop, Adam
    autoencoder   mirror-symmetric models, loss, training loop
    pruning       magnitude masks and the population mask search
    quantization  fixed-point and k-means codebook quantization
    evaluation    anomaly scoring, F1 threshold sweeps
    costs         MAC and capacity accounting
    data          synthetic benchmark, CSV ingestion, windowing
    modelfile     versioned binary model container
    cli           end-to-end pipeline commands
"""

from .autoencoder import Autoencoder, TrainConfig, build_autoencoder, reconstruction_loss, train
from .data import (
    AnomalySpec,
    LabeledSeries,
    SynthConfig,
    WindowConfig,
    generate_synthetic,
    load_csv,
    normalize,
    fit_normalization,
    window,
)
from .errors import (
    AECompressError,
    ConfigurationError,
    DataError,
    FormatError,
    TrainingError,
)
from .evaluation import EvalResult, anomaly_scores, best_f1, f1_at
from .nn import LayerSpec, Optimizer, OptimizerConfig
from .costs import CompressionReport, compression_report, layer_cost
from .pruning import (
    MaskSet,
    PruneConfig,
    PrunedModel,
    apply_mask,
    build_mask_set,
    compute_threshold,
    density_mask,
    generate_mask,
    lottery_search,
    sample_sparsity_vector,
    weighted_sparsity,
)
from .quantization import (
    Codebook,
    FixedPointParams,
    QuantizedModel,
    calibrate_activations,
    compute_linear_params,
    dequantize,
    kmeans_1d,
    quantize_layer_nonlinear,
    quantize_linear,
    quantize_model_linear,
    quantize_model_nonlinear,
)

__version__ = "0.1.0"
