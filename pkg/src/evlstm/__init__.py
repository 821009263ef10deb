"""Event-camera streams: simulation, denoising, windowing, time surfaces and an LSTM autoencoder surface."""
from ._backend import BACKEND
from .denoise import (
    BaselineFilterConfig,
    MemoryFilterConfig,
    UpdatePolicy,
    baseline_filter,
    memory_filter,
    noise_ratio,
    voxel_mse,
)
from .evalkit import FeatureVector, MetricsReport, compute_metrics, fit_centroids, pool_features, predict
from .eventlstm import AutoencoderModel, TrainConfig, extract_grid, load_model, save_model, train
from .events import Event, EventFormatError, EventStream, SensorGeometry, read_binary, read_csv
from .simulator import DotSceneConfig, NoiseConfig, inject_shot_noise, simulate_dot, simulate_noise_only
from .surfaces import Grid, build_surface
from .windowing import Window, WindowSpec, per_pixel_sequences

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AutoencoderModel", "BaselineFilterConfig", "DotSceneConfig", "Event", "EventFormatError",
    "EventStream", "FeatureVector", "Grid", "MemoryFilterConfig", "MetricsReport", "NoiseConfig",
    "SensorGeometry", "TrainConfig", "UpdatePolicy", "Window", "WindowSpec", "baseline_filter",
    "build_surface", "compute_metrics", "extract_grid", "fit_centroids", "inject_shot_noise", "load_model",
    "memory_filter", "noise_ratio", "per_pixel_sequences", "pool_features", "predict", "read_binary",
    "read_csv", "save_model", "simulate_dot", "simulate_noise_only", "train", "voxel_mse", "__version__",
]
