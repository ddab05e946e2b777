"""Sampling-rate reduction sweeps for compact time-series classifiers on MCUs."""
from .datapipe import (DatasetManifest, SplitPolicy, TimeSeriesRecording, WindowedDataset,
                       extract_windows, ingest_csv, reduce_rate, split)
from .compress import CompressedModel, compress, quantize
from .footprint import DeviceProfile, FootprintReport, count_macs, estimate_arena, profile
from .nn import ModelSpec, TrainConfig, TrainedModel, train
from .sweeplab import SweepConfig, run_sweep, summarize

__version__ = "0.1.0"
