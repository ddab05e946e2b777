"""Sinusoid-vs-square-wave data for smoke tests and the synthetic sweep."""
import numpy as np

from .datapipe import DatasetManifest, SplitPolicy, TimeSeriesRecording, WindowedDataset


def _wave(kind, t, freq, phase):
    s = np.sin(2 * np.pi * freq * t + phase)
    return s if kind == 0 else np.sign(s + 1e-12)


def wave_windows(n, length=64, channels=2, seed=7, noise=0.2, cycles=(1.5, 4.0)):
    """``n`` windows, label 0 = sinusoid, label 1 = square wave, balanced."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    rng.shuffle(labels)
    t = np.arange(length) / length
    x = np.empty((n, length, channels))
    for i, y in enumerate(labels):
        f = rng.uniform(*cycles)
        for c in range(channels):
            amp = rng.uniform(0.7, 1.3)
            x[i, :, c] = amp * _wave(y, t, f, rng.uniform(0, 2 * np.pi))
    x += noise * rng.standard_normal(x.shape)
    return x, labels.astype(np.int64)


def wave_dataset(n, length=64, channels=2, seed=7, **kw) -> WindowedDataset:
    x, y = wave_windows(n, length, channels, seed, **kw)
    return WindowedDataset(x, y, float(length), 0, "synthetic")


def synthetic_manifest(frequency_hz=32.0, window_seconds=2.0, test_fraction=0.25, seed=7):
    return DatasetManifest(
        "synthetic", frequency_hz, window_seconds, 0.5, 2, ("SINE", "SQUARE"),
        SplitPolicy("random_fraction", seed, test_fraction))


def wave_recording(manifest: DatasetManifest, subjects=4, segments=10, segment_windows=8,
                   seed=7, noise=0.15) -> TimeSeriesRecording:
    """Continuous multi-subject recording built from alternating class segments."""
    rng = np.random.default_rng(seed)
    fs = manifest.base_frequency_hz
    seg_len = manifest.window_length * segment_windows
    chans, labs, subj = [], [], []
    for s in range(subjects):
        for k in range(segments):
            y = (k + s) % 2
            t = np.arange(seg_len) / fs
            f = rng.uniform(0.5, 1.25)
            seg = np.stack([rng.uniform(0.7, 1.3) * _wave(y, t, f, rng.uniform(0, 2 * np.pi))
                            for _ in range(manifest.channel_count)], axis=1)
            chans.append(seg + noise * rng.standard_normal(seg.shape))
            labs.append(np.full(seg_len, y))
            subj.extend([f"S{s:02d}"] * seg_len)
    return TimeSeriesRecording(np.concatenate(chans), np.concatenate(labs).astype(np.int64),
                               fs, "", np.array(subj))
