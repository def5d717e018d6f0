"""From a raw multichannel recording to wavelet epoch features.

Run: python3 demos/02_signal_chain.py
"""

# %%
import numpy as np

from eeg_gmacn.preprocess import (
    RawRecording,
    bandpass,
    epochs_from_recording,
    resample,
    wavedec,
)

fs = 1000.0
t = np.arange(20_000) / fs
rng = np.random.default_rng(0)

# three channels: slow drift, 10 Hz rhythm and line noise on top of white noise
data = np.vstack([
    0.5 + 0.2 * t + rng.normal(0, 0.1, t.size),
    np.sin(2 * np.pi * 10 * t) + rng.normal(0, 0.1, t.size),
    0.3 * np.sin(2 * np.pi * 60 * t) + rng.normal(0, 0.1, t.size),
])
markers = [(s, "target" if i % 3 == 0 else "other") for i, s in enumerate(range(1000, 19000, 700))]
rec = RawRecording(("drift", "alpha", "line"), data, fs, markers)

# %% band-pass removes the DC offset, keeps the 10 Hz rhythm
filtered = bandpass(rec, 0.05, 200)
print("channel means before", rec.data.mean(axis=1).round(3))
print("channel means after ", filtered.data[:, 2000:-2000].mean(axis=1).round(3))

# %% resampling to 100 Hz: the anti-alias filter at 45 Hz removes the 60 Hz line
down = resample(filtered, 100)
print("samples", rec.n_samples, "->", down.n_samples)
print("line channel std", filtered.data[2].std().round(3), "->", down.data[2].std().round(3))

# %% one periodized db4 decomposition; energy is preserved exactly
x = down.data[1, :64]
coeffs = wavedec(x, "db4", 4)
print("band lengths", [len(c) for c in coeffs])
print("energy", float((x**2).sum()), "vs", sum(float((c**2).sum()) for c in coeffs))

# %% the whole chain: 7 features per electrode per epoch
epochs = epochs_from_recording(rec, {"other": 0, "target": 1})
print(len(epochs), "epochs of shape", epochs.shape, epochs.feature_names)
print("labels", np.bincount(epochs.labels))
