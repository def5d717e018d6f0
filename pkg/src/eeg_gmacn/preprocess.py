"""Signal chain: band-pass, resample, epoching and wavelet features.

ICA cleaning is represented by :func:`ica_clean`, a documented no-op: no
decomposition variant, component count or rejection rule is prescribed, so
nothing is removed here. Plug a real cleaner in through ``clean=`` in
:func:`epochs_from_recording`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import ceil, comb
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import FormatError, ParameterError

__all__ = [
    "RawRecording",
    "EpochSet",
    "RawEpoch",
    "bandpass",
    "resample",
    "extract_epochs",
    "ica_clean",
    "daubechies",
    "dwt",
    "wavedec",
    "wavelet_features",
    "epochs_from_recording",
    "load_recording",
    "FEATURE_NAMES",
    "LOG_EPS",
]

LOG_EPS = 1e-12
FILTER_ORDER = 4


@dataclass(frozen=True)
class RawRecording:
    channels: tuple
    data: np.ndarray  # channels x samples
    sample_rate: float
    markers: tuple = ()  # (sample index, event label)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != len(self.channels):
            raise FormatError(
                f"data must be (channels={len(self.channels)}, samples), got {data.shape}"
            )
        if not self.sample_rate > 0:
            raise ParameterError(f"sample_rate must be > 0, got {self.sample_rate}")
        markers = tuple((int(s), str(lab)) for s, lab in self.markers)
        for s, lab in markers:
            if not 0 <= s < data.shape[1]:
                raise FormatError(f"marker {lab!r} at sample {s} outside recording")
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "markers", markers)

    @property
    def n_samples(self):
        return self.data.shape[1]

    def with_data(self, data, sample_rate=None, markers=None):
        return RawRecording(
            self.channels, data,
            self.sample_rate if sample_rate is None else sample_rate,
            self.markers if markers is None else markers,
        )


@dataclass(frozen=True)
class RawEpoch:
    data: np.ndarray  # channels x window samples
    label: int
    onset: int


@dataclass
class EpochSet:
    """Per-trial feature matrices (electrodes x features) with class labels."""

    features: np.ndarray  # trials x N x F
    labels: np.ndarray
    feature_names: tuple
    classes: int
    montage_hash: str = ""
    channel_names: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 3:
            raise FormatError(f"features must be trials x N x F, got {self.features.shape}")
        if len(self.labels) != len(self.features):
            raise FormatError("one label per epoch required")
        if self.features.shape[2] != len(self.feature_names):
            raise FormatError("feature_names length must equal F")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise FormatError(f"labels must lie in [0, {self.classes})")
        self.feature_names = tuple(self.feature_names)
        self.channel_names = tuple(self.channel_names)

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self):
        return self.features.shape[1:]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return EpochSet(
            self.features[idx], self.labels[idx], self.feature_names, self.classes,
            self.montage_hash, self.channel_names, dict(self.meta),
        )

    def __eq__(self, other):
        if not isinstance(other, EpochSet):
            return NotImplemented
        return (
            self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and self.feature_names == other.feature_names
            and self.classes == other.classes
            and self.montage_hash == other.montage_hash
            and self.channel_names == other.channel_names
        )


# -- filtering -------------------------------------------------------------


def _zero_phase(sos, data, sample_rate, slowest_hz):
    # mirror padding of ~3 periods of the slowest edge keeps edge transients out
    n = data.shape[-1]
    padlen = min(n - 1, int(ceil(3.0 * sample_rate / slowest_hz)))
    return signal.sosfiltfilt(sos, data, axis=-1, padtype="even", padlen=padlen)


def bandpass(r: RawRecording, low: float, high: float) -> RawRecording:
    """Zero-phase 4th-order Butterworth band-pass applied per channel."""
    nyq = r.sample_rate / 2.0
    if not 0 < low < high < nyq:
        raise ParameterError(
            f"band must satisfy 0 < low < high < {nyq:g} Hz, got ({low}, {high})"
        )
    sos = signal.butter(FILTER_ORDER, [low, high], btype="bandpass", fs=r.sample_rate,
                        output="sos")
    return r.with_data(_zero_phase(sos, r.data, r.sample_rate, low))


def resample(r: RawRecording, target: float) -> RawRecording:
    """Low-pass at 0.45 x target, then sample at the new rate.

    Output length is ``round(n * target / source)``; marker indices scale by
    the same ratio, rounded to the nearest output sample.
    """
    if not target > 0:
        raise ParameterError(f"target rate must be > 0, got {target}")
    src = r.sample_rate
    n_out = int(round(r.n_samples * target / src))
    if n_out < 1:
        raise ParameterError(f"resampling {r.n_samples} samples to {target} Hz leaves none")
    data = r.data
    cutoff = 0.45 * target
    if cutoff < src / 2.0:
        sos = signal.butter(FILTER_ORDER, cutoff, btype="lowpass", fs=src, output="sos")
        data = _zero_phase(sos, data, src, cutoff)
    t_out = np.arange(n_out) * (src / target)
    ratio = src / target
    if float(ratio).is_integer():
        out = data[:, (np.arange(n_out) * int(ratio))]
    else:
        t_in = np.arange(r.n_samples)
        out = np.vstack([np.interp(t_out, t_in, ch) for ch in data])
    # a marker rounding past the end lands on the last output sample
    markers = [(min(int(round(s * target / src)), n_out - 1), lab) for s, lab in r.markers]
    return r.with_data(out, sample_rate=float(target), markers=markers)


def ica_clean(r: RawRecording) -> RawRecording:
    """Placeholder for artifact removal; returns the recording unchanged."""
    return r


def extract_epochs(r: RawRecording, window, label_map):
    """Cut ``(pre_ms, post_ms)`` windows around markers present in ``label_map``.

    Returns ``(epochs, dropped)`` where ``dropped`` counts markers whose
    window would leave the recording.
    """
    if not label_map:
        raise ParameterError("label_map must map at least one event to a class")
    pre_ms, post_ms = window
    pre = int(round(pre_ms * r.sample_rate / 1000.0))
    post = int(round(post_ms * r.sample_rate / 1000.0))
    if pre + post <= 0:
        raise ParameterError(f"empty epoch window {window}")
    epochs, dropped = [], 0
    for s, lab in r.markers:
        if lab not in label_map:
            continue
        start, stop = s - pre, s + post
        if start < 0 or stop > r.n_samples:
            dropped += 1
            continue
        epochs.append(RawEpoch(r.data[:, start:stop].copy(), int(label_map[lab]), s))
    return epochs, dropped


# -- wavelets --------------------------------------------------------------


def daubechies(order: int) -> np.ndarray:
    """Minimum-phase Daubechies scaling filter with ``order`` vanishing moments.

    ``order=1`` is Haar. Built by spectral factorization, so coefficients
    come out at full float64 precision.
    """
    if order < 1:
        raise ParameterError(f"wavelet order must be >= 1, got {order}")
    if order == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)
    ys = np.roots([comb(order - 1 + k, k) for k in range(order)][::-1])
    zs = []
    for y in ys:
        # y = (2 - z - 1/z) / 4  =>  z^2 + (4y - 2) z + 1 = 0; keep the root inside the unit circle
        pair = np.roots([1.0, 4.0 * y - 2.0, 1.0])
        zs.append(pair[np.argmin(np.abs(pair))])
    q = np.real(np.poly(zs))
    h = np.convolve(np.real(np.poly([-1.0] * order)), q)[::-1]
    return h / h.sum() * np.sqrt(2.0)


_WAVELETS = {"haar": 1, "db1": 1, "db2": 2, "db3": 3, "db4": 4, "db5": 5, "db6": 6}
_FILTER_CACHE: dict = {}


def _filters(wavelet):
    if wavelet not in _WAVELETS:
        raise ParameterError(f"unknown wavelet {wavelet!r}; choose from {sorted(_WAVELETS)}")
    if wavelet not in _FILTER_CACHE:
        lo = daubechies(_WAVELETS[wavelet])
        n = len(lo)
        hi = np.array([(-1) ** k * lo[n - 1 - k] for k in range(n)])
        _FILTER_CACHE[wavelet] = (lo, hi)
    return _FILTER_CACHE[wavelet]


def dwt(x, wavelet="db4"):
    """One periodized analysis step: ``c[k] = sum_n f[n] x[(2k + n) mod N]``.

    Orthonormal for even ``N``, so energy is preserved exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n % 2:
        raise ParameterError(f"periodized DWT needs an even length, got {n}")
    lo, hi = _filters(wavelet)
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(lo))[None, :]) % n
    windows = x[..., idx]
    return windows @ lo, windows @ hi


def wavedec(x, wavelet="db4", levels=4):
    """Multi-level decomposition; returns ``[approx, detail_levels, ..., detail_1]``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 2**levels or n % (2**levels):
        raise ParameterError(f"length {n} cannot be decomposed into {levels} levels")
    details = []
    approx = x
    for _ in range(levels):
        approx, d = dwt(approx, wavelet)
        details.append(d)
    return [approx] + details[::-1]




def wavelet_features(epoch, wavelet="db4", levels=4) -> np.ndarray:
    """Per-channel log-energies of every sub-band plus mean and variance.

    Each channel is zero-padded to the next power of two before the
    decomposition. Returns ``channels x (levels + 3)`` with columns
    ``d1..d<levels>, approximation, mean, variance``.
    """
    data = epoch.data if isinstance(epoch, RawEpoch) else np.asarray(epoch, dtype=np.float64)
    data = np.atleast_2d(data)
    n = data.shape[1]
    if n < 2**levels:
        raise ParameterError(f"epoch of {n} samples is shorter than 2^{levels}")
    padded_len = 1 << (n - 1).bit_length()
    padded = np.zeros((data.shape[0], padded_len))
    padded[:, :n] = data
    coeffs = wavedec(padded, wavelet, levels)
    approx, details = coeffs[0], coeffs[1:][::-1]  # details now d1 first
    cols = [np.log(LOG_EPS + (d**2).sum(axis=1)) for d in details]
    cols.append(np.log(LOG_EPS + (approx**2).sum(axis=1)))
    cols.append(data.mean(axis=1))
    cols.append(data.var(axis=1))
    return np.column_stack(cols)


def feature_names(levels=4):
    return tuple(f"logE_d{i}" for i in range(1, levels + 1)) + (
        f"logE_a{levels}", "mean", "variance",
    )


FEATURE_NAMES = feature_names(4)


def epochs_from_recording(
    r: RawRecording,
    label_map,
    *,
    band=(0.05, 200.0),
    target_rate=100.0,
    window=(0.0, 600.0),
    wavelet="db4",
    levels=4,
    clean=ica_clean,
    montage_hash="",
):
    """Full chain: band-pass, clean, resample, epoch, wavelet features."""
    high = min(band[1], 0.49 * r.sample_rate)
    x = bandpass(r, band[0], high)
    x = clean(x)
    x = resample(x, target_rate)
    raw, dropped = extract_epochs(x, window, label_map)
    classes = max(label_map.values()) + 1
    names = feature_names(levels)
    if raw:
        feats = np.stack([wavelet_features(e, wavelet, levels) for e in raw])
    else:
        feats = np.zeros((0, len(r.channels), len(names)))
    meta = {
        "band_hz": list(band),
        "band_applied_hz": [band[0], high],
        "target_rate_hz": target_rate,
        "window_ms": list(window),
        "wavelet": wavelet,
        "levels": levels,
        "dropped_markers": dropped,
        "cleaning": getattr(clean, "__name__", "custom"),
    }
    return EpochSet(feats, [e.label for e in raw], names, classes, montage_hash,
                    r.channels, meta)


def load_recording(signal_csv, marker_csv, sample_rate) -> RawRecording:
    """Read ``sample,<ch1>,...`` and ``sample,label`` CSVs."""
    signal_csv, marker_csv = Path(signal_csv), Path(marker_csv)
    with signal_csv.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sample" or len(header) < 2:
            raise FormatError(f"{signal_csv}:1: expected header 'sample,<ch1>,...'")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise FormatError(f"{signal_csv}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(v) for v in rec[1:]])
            except ValueError:
                raise FormatError(f"{signal_csv}:{lineno}: non-numeric sample") from None
    markers = []
    with marker_csv.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["sample", "label"]:
            raise FormatError(f"{marker_csv}:1: expected header 'sample,label'")
        for lineno, rec in enumerate(reader, start=2):
            try:
                markers.append((int(rec[0]), rec[1]))
            except (ValueError, IndexError):
                raise FormatError(f"{marker_csv}:{lineno}: bad marker record") from None
    data = np.array(rows, dtype=np.float64).T
    return RawRecording(tuple(header[1:]), data, float(sample_rate), markers)
