"""Epoch files, stratified splits and the planted-electrode benchmark."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CompatibilityError, FormatError, ParameterError
from .montage import Montage
from .preprocess import EpochSet, FEATURE_NAMES

__all__ = [
    "SyntheticSpec",
    "default_planted",
    "generate",
    "split",
    "save_epochs",
    "load_epochs",
    "EPOCH_FORMAT",
    "NOISE_ALGORITHM",
]

EPOCH_FORMAT = "gmacn-epochs-v1"
NOISE_ALGORITHM = "numpy.random.Generator(PCG64(seed)).standard_normal"


def default_planted(montage: Montage, classes: int, per_class: int, seed: int = 0):
    """Disjoint, spatially compact electrode subsets, one per class.

    Class centres are chosen by farthest-point sampling from a seeded start;
    each class then claims, in turn, the nearest still-free electrodes to its
    centre until it holds ``per_class`` of them.
    """
    n = len(montage)
    if classes * per_class > n:
        raise ParameterError(
            f"{classes} x {per_class} planted electrodes exceed the {n}-electrode montage"
        )
    p = montage.positions
    d = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=-1))
    rng = np.random.default_rng([seed, 1])
    centres = [int(rng.integers(n))]
    while len(centres) < classes:
        centres.append(int(np.argmax(d[centres].min(axis=0))))
    free = np.ones(n, dtype=bool)
    subsets = {c: [] for c in range(classes)}
    for _ in range(per_class):
        for c, centre in enumerate(centres):
            order = np.argsort(d[centre], kind="stable")
            pick = next(int(i) for i in order if free[i])
            free[pick] = False
            subsets[c].append(pick)
    return {c: tuple(sorted(v)) for c, v in subsets.items()}


@dataclass
class SyntheticSpec:
    montage: Montage
    classes: int = 4
    epochs_per_class: int = 100
    planted: dict = None  # class id -> electrode indices
    signal_gain: float = 5.0
    noise_sigma: float = 1.0
    seed: int = 7
    features: int = len(FEATURE_NAMES)
    planted_per_class: int = 8
    feature_names: tuple = field(default=FEATURE_NAMES)

    def __post_init__(self):
        if self.classes < 1 or self.epochs_per_class < 1:
            raise ParameterError("classes and epochs_per_class must be >= 1")
        if self.signal_gain < 0 or self.noise_sigma < 0:
            raise ParameterError("signal_gain and noise_sigma must be non-negative")
        if self.planted is None:
            self.planted = default_planted(self.montage, self.classes,
                                           self.planted_per_class, self.seed)
        self.planted = {int(c): tuple(int(i) for i in v) for c, v in self.planted.items()}
        for c in range(self.classes):
            subset = self.planted.get(c, ())
            if not subset:
                raise ParameterError(f"class {c} has no planted electrodes")
            if min(subset) < 0 or max(subset) >= len(self.montage):
                raise ParameterError(f"class {c} planted index out of range")
        if len(self.feature_names) != self.features:
            self.feature_names = tuple(f"f{i}" for i in range(self.features))


def generate(spec: SyntheticSpec) -> EpochSet:
    """Planted-signal epochs: class templates on planted electrodes plus noise.

    Every class gets a unit-norm template over the feature axis. An epoch of
    class ``c`` adds ``signal_gain * template_c`` to each electrode in
    ``planted[c]``; every entry also receives N(0, noise_sigma^2) noise.
    Epochs are ordered class-major.
    """
    rng = np.random.default_rng(spec.seed)
    n, f = len(spec.montage), spec.features
    templates = rng.standard_normal((spec.classes, f))
    templates /= np.linalg.norm(templates, axis=1, keepdims=True)
    total = spec.classes * spec.epochs_per_class
    noise = rng.standard_normal((total, n, f)) * spec.noise_sigma
    labels = np.repeat(np.arange(spec.classes), spec.epochs_per_class)
    feats = noise
    for c in range(spec.classes):
        rows = labels == c
        idx = np.array(spec.planted[c])
        feats[np.ix_(rows, idx)] += spec.signal_gain * templates[c]
    meta = {
        "generator": "planted-electrode",
        "seed": spec.seed,
        "noise_algorithm": NOISE_ALGORITHM,
        "signal_gain": spec.signal_gain,
        "noise_sigma": spec.noise_sigma,
        "planted": {str(c): list(v) for c, v in sorted(spec.planted.items())},
        "templates": templates.tolist(),
    }
    return EpochSet(feats, labels, spec.feature_names, spec.classes,
                    spec.montage.fingerprint(), spec.montage.names, meta)


def planted_of(data: EpochSet):
    """Planted subsets recorded in a generated set's metadata."""
    try:
        return {int(c): tuple(v) for c, v in data.meta["planted"].items()}
    except KeyError:
        raise ParameterError("epoch set carries no planted-electrode metadata") from None


def split(data: EpochSet, train_fraction: float, seed: int = 0):
    """Stratified, seeded train/test partition."""
    if not 0 < train_fraction < 1:
        raise ParameterError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(data.labels):
        idx = np.flatnonzero(data.labels == c)
        if len(idx) < 2:
            raise ParameterError(f"class {c} has {len(idx)} epoch(s); stratification needs 2")
        idx = rng.permutation(idx)
        k = int(round(train_fraction * len(idx)))
        k = min(max(k, 1), len(idx) - 1)
        train_idx.extend(idx[:k])
        test_idx.extend(idx[k:])
    return data.subset(sorted(train_idx)), data.subset(sorted(test_idx))


def save_epochs(data: EpochSet, path) -> None:
    """Line-delimited JSON: a header object, then one object per epoch."""
    n, f = data.shape
    header = {
        "format": EPOCH_FORMAT,
        "montage_hash": data.montage_hash,
        "channels": list(data.channel_names),
        "N": n,
        "F": f,
        "feature_names": list(data.feature_names),
        "classes": data.classes,
        "count": len(data),
        "noise_algorithm": data.meta.get("noise_algorithm"),
        "meta": data.meta,
    }
    lines = [json.dumps(header)]
    for x, y in zip(data.features, data.labels):
        lines.append(json.dumps({"label": int(y), "values": [float(v) for v in x.ravel()]}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_epochs(path, expected_montage_hash=None) -> EpochSet:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError(f"{path}:1: empty epoch file")
    try:
        header = json.loads(lines[0])
        n, f, count = int(header["N"]), int(header["F"]), int(header["count"])
        classes = int(header["classes"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}:1: bad header ({exc})") from None
    if header.get("format") != EPOCH_FORMAT:
        raise FormatError(f"{path}:1: unknown format {header.get('format')!r}")
    if expected_montage_hash is not None and header["montage_hash"] != expected_montage_hash:
        raise CompatibilityError(
            f"{path}: epochs built for montage {header['montage_hash']} "
            f"({n} electrodes), expected {expected_montage_hash}"
        )
    if len(lines) - 1 != count:
        raise FormatError(f"{path}:{len(lines) + 1}: expected {count} epochs, found {len(lines) - 1}")
    feats = np.empty((count, n, f))
    labels = np.empty(count, dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        try:
            rec = json.loads(line)
            vals = np.array(rec["values"], dtype=np.float64)
            labels[i] = int(rec["label"])
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}:{lineno}: bad epoch record ({exc})") from None
        if vals.size != n * f:
            raise FormatError(f"{path}:{lineno}: expected {n * f} values, got {vals.size}")
        feats[i] = vals.reshape(n, f)
    return EpochSet(feats, labels, tuple(header["feature_names"]), classes,
                    header["montage_hash"], tuple(header.get("channels", ())),
                    header.get("meta") or {})
