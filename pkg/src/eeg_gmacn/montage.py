"""Electrode names and scalp geometry.

The built-in 64-channel layout uses idealized spherical 10-10 positions:
Cz at the vertex, Fpz/T7/Oz/T8 on the equator, and each coronal row laid out
with equal arc spacing along the circle through its two equatorial end points
and its midline electrode.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

__all__ = [
    "Montage",
    "builtin_64",
    "load_montage",
    "save_montage",
    "BUILTIN_HEAD_RADIUS",
    "BCI3_CHANNELS",
]

# See README ("Montage scale") for why the radius is not 100.
BUILTIN_HEAD_RADIUS = 25.0

# Channel order of the 64-electrode P300 speller recordings.
BCI3_CHANNELS = (
    "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6",
    "C5", "C3", "C1", "Cz", "C2", "C4", "C6",
    "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6",
    "Fp1", "Fpz", "Fp2",
    "AF7", "AF3", "AFz", "AF4", "AF8",
    "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8",
    "FT7", "FT8", "T7", "T8", "T9", "T10", "TP7", "TP8",
    "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8",
    "PO7", "PO3", "POz", "PO4", "PO8",
    "O1", "Oz", "O2", "Iz",
)


@dataclass(frozen=True)
class Montage:
    """Ordered electrodes with 3-D positions.

    Order is the node numbering used by every adjacency and feature matrix.
    ``projected`` holds 2-D azimuthal-equidistant positions for scalp maps.
    """

    names: tuple
    positions: np.ndarray
    label: str = "custom"
    index: dict = field(init=False, repr=False, compare=False)
    projected: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape != (len(names), 3):
            raise FormatError(f"positions must be ({len(names)}, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise FormatError("electrode positions must be finite")
        index = {}
        for i, n in enumerate(names):
            if n in index:
                raise FormatError(f"duplicate electrode name {n!r}")
            index[n] = i
        pos.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "projected", _azimuthal_projection(pos))

    def __len__(self):
        return len(self.names)

    @property
    def count(self):
        return len(self.names)

    def position(self, name):
        return self.positions[self.index[name]]

    def distance(self, a, b):
        return float(np.linalg.norm(self.position(a) - self.position(b)))

    def fingerprint(self):
        """Stable hash of names and exact coordinates."""
        h = hashlib.sha256()
        for name, p in zip(self.names, self.positions):
            h.update(f"{name},{p[0]!r},{p[1]!r},{p[2]!r}\n".encode())
        return h.hexdigest()[:16]

    def permuted(self, order):
        order = np.asarray(order)
        return Montage(tuple(self.names[i] for i in order), self.positions[order], self.label)


def _azimuthal_projection(pos):
    if len(pos) == 0:
        return np.zeros((0, 2))
    center = pos.mean(axis=0)
    rel = pos - center
    r = np.linalg.norm(rel, axis=1)
    r = np.where(r == 0, 1.0, r)
    # vertex direction: +z; polar angle from it becomes the projected radius
    theta = np.arccos(np.clip(rel[:, 2] / r, -1.0, 1.0))
    phi = np.arctan2(rel[:, 1], rel[:, 0])
    return np.column_stack([theta * np.cos(phi), theta * np.sin(phi)])


def _unit(theta_deg, az_deg):
    t, a = np.radians(theta_deg), np.radians(az_deg)
    return np.array([np.sin(t) * np.cos(a), np.sin(t) * np.sin(a), np.cos(t)])


def _row(left, mid, right, steps):
    """Points equally spaced along the circle through three unit vectors.

    Returns ``2 * steps + 1`` points from ``left`` through ``mid`` to ``right``.
    """
    # circle = sphere cut by the plane through the three points
    normal = np.cross(mid - left, right - left)
    normal /= np.linalg.norm(normal)
    center = normal * np.dot(normal, left)
    u = mid - center
    radius = np.linalg.norm(u)
    u /= radius
    w = np.cross(normal, u)
    ang_l = np.arctan2(np.dot(left - center, w), np.dot(left - center, u))
    ang_r = np.arctan2(np.dot(right - center, w), np.dot(right - center, u))
    angles = np.concatenate(
        [np.linspace(ang_l, 0.0, steps + 1), np.linspace(0.0, ang_r, steps + 1)[1:]]
    )
    return [center + radius * (np.cos(a) * u + np.sin(a) * w) for a in angles]


def _ideal_1010():
    """Unit-sphere positions for the 10-10 electrodes used by the builtin set.

    Axes: +x toward the right ear (T8), +y toward the nose, +z the vertex.
    """
    pos = {}
    # equator: 10% of the nasion-inion circumference at half-steps of 18 degrees
    equator = {"Fpz": 90, "Fp2": 72, "AF8": 54, "F8": 36, "FT8": 18, "T8": 0,
               "TP8": -18, "P8": -36, "PO8": -54, "O2": -72, "Oz": -90,
               "O1": -108, "PO7": -126, "P7": -144, "TP7": -162, "T7": 180,
               "FT7": 162, "F7": 144, "AF7": 126, "Fp1": 108}
    for name, az in equator.items():
        pos[name] = _unit(90, az)
    # midline: 22.5 degrees per 10-10 step between Fpz and Oz
    for name, theta, az in [("AFz", 67.5, 90), ("Fz", 45, 90), ("FCz", 22.5, 90),
                            ("Cz", 0, 0), ("CPz", 22.5, -90), ("Pz", 45, -90),
                            ("POz", 67.5, -90), ("Iz", 112.5, -90),
                            ("T9", 112.5, 180), ("T10", 112.5, 0)]:
        pos[name] = _unit(theta, az)
    rows = {
        "AF": ("AF7", "AFz", "AF8"),
        "F": ("F7", "Fz", "F8"),
        "FC": ("FT7", "FCz", "FT8"),
        "C": ("T7", "Cz", "T8"),
        "CP": ("TP7", "CPz", "TP8"),
        "P": ("P7", "Pz", "P8"),
        "PO": ("PO7", "POz", "PO8"),
    }
    for prefix, (left, mid, right) in rows.items():
        pts = _row(pos[left], pos[mid], pos[right], steps=4)
        # left end .. midline .. right end: 7 5 3 1 z 2 4 6 8
        for pt, num in zip(pts[1:4], (5, 3, 1)):
            pos.setdefault(f"{prefix}{num}", pt)
        for pt, num in zip(pts[5:8], (2, 4, 6)):
            pos.setdefault(f"{prefix}{num}", pt)
    return pos


def builtin_64(radius: float = BUILTIN_HEAD_RADIUS) -> Montage:
    """The 64-channel extended 10-20 layout on a sphere of the given radius."""
    ideal = _ideal_1010()
    positions = np.array([ideal[n] for n in BCI3_CHANNELS]) * radius
    return Montage(BCI3_CHANNELS, positions, label="builtin-64")


def load_montage(path) -> Montage:
    """Read a ``name,x,y,z`` CSV."""
    path = Path(path)
    names, rows, seen = [], [], {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["name", "x", "y", "z"]:
            raise FormatError(f"{path}:1: expected header 'name,x,y,z'")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(rec)}")
            name = rec[0].strip()
            if name in seen:
                raise FormatError(
                    f"{path}:{lineno}: duplicate electrode {name!r} "
                    f"(first seen on line {seen[name]})"
                )
            try:
                xyz = [float(c) for c in rec[1:]]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric coordinate in {rec[1:]}") from None
            if not all(np.isfinite(xyz)):
                raise FormatError(f"{path}:{lineno}: non-finite coordinate")
            seen[name] = lineno
            names.append(name)
            rows.append(xyz)
    if not names:
        raise FormatError(f"{path}: no electrodes")
    return Montage(tuple(names), np.array(rows), label=path.stem)


def save_montage(montage: Montage, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "x", "y", "z"])
        for name, p in zip(montage.names, montage.positions):
            w.writerow([name, repr(float(p[0])), repr(float(p[1])), repr(float(p[2]))])

