"""Per-electrode importance from a recorded forward pass.

For the predicted class ``c`` and its score ``z_c`` (pre-softmax logit by
default, class probability with ``score="probability"``):

* ``gfg[i] = sum_f dz_c/dO1[i, f] * O1[i, f]`` where ``O1`` is the first GCN
  output;
* ``gwi[i] = sum_j dz_c/dA1[i, j] * A1[i, j]`` where ``A1`` is the first
  attention matrix. Despite the "inverse" in its name no matrix is inverted;
  it is gradient-weighted attention, reduced over each row;
* ``iegw = minmax(gfg * gwi * degree)`` with ``degree`` the row sums of the
  electrode adjacency.

A model trained without the attention branch has no ``A1``, so ``gwi`` and
``iegw`` raise :class:`UnavailableError` for it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numcore as nc
from .errors import ParameterError, UnavailableError
from .model import ForwardTrace, GmacnModel, forward
from .montage import Montage

__all__ = [
    "ExplanationReport",
    "gfg",
    "gwi",
    "iegw",
    "explain_epochs",
    "mean_report",
    "render_scalp_svg",
    "save_report",
    "COLORMAP",
]

SCORES = ("logit", "probability")


@dataclass
class ExplanationReport:
    target_class: int
    gfg: np.ndarray
    gwi: np.ndarray
    degree: np.ndarray
    iegw: np.ndarray
    names: tuple = ()
    montage_hash: str = ""
    meta: dict = field(default_factory=dict)

    def ranking(self):
        """Electrode indices from most to least important (stable on ties)."""
        return np.argsort(-self.iegw, kind="stable")

    def to_dict(self):
        names = self.names or tuple(str(i) for i in range(len(self.iegw)))
        return {
            "target_class": self.target_class,
            "montage_hash": self.montage_hash,
            "meta": self.meta,
            "electrodes": [
                {"name": n, "gfg": float(a), "gwi": float(b), "degree": float(d),
                 "iegw": float(w)}
                for n, a, b, d, w in zip(names, self.gfg, self.gwi, self.degree, self.iegw)
            ],
        }


def _targets(trace, target):
    b = trace.probabilities.shape[0]
    classes = trace.probabilities.shape[-1]
    if target is None:
        return trace.predicted
    t = np.broadcast_to(np.asarray(target, dtype=np.intp), (b,))
    if np.any(t < 0) or np.any(t >= classes):
        raise ParameterError(f"target class out of range for {classes} classes")
    return t


def _score_grads(trace: ForwardTrace, target, score):
    if score not in SCORES:
        raise ParameterError(f"score must be one of {SCORES}, got {score!r}")
    t = _targets(trace, target)
    src = trace.vars["logits"] if score == "logit" else trace.vars["probabilities"]
    # samples are independent, so one sweep over the batch sum gives per-sample gradients
    z = nc.total(nc.take_last(src, t))
    return trace.tape.backward(z)


def _squeeze(trace, v):
    return v if trace.batched else v[0]


def gfg(trace: ForwardTrace, target=None, score="logit", grads=None) -> np.ndarray:
    """Gradient-times-activation of the first GCN output, summed per node."""
    grads = grads or _score_grads(trace, target, score)
    o1 = trace.vars["gcn"][0]
    return _squeeze(trace, (grads[o1] * o1.value).sum(axis=-1))


def gwi(trace: ForwardTrace, target=None, score="logit", grads=None) -> np.ndarray:
    """Gradient-times-attention of the first attention matrix, summed per row."""
    if trace.ablated or not trace.vars["attention"]:
        raise UnavailableError("GWI unavailable for ablated model (no attention branch)")
    grads = grads or _score_grads(trace, target, score)
    a1 = trace.vars["attention"][0]
    return _squeeze(trace, (grads[a1] * a1.value).sum(axis=-1))


def iegw(trace: ForwardTrace, graph, score="logit", montage: Montage | None = None):
    """Explanation of the predicted class for every epoch in the trace.

    Returns one :class:`ExplanationReport` for an unbatched trace, else a list.
    """
    if trace.ablated:
        raise UnavailableError("GWI unavailable for ablated model (no attention branch)")
    target = trace.predicted
    grads = _score_grads(trace, target, score)
    g = np.atleast_2d(gfg(trace, target, score, grads))
    w = np.atleast_2d(gwi(trace, target, score, grads))
    degree = graph.adjacency.sum(axis=1)
    names = montage.names if montage is not None else tuple(graph.names)
    reports = []
    for b in range(g.shape[0]):
        reports.append(ExplanationReport(
            int(target[b]), g[b], w[b], degree.copy(),
            nc.minmax_normalize(g[b] * w[b] * degree),
            names, graph.montage_hash, {"score": score},
        ))
    return reports if trace.batched else reports[0]


def explain_epochs(model: GmacnModel, features, score="logit", batch=256):
    """IEGW reports for every epoch in a ``B x N x F`` array."""
    features = np.asarray(features, dtype=np.float64)
    out = []
    for start in range(0, len(features), batch):
        trace = forward(model, features[start:start + batch])
        out.extend(iegw(trace, model.graph, score))
    return out


def mean_report(reports) -> ExplanationReport:
    """Dataset-level report: element-wise mean of per-epoch vectors."""
    if not reports:
        raise ParameterError("no reports to aggregate")
    first = reports[0]
    classes = np.bincount([r.target_class for r in reports])
    return ExplanationReport(
        int(classes.argmax()),
        np.mean([r.gfg for r in reports], axis=0),
        np.mean([r.gwi for r in reports], axis=0),
        first.degree.copy(),
        np.mean([r.iegw for r in reports], axis=0),
        first.names, first.montage_hash,
        {"aggregation": "mean of per-epoch vectors", "epochs": len(reports),
         "target_class": "most frequent predicted class", **first.meta},
    )


def save_report(reports, path, mean=None) -> None:
    doc = {"epochs": [r.to_dict() for r in reports]}
    if mean is not None:
        doc["mean"] = mean.to_dict()
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


# -- scalp map -------------------------------------------------------------

# Monotone sequential ramp (dark blue -> teal -> yellow), linearly interpolated.
COLORMAP = ((0.0, (48, 18, 59)), (0.25, (40, 110, 190)), (0.5, (30, 175, 150)),
            (0.75, (160, 215, 60)), (1.0, (250, 235, 35)))


def color_for(value: float) -> str:
    v = min(max(float(value), 0.0), 1.0)
    for (x0, c0), (x1, c1) in zip(COLORMAP, COLORMAP[1:]):
        if v <= x1:
            s = 0.0 if x1 == x0 else (v - x0) / (x1 - x0)
            rgb = [round(a + s * (b - a)) for a, b in zip(c0, c1)]
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#{:02x}{:02x}{:02x}".format(*COLORMAP[-1][1])


def render_scalp_svg(report: ExplanationReport, path, montage: Montage, title=None):
    """Top-down scalp map: one disc per electrode coloured by IEGW, plus a colour bar."""
    xy = montage.projected
    if len(xy) != len(report.iegw):
        raise ParameterError(
            f"report has {len(report.iegw)} electrodes, montage {len(xy)}"
        )
    size, margin, bar = 420.0, 30.0, 60.0
    extent = max(float(np.abs(xy).max()), 1e-9) * 1.12
    scale = (size / 2 - margin) / extent
    cx = cy = size / 2

    def px(p):
        # +y (nose) points up on the page
        return cx + p[0] * scale, cy - p[1] * scale

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + bar:.0f}" '
        f'height="{size:.0f}" viewBox="0 0 {size + bar:.0f} {size:.0f}" '
        'font-family="sans-serif">',
        f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{size / 2 - margin / 2:.2f}" '
        'fill="none" stroke="#444" stroke-width="1.5"/>',
        f'<path d="M {cx - 14:.2f} {margin / 2 + 2:.2f} L {cx:.2f} {margin / 2 - 12:.2f} '
        f'L {cx + 14:.2f} {margin / 2 + 2:.2f}" fill="none" stroke="#444" stroke-width="1.5"/>',
    ]
    if title:
        out.append(f'<text x="6" y="14" font-size="11">{_esc(title)}</text>')
    names = report.names or montage.names
    for name, p, w in zip(names, xy, report.iegw):
        x, y = px(p)
        out.append(
            f'<circle class="electrode" cx="{x:.2f}" cy="{y:.2f}" r="11" '
            f'fill="{color_for(w)}" stroke="#222" stroke-width="0.6">'
            f'<title>{_esc(name)}: {float(w):.4f}</title></circle>'
        )
        out.append(
            f'<text x="{x:.2f}" y="{y + 3:.2f}" font-size="7" text-anchor="middle" '
            f'fill="{"#000" if w > 0.6 else "#fff"}">{_esc(name)}</text>'
        )
    x0, y0, h = size + 18, margin, size - 2 * margin
    steps = 50
    for i in range(steps):
        v = 1.0 - i / steps
        out.append(
            f'<rect x="{x0:.2f}" y="{y0 + i * h / steps:.2f}" width="14" '
            f'height="{h / steps + 0.5:.2f}" fill="{color_for(v)}"/>'
        )
    out.append(f'<text x="{x0 + 18:.2f}" y="{y0 + 4:.2f}" font-size="9">1</text>')
    out.append(f'<text x="{x0 + 18:.2f}" y="{y0 + h:.2f}" font-size="9">0</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
