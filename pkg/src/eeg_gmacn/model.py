"""Graph mutual-attention convolutional network.

Each layer computes

    O = ReLU(A_hat @ H @ W_gcn)
    S = softmax_rows((O @ W_q) @ (O @ W_k).T)
    H_next = O * (S @ (O @ W_v))

with ``A_hat`` the normalized electrode adjacency. The last ``H`` is
flattened row-major and passed through FC -> ReLU -> FC -> softmax.

With ``attention=False`` the modulation factor is all-ones and the network is
a plain GCN stack (no attention parameters are allocated).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numcore as nc
from .errors import CompatibilityError, ContractError, FormatError, ParameterError, ShapeError
from .spatial_graph import ElectrodeGraph

__all__ = [
    "GmacnConfig",
    "GmacnModel",
    "ForwardTrace",
    "TrainingReport",
    "TrainingError",
    "build_model",
    "calibrate",
    "gcn_layer",
    "mutual_attention",
    "mamm_layer",
    "predict",
    "forward",
    "loss",
    "batch_loss",
    "loss_and_grads",
    "train",
    "count_cost",
    "fc_cost",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = "gmacn-v1"


class TrainingError(ContractError):
    """Training diverged (non-finite loss)."""


@dataclass
class GmacnConfig:
    layers: int = 3
    gcn_dims: tuple = (16, 16, 16)
    attention_dims: tuple = (8, 8, 8)
    head_hidden: int = 64
    classes: int = 4
    focal_gamma: float = 2.0
    loss_mix: float = 0.5
    learning_rate: float = 0.05
    epochs: int = 200
    seed: int = 0
    attention: bool = True
    scaled_attention: bool = False
    grad_clip: float | None = 1.0

    def __post_init__(self):
        self.gcn_dims = tuple(int(d) for d in self.gcn_dims)
        self.attention_dims = tuple(int(d) for d in self.attention_dims)
        if self.layers < 1:
            raise ParameterError(f"layers must be >= 1, got {self.layers}")
        if len(self.gcn_dims) != self.layers or len(self.attention_dims) != self.layers:
            raise ParameterError(
                f"need {self.layers} gcn_dims and attention_dims, got "
                f"{len(self.gcn_dims)} and {len(self.attention_dims)}"
            )
        if self.classes < 1:
            raise ParameterError("classes must be >= 1")
        if not 0.0 <= self.loss_mix <= 1.0:
            raise ParameterError(f"loss_mix must be in [0, 1], got {self.loss_mix}")
        if self.focal_gamma < 0:
            raise ParameterError("focal_gamma must be >= 0")

    @classmethod
    def uniform(cls, layers=3, width=16, attention_width=8, **kw):
        return cls(layers=layers, gcn_dims=(width,) * layers,
                   attention_dims=(attention_width,) * layers, **kw)

    def to_dict(self):
        d = asdict(self)
        d["gcn_dims"] = list(self.gcn_dims)
        d["attention_dims"] = list(self.attention_dims)
        return d


@dataclass
class GmacnModel:
    config: GmacnConfig
    graph: ElectrodeGraph
    in_features: int
    params: dict = field(default_factory=dict)

    @property
    def nodes(self):
        return self.graph.size

    @property
    def ablated(self):
        return not self.config.attention

    def copy(self):
        return GmacnModel(self.config, self.graph, self.in_features,
                          {k: v.copy() for k, v in self.params.items()})

    def permuted(self, order):
        """Same model with electrodes renumbered by ``order``.

        The head's first weight matrix is keyed by (electrode, channel), so
        its row blocks move with the electrodes.
        """
        order = np.asarray(order)
        params = {k: v.copy() for k, v in self.params.items()}
        d = self.config.gcn_dims[-1]
        w1 = params["head_w1"].reshape(self.nodes, d, -1)
        params["head_w1"] = w1[order].reshape(self.nodes * d, -1)
        return GmacnModel(self.config, self.graph.permuted(order), self.in_features, params)


def _glorot(rng, fan_in, fan_out):
    r = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=(fan_in, fan_out))


def build_model(config: GmacnConfig, graph: ElectrodeGraph, in_features: int) -> GmacnModel:
    """Allocate seeded Glorot-uniform parameters (biases start at zero)."""
    rng = np.random.default_rng(config.seed)
    params = {}
    d_in = in_features
    for l in range(config.layers):
        d, a = config.gcn_dims[l], config.attention_dims[l]
        params[f"gcn{l}"] = _glorot(rng, d_in, d)
        if config.attention:
            params[f"wq{l}"] = _glorot(rng, d, a)
            params[f"wk{l}"] = _glorot(rng, d, a)
            # value width equals the GCN width so the Hadamard product conforms
            params[f"wv{l}"] = _glorot(rng, d, d)
        d_in = d
    flat = graph.size * config.gcn_dims[-1]
    params["head_w1"] = _glorot(rng, flat, config.head_hidden)
    params["head_b1"] = np.zeros((1, config.head_hidden))
    params["head_w2"] = _glorot(rng, config.head_hidden, config.classes)
    params["head_b2"] = np.zeros((1, config.classes))
    return GmacnModel(config, graph, in_features, params)


def calibrate(model: GmacnModel, V, passes: int = 3) -> GmacnModel:
    """Rescale weights in place so activations have unit RMS on ``V``.

    Layer by layer, ``W_gcn`` is scaled until the GCN output has unit RMS,
    then ``W_v`` until the modulated output does; finally the output layer is
    scaled for unit-RMS logits. The modulation multiplies two activations, so
    without this the signal shrinks by orders of magnitude per layer under
    plain Glorot init and gradient descent stalls.
    """
    V = np.asarray(V, dtype=np.float64)

    def rms(a):
        r = float(np.sqrt(np.mean(a**2)))
        return r if r > 0 else 1.0

    for l in range(model.config.layers):
        for _ in range(passes):
            model.params[f"gcn{l}"] = model.params[f"gcn{l}"] / rms(
                forward(model, V).gcn_outputs[l])
        if model.config.attention:
            for _ in range(passes):
                model.params[f"wv{l}"] = model.params[f"wv{l}"] / rms(
                    forward(model, V).hidden[l + 1])
    model.params["head_w2"] = model.params["head_w2"] / rms(forward(model, V).logits)
    return model


# -- layers ----------------------------------------------------------------


def gcn_layer(H, normalized, W):
    return nc.relu(nc.matmul(normalized, nc.matmul(H, W)))


def mutual_attention(O, Wq, Wk, Wv, scaled=False):
    """Return ``(attention @ (O @ Wv), attention)``."""
    q = nc.matmul(O, Wq)
    k = nc.matmul(O, Wk)
    scores = nc.matmul(q, nc.transpose(k))
    if scaled:
        scores = nc.affine(scores, 1.0 / math.sqrt(nc._val(Wq).shape[-1]))
    attn = nc.softmax_rows(scores)
    return nc.matmul(attn, nc.matmul(O, Wv)), attn


def mamm_layer(H, normalized, params, scaled=False):
    """One GCN + mutual-attention block; returns ``(H_next, attention, gcn_out)``."""
    Wg, Wq, Wk, Wv = params
    O = gcn_layer(H, normalized, Wg)
    out, attn = mutual_attention(O, Wq, Wk, Wv, scaled)
    if nc._val(out).shape != nc._val(O).shape:
        raise ShapeError(
            f"attention output {nc._val(out).shape} does not match GCN output {nc._val(O).shape}"
        )
    return nc.mul(O, out), attn, O


# -- forward pass ----------------------------------------------------------


@dataclass
class ForwardTrace:
    """Intermediates of one (possibly batched) forward pass.

    Array entries keep a leading batch axis. ``vars`` maps the same keys to
    tape handles so gradients w.r.t. any intermediate can be taken.
    """

    inputs: np.ndarray
    hidden: list  # H^(0) .. H^(L)
    gcn_outputs: list  # O^1 .. O^L
    attentions: list  # row-stochastic N x N per layer (empty when ablated)
    attention_outputs: list
    logits: np.ndarray
    probabilities: np.ndarray
    tape: nc.Tape = field(repr=False)
    vars: dict = field(repr=False)
    param_vars: dict = field(repr=False)
    ablated: bool = False
    batched: bool = True

    @property
    def predicted(self):
        return self.probabilities.argmax(axis=-1)


def _check_input(model, V):
    V = np.asarray(V, dtype=np.float64)
    batched = V.ndim == 3
    if V.ndim == 2:
        V = V[None]
    if V.ndim != 3 or V.shape[1:] != (model.nodes, model.in_features):
        raise ShapeError(
            f"input must be ({model.nodes}, {model.in_features}) per epoch, got {V.shape}"
        )
    return V, batched


def forward(model: GmacnModel, V, replace=None) -> ForwardTrace:
    """Record a forward pass on a fresh tape.

    ``replace`` maps ``("gcn", l)`` or ``("attention", l)`` to arrays that
    substitute that intermediate (used for finite-difference checks).
    """
    V, batched = _check_input(model, V)
    replace = replace or {}
    cfg = model.config
    tape = nc.Tape()
    pv = {k: tape.leaf(v, name=k) for k, v in model.params.items()}
    x = tape.leaf(V, name="input")
    a_hat = tape.leaf(model.graph.normalized, name="normalized")
    hidden, gcn_outs, attns, attn_outs = [x], [], [], []
    h = x
    for l in range(cfg.layers):
        o = gcn_layer(h, a_hat, pv[f"gcn{l}"])
        if ("gcn", l) in replace:
            o = tape.leaf(np.broadcast_to(replace[("gcn", l)], o.shape), name=f"O{l}")
        gcn_outs.append(o)
        if cfg.attention:
            q = nc.matmul(o, pv[f"wq{l}"])
            k = nc.matmul(o, pv[f"wk{l}"])
            scores = nc.matmul(q, nc.transpose(k))
            if cfg.scaled_attention:
                scores = nc.affine(scores, 1.0 / math.sqrt(cfg.attention_dims[l]))
            attn = nc.softmax_rows(scores)
            if ("attention", l) in replace:
                attn = tape.leaf(np.broadcast_to(replace[("attention", l)], attn.shape),
                                 name=f"A{l}")
            attns.append(attn)
            a_out = nc.matmul(attn, nc.matmul(o, pv[f"wv{l}"]))
            attn_outs.append(a_out)
            h = nc.mul(o, a_out)
        else:
            h = o
        hidden.append(h)
    batch = V.shape[0]
    flat = nc.reshape(h, (batch, model.nodes * cfg.gcn_dims[-1]))
    z1 = nc.relu(nc.add(nc.matmul(flat, pv["head_w1"]), pv["head_b1"]))
    logits = nc.add(nc.matmul(z1, pv["head_w2"]), pv["head_b2"])
    probs = nc.softmax_rows(logits)
    vars_ = {"hidden": hidden, "gcn": gcn_outs, "attention": attns,
             "attention_out": attn_outs, "logits": logits, "probabilities": probs}
    return ForwardTrace(
        inputs=V,
        hidden=[v.value for v in hidden],
        gcn_outputs=[v.value for v in gcn_outs],
        attentions=[v.value for v in attns],
        attention_outputs=[v.value for v in attn_outs],
        logits=logits.value,
        probabilities=probs.value,
        tape=tape,
        vars=vars_,
        param_vars=pv,
        ablated=not cfg.attention,
        batched=batched,
    )


def predict(model: GmacnModel, V) -> ForwardTrace:
    """Forward pass for one epoch (N x F) or a batch (B x N x F)."""
    return forward(model, V)


# -- loss ------------------------------------------------------------------


def loss(probabilities, label: int, config: GmacnConfig) -> float:
    """Mixed cross-entropy / focal loss of one predicted distribution."""
    p = np.asarray(probabilities, dtype=np.float64).ravel()
    if not 0 <= label < len(p):
        raise ParameterError(f"label {label} out of range for {len(p)} classes")
    pl = p[label]
    ce = -math.log(pl)
    focal = -((1.0 - pl) ** config.focal_gamma) * math.log(pl)
    a = config.loss_mix
    return a * ce + (1.0 - a) * focal


def batch_loss(logits, labels, config: GmacnConfig):
    """Mean mixed loss over a batch, computed from logits (recorded if a Var)."""
    labels = np.asarray(labels, dtype=np.intp)
    width = nc._val(logits).shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= width):
        raise ParameterError(f"labels must lie in [0, {width})")
    logp = nc.take_last(nc.log_softmax_rows(logits), labels)
    ce = nc.affine(logp, -1.0)
    p = nc.exp(logp)
    focal = nc.mul(nc.power(nc.affine(p, -1.0, 1.0), config.focal_gamma), ce)
    a = config.loss_mix
    per_sample = nc.add(nc.affine(ce, a), nc.affine(focal, 1.0 - a))
    return nc.mean(per_sample)


def loss_and_grads(model: GmacnModel, V, labels):
    trace = forward(model, V)
    out = batch_loss(trace.vars["logits"], labels, model.config)
    grads = trace.tape.backward(out)
    return out.value.item(), {k: grads[v] for k, v in trace.param_vars.items()}, trace


# -- training --------------------------------------------------------------


@dataclass
class TrainingReport:
    losses: list
    accuracies: list
    model: GmacnModel


def train(model: GmacnModel, data, config: GmacnConfig | None = None, progress=None):
    """Full-batch gradient descent; returns a report holding the trained copy.

    ``losses[e]`` is the mean loss at the start of epoch ``e`` (before that
    epoch's update); the final entry is the loss after the last update.
    When ``config.grad_clip`` is set, a step whose global gradient norm
    exceeds it is scaled down to that norm.
    """
    config = config or model.config
    if len(data) == 0:
        raise ParameterError("cannot train on an empty epoch set")
    if data.labels.max() >= config.classes:
        raise ParameterError(f"labels must be < classes ({config.classes})")
    model = model.copy()
    lr = config.learning_rate
    losses, accs = [], []
    for epoch in range(config.epochs + 1):
        value, grads, trace = loss_and_grads(model, data.features, data.labels)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at epoch {epoch}")
        losses.append(value)
        accs.append(float(np.mean(trace.predicted == data.labels)))
        if progress is not None:
            progress(epoch, value, accs[-1])
        if epoch == config.epochs:
            break
        step = lr
        if config.grad_clip is not None:
            norm = math.sqrt(sum(float((g**2).sum()) for g in grads.values()))
            if norm > config.grad_clip:
                step = lr * config.grad_clip / norm
        for k, g in grads.items():
            model.params[k] = model.params[k] - step * g
    return TrainingReport(losses, accs, model)


# -- cost ------------------------------------------------------------------


def fc_cost(fan_in, fan_out, bias=True):
    """Multiply-adds and parameter count of one dense layer on a single vector."""
    flops = fan_in * fan_out
    params = fan_in * fan_out + (fan_out if bias else 0)
    return flops, params


def count_cost(model: GmacnModel):
    """Analytic multiply-add and parameter counts for one forward pass.

    Matrix products count ``m * k * n``; the Hadamard modulation counts one
    multiply per entry. Softmax, ReLU and bias additions are not counted.
    """
    cfg = model.config
    n = model.nodes
    flops = 0
    d_in = model.in_features
    for l in range(cfg.layers):
        d, a = cfg.gcn_dims[l], cfg.attention_dims[l]
        flops += n * d_in * d + n * n * d  # H @ W, then A_hat @ (H W)
        if cfg.attention:
            flops += 2 * n * d * a  # queries, keys
            flops += n * d * d  # values
            flops += n * n * a  # scores
            flops += n * n * d  # attention @ values
            flops += n * d  # modulation
        d_in = d
    f1, _ = fc_cost(n * cfg.gcn_dims[-1], cfg.head_hidden)
    f2, _ = fc_cost(cfg.head_hidden, cfg.classes)
    flops += f1 + f2
    params = int(sum(v.size for v in model.params.values()))
    return int(flops), params


# -- checkpoints -----------------------------------------------------------


def _nested(a):
    return [[float(x) for x in row] for row in np.atleast_2d(a)]


def save_checkpoint(model: GmacnModel, path, extra=None) -> None:
    g = model.graph
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "in_features": model.in_features,
        "ablated": model.ablated,
        "montage": {"hash": g.montage_hash, "names": list(g.names)},
        "graph": {"strategy": g.strategy, "parameter": g.parameter,
                  "adjacency": _nested(g.adjacency)},
        "params": {k: {"shape": list(v.shape), "values": _nested(v)}
                   for k, v in sorted(model.params.items())},
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_checkpoint(path, expected_montage_hash=None) -> GmacnModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FormatError(f"{path}: not a JSON checkpoint ({exc})") from None
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    g = doc["graph"]
    graph = ElectrodeGraph(np.array(g["adjacency"]), g["strategy"], g["parameter"],
                           doc["montage"]["hash"], tuple(doc["montage"]["names"]))
    if expected_montage_hash and graph.montage_hash != expected_montage_hash:
        raise CompatibilityError(
            f"checkpoint montage {graph.montage_hash} != expected {expected_montage_hash}"
        )
    config = GmacnConfig(**doc["config"])
    params = {k: np.array(v["values"], dtype=np.float64).reshape(v["shape"])
              for k, v in doc["params"].items()}
    return GmacnModel(config, graph, int(doc["in_features"]), params)
