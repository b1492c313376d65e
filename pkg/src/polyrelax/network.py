"""Feed-forward networks: model, JSON file format, forward pass and datasets.

File format (JSON)::

    {
      "format": "polyrelax-network",
      "version": 1,
      "input_dim": 2,
      "normalization": {"mean": [...], "std": [...]},      # optional
      "layers": [
        {"type": "affine", "shape": [3, 2], "weights": [...6 values, row-major], "bias": [...]},
        {"type": "relu"},                                   # or sigmoid / tanh
        {"type": "maxpool", "windows": [[0, 1], [2]]},
        {"type": "affine", ...}
      ]
    }

Numbers are written with ``repr`` so a save/load round trip is bit-exact.
"""
import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ShapeError

FORMAT = "polyrelax-network"
VERSION = 1
ACTIVATIONS = ("relu", "sigmoid", "tanh", "maxpool")


@dataclass(frozen=True, eq=False)
class Affine:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2:
            raise ShapeError(f"weights must be a matrix, got shape {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise ShapeError(f"weights have {w.shape[0]} rows but bias has {b.shape[0]} entries")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ShapeError("weights and bias must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    kind = "affine"

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class Activation:
    kind: str
    windows: tuple = None

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.kind!r}")
        if self.kind == "maxpool":
            if not self.windows:
                raise ShapeError("maxpool needs windows")
            object.__setattr__(self, "windows", tuple(tuple(int(i) for i in w) for w in self.windows))
            if any(len(w) == 0 for w in self.windows):
                raise ShapeError("empty maxpool window")
        elif self.windows is not None:
            raise ShapeError(f"{self.kind} takes no windows")


@dataclass(frozen=True, eq=False)
class Network:
    """Sequence of affine and activation layers.

    ``mean`` and ``std`` are optional input normalization constants; they are
    applied by :func:`load_dataset`, not by :func:`evaluate`.
    """

    layers: tuple
    input_dim: int = None
    mean: np.ndarray = None
    std: np.ndarray = None
    dims: tuple = field(init=False, repr=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers or not isinstance(layers[0], Affine):
            raise ShapeError("the first layer must be affine")
        d = layers[0].in_dim if self.input_dim is None else int(self.input_dim)
        dims = [d]
        for i, layer in enumerate(layers):
            if isinstance(layer, Affine):
                if layer.in_dim != d:
                    raise ShapeError(f"layer {i}: expects {layer.in_dim} inputs, previous layer gives {d}")
                d = layer.out_dim
            elif isinstance(layer, Activation):
                if layer.kind == "maxpool":
                    if max(max(w) for w in layer.windows) >= d or min(min(w) for w in layer.windows) < 0:
                        raise ShapeError(f"layer {i}: maxpool window index outside 0..{d - 1}")
                    d = len(layer.windows)
            else:
                raise ShapeError(f"layer {i}: unsupported layer {type(layer).__name__}")
            dims.append(d)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_dim", dims[0])
        object.__setattr__(self, "dims", tuple(dims))
        for name in ("mean", "std"):
            val = getattr(self, name)
            if val is not None:
                val = np.broadcast_to(np.asarray(val, dtype=np.float64), (dims[0],)).copy()
                object.__setattr__(self, name, val)
        if self.std is not None and np.any(self.std == 0):
            raise ShapeError("normalization std must be nonzero")

    @property
    def output_dim(self):
        return self.dims[-1]

    def normalize(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.mean is not None:
            x = x - self.mean
        if self.std is not None:
            x = x / self.std
        return x


def dense_network(weights, biases, activation="relu"):
    """Fully connected network with the same activation after every hidden layer."""
    layers = []
    for i, (w, b) in enumerate(zip(weights, biases)):
        layers.append(Affine(w, b))
        if i < len(weights) - 1:
            layers.append(Activation(activation))
    return Network(tuple(layers))


def random_network(rng, sizes, activation="relu", scale=1.0):
    """Dense network with Gaussian weights scaled by ``1/sqrt(fan_in)``."""
    ws, bs = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        ws.append(rng.normal(size=(n_out, n_in)) * scale / np.sqrt(n_in))
        bs.append(rng.normal(size=n_out) * 0.1 * scale)
    return dense_network(ws, bs, activation)


def _act(kind, x, windows=None):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        e = np.exp(-np.abs(x))
        return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    if kind == "tanh":
        return np.tanh(x)
    return np.stack([x[..., list(w)].max(axis=-1) for w in windows], axis=-1)


def layer_outputs(net, x):
    """Outputs of every layer (the input first) for one point or a batch."""
    x = np.asarray(x, dtype=np.float64)
    outs = [x]
    for layer in net.layers:
        if isinstance(layer, Affine):
            x = x @ layer.weights.T + layer.bias
        else:
            x = _act(layer.kind, x, layer.windows)
        outs.append(x)
    return outs


def evaluate(net, x):
    """Forward pass; ``x`` is one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise ShapeError(f"input has {x.shape[-1]} features, network expects {net.input_dim}")
    return layer_outputs(net, x)[-1]


# --------------------------------------------------------------------------
# file format


def _floats(values):
    return [float(v) for v in np.asarray(values, dtype=np.float64).reshape(-1)]


def network_to_dict(net):
    layers = []
    for layer in net.layers:
        if isinstance(layer, Affine):
            layers.append({
                "type": "affine",
                "shape": list(layer.weights.shape),
                "weights": _floats(layer.weights),
                "bias": _floats(layer.bias),
            })
        elif layer.kind == "maxpool":
            layers.append({"type": "maxpool", "windows": [list(w) for w in layer.windows]})
        else:
            layers.append({"type": layer.kind})
    doc = {"format": FORMAT, "version": VERSION, "input_dim": net.input_dim, "layers": layers}
    if net.mean is not None or net.std is not None:
        doc["normalization"] = {
            "mean": _floats(net.mean if net.mean is not None else np.zeros(net.input_dim)),
            "std": _floats(net.std if net.std is not None else np.ones(net.input_dim)),
        }
    return doc


def save_network(path, net):
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh, indent=1)
        fh.write("\n")


def network_from_dict(doc, source=None):
    def fail(msg, exc=ParseError):
        if exc is ParseError:
            raise ParseError(msg, None, source)
        raise ShapeError(f"{source}: {msg}" if source else msg)

    if not isinstance(doc, dict):
        fail("top level must be an object")
    if doc.get("format") != FORMAT:
        fail(f"format field must be {FORMAT!r}")
    if doc.get("version") != VERSION:
        fail(f"unsupported version {doc.get('version')!r}")
    raw = doc.get("layers")
    if not isinstance(raw, list) or not raw:
        fail("layers must be a nonempty list")
    layers = []
    for i, rec in enumerate(raw):
        if not isinstance(rec, dict) or "type" not in rec:
            fail(f"layers[{i}]: missing type")
        kind = rec["type"]
        try:
            if kind == "affine":
                shape = rec.get("shape")
                if not (isinstance(shape, list) and len(shape) == 2):
                    fail(f"layers[{i}].shape must be [rows, cols]")
                w = np.asarray(rec["weights"], dtype=np.float64)
                if w.size != shape[0] * shape[1]:
                    fail(f"layers[{i}].weights has {w.size} values, shape {shape} needs {shape[0] * shape[1]}", ShapeError)
                b = np.asarray(rec["bias"], dtype=np.float64)
                if b.size != shape[0]:
                    fail(f"layers[{i}].bias has {b.size} values, expected {shape[0]}", ShapeError)
                layers.append(Affine(w.reshape(shape), b))
            elif kind in ACTIVATIONS:
                layers.append(Activation(kind, rec.get("windows")))
            else:
                fail(f"layers[{i}]: unknown layer type {kind!r}")
        except KeyError as exc:
            fail(f"layers[{i}]: missing field {exc}")
        except (TypeError, ValueError) as exc:
            fail(f"layers[{i}]: {exc}")
        except ShapeError as exc:
            if source and str(exc).startswith(str(source)):
                raise
            fail(f"layers[{i}]: {exc}", ShapeError)
    norm = doc.get("normalization") or {}
    try:
        return Network(tuple(layers), doc.get("input_dim"), norm.get("mean"), norm.get("std"))
    except ShapeError as exc:
        fail(str(exc), ShapeError)


def load_network(path):
    """Read and validate a network file.

    Raises
    ------
    ParseError
        Malformed JSON or missing fields (with line numbers for JSON errors).
    ShapeError
        Inconsistent layer dimensions.
    """
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, str(path)) from None
    return network_from_dict(doc, str(path))


# --------------------------------------------------------------------------
# datasets and properties


@dataclass(frozen=True, eq=False)
class Sample:
    x: np.ndarray
    label: int = None
    target: float = None


@dataclass(frozen=True)
class Property:
    """Robustness under ``l_inf`` perturbations of radius ``epsilon``.

    ``kind`` is ``"classification"`` or ``"output-range"``. ``clip`` is an
    optional ``(lo, hi)`` box that the perturbed input must stay in.
    """

    epsilon: float
    kind: str = "classification"
    clip: tuple = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.kind not in ("classification", "output-range"):
            raise ValueError(f"unknown property kind {self.kind!r}")

    def input_box(self, x):
        x = np.asarray(x, dtype=np.float64)
        lo, hi = x - self.epsilon, x + self.epsilon
        if self.clip is not None:
            lo = np.maximum(lo, self.clip[0])
            hi = np.minimum(hi, self.clip[1])
        return lo, hi


def load_dataset(path, net=None, regression=False, normalize=True):
    """Samples from a CSV file whose first column is the label (or target).

    With a network, the feature count is checked against its input size and
    the network's normalization constants are applied.
    """
    samples = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(f"bad number ({exc})", lineno, str(path)) from None
            if len(vals) < 2:
                raise ParseError("need a label and at least one feature", lineno, str(path))
            x = np.array(vals[1:])
            if net is not None and len(x) != net.input_dim:
                raise ParseError(f"expected {net.input_dim} features, got {len(x)}", lineno, str(path))
            if samples and len(x) != len(samples[0].x):
                raise ParseError(f"expected {len(samples[0].x)} features, got {len(x)}", lineno, str(path))
            if net is not None and normalize:
                x = net.normalize(x)
            if regression:
                samples.append(Sample(x, target=vals[0]))
            else:
                if vals[0] != int(vals[0]):
                    raise ParseError(f"class label must be an integer, got {row[0]!r}", lineno, str(path))
                samples.append(Sample(x, label=int(vals[0])))
    return samples
