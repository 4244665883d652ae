"""
Single-head graph attention network over GraphSnapshots, with its flat
parameter vector and checkpoint format.
"""
import collections
import json
import logging
import os

import numpy as np

from . import tensor as T
from .errors import InvalidConfig, IoError, LayoutMismatch, ShapeMismatch
from .streamfile import write_canonical

log = logging.getLogger(__name__)

PARAM_NAMES = 'W', 'a_src', 'a_dst', 'a_edge', 'b'


class ModelConfig:
    FIELDS = dict(
        nlays=2,
        hc=16,
        drop=0.0,
        leaky_slope=0.2,
        in_dim=1,
        out_dim=2,
        edge_dim=1,
    )

    def __init__(self, **kw):
        unknown = set(kw) - set(self.FIELDS)
        if unknown:
            raise InvalidConfig(sorted(unknown)[0], "unknown model parameter")

        for name, default in self.FIELDS.items():
            setattr(self, name, kw.get(name, default))

        for name in ('nlays', 'hc', 'in_dim', 'out_dim', 'edge_dim'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidConfig(name, "must be a positive integer")
            setattr(self, name, int(value))
        if not 0.0 <= self.drop < 1.0:
            raise InvalidConfig('drop', "dropout rate {} outside [0, 1)".format(self.drop))
        if self.leaky_slope < 0:
            raise InvalidConfig('leaky_slope', "must be nonnegative")

    @classmethod
    def for_stream(cls, stream, **kw):
        return cls(
            in_dim=stream.universe.feature_dim,
            out_dim=stream.num_classes_total,
            edge_dim=stream.universe.edge_width,
            **kw
        )

    def layer_dims(self):
        dims = [self.in_dim] + [self.hc] * (self.nlays - 1) + [self.out_dim]
        return list(zip(dims[:-1], dims[1:]))

    def replace(self, **changes):
        kw = self.as_dict()
        kw.update(changes)
        return ModelConfig(**kw)

    def as_dict(self):
        return dict((name, getattr(self, name)) for name in self.FIELDS)

    def __eq__(self, other):
        return isinstance(other, ModelConfig) and self.as_dict() == other.as_dict()


Segment = collections.namedtuple("Segment", "layer name shape offset")


def _segment_size(seg):
    return int(np.prod(seg.shape))


def param_layout(config):
    layout = []
    offset = 0

    for layer, (d_in, d_out) in enumerate(config.layer_dims()):
        shapes = dict(
            W=(d_in, d_out),
            a_src=(d_out, 1),
            a_dst=(d_out, 1),
            a_edge=(config.edge_dim, 1),
            b=(d_out,),
        )
        for name in PARAM_NAMES:
            seg = Segment(layer, name, shapes[name], offset)
            layout.append(seg)
            offset += _segment_size(seg)

    return tuple(layout)


class ParamVector:
    """Flat vector of all trainable parameters plus its segment layout."""

    def __init__(self, values, layout):
        self.values = np.array(values, dtype=np.float64).reshape(-1)
        self.layout = tuple(layout)

        expected = sum(_segment_size(seg) for seg in self.layout)
        if len(self.values) != expected:
            raise LayoutMismatch("vector of {} values for a layout of {}".format(len(self.values), expected))

    @property
    def size(self):
        return len(self.values)

    def with_values(self, values):
        return ParamVector(values, self.layout)

    def __eq__(self, other):
        return (
            isinstance(other, ParamVector)
            and self.layout == other.layout
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return "ParamVector(size={}, segments={})".format(self.size, len(self.layout))


def init_params(config, seed):
    rng = np.random.default_rng(seed)
    layout = param_layout(config)
    values = np.zeros(sum(_segment_size(seg) for seg in layout))

    for seg in layout:
        if seg.name == 'b':
            continue
        fan_in, fan_out = seg.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        values[seg.offset:seg.offset + _segment_size(seg)] = rng.uniform(-bound, bound, _segment_size(seg))

    return ParamVector(values, layout)


def unflatten(params):
    layers = collections.defaultdict(dict)

    for seg in params.layout:
        size = _segment_size(seg)
        layers[seg.layer][seg.name] = params.values[seg.offset:seg.offset + size].reshape(seg.shape).copy()

    return [layers[i] for i in sorted(layers)]


def flatten(layers, config):
    layout = param_layout(config)
    if len(layers) != config.nlays:
        raise LayoutMismatch("{} layers given, model has {}".format(len(layers), config.nlays))

    values = np.zeros(sum(_segment_size(seg) for seg in layout))
    for seg in layout:
        if seg.name not in layers[seg.layer]:
            raise LayoutMismatch("layer {} lacks '{}'".format(seg.layer, seg.name))
        part = np.asarray(layers[seg.layer][seg.name], dtype=np.float64)
        if part.shape != seg.shape:
            raise LayoutMismatch("layer {} '{}' has shape {}, expected {}".format(
                seg.layer, seg.name, part.shape, seg.shape))
        values[seg.offset:seg.offset + _segment_size(seg)] = part.reshape(-1)

    return ParamVector(values, layout)


class GraphStructure:
    """Edge lists of a snapshot plus implicit self-loops for vertices with no in-edges."""

    def __init__(self, snapshot):
        self.num_vertices = snapshot.num_vertices
        self.graph_level = snapshot.graph_level

        src = snapshot.edges[:, 0]
        dst = snapshot.edges[:, 1]
        has_in = np.zeros(self.num_vertices, dtype=bool)
        has_in[dst] = True
        self.isolated = np.flatnonzero(~has_in)

        self.src = np.concatenate([src, self.isolated])
        self.dst = np.concatenate([dst, self.isolated])


def _segment_max(values, segments, num_segments):
    out = np.full(num_segments, -np.inf)
    np.maximum.at(out, segments, values)
    return out


def _attention_layer(w, seg, h, phi, structure, slope):
    """One attention layer; `seg` maps parameter name to its Segment."""
    def param(name):
        s = seg[name]
        return T.segment(w, s.offset, s.offset + _segment_size(s), s.shape)

    n = structure.num_vertices
    src, dst = structure.src, structure.dst

    wh = T.matmul(h, param('W'))
    score = T.add(
        T.add(T.gather_rows(T.matmul(wh, param('a_src')), src), T.gather_rows(T.matmul(wh, param('a_dst')), dst)),
        T.matmul(phi, param('a_edge')),
    )
    score = T.leaky_relu(score, slope)

    # softmax over each destination's in-edges
    shift = T.constant(_segment_max(score.data[:, 0], dst, n)[dst].reshape(-1, 1))
    weight = T.exp(T.sub(score, shift))
    alpha = T.div(weight, T.gather_rows(T.segment_sum(weight, dst, n), dst))

    d_out = seg['W'].shape[1]
    messages = T.mul(T.gather_rows(wh, src), T.matmul(alpha, T.constant(np.ones((1, d_out)))))

    return T.add(T.segment_sum(messages, dst, n), param('b'))


def apply(w, config, x, phi, structure, dropout_seed=None):
    """
    Logits as a Tensor: one row per vertex for node tasks, a single pooled
    row for graph tasks. `w` is the flat parameter Tensor, `x` and `phi` the
    vertex and edge feature Tensors; any of them may live on a tape.
    """
    if x.shape != (structure.num_vertices, config.in_dim):
        raise ShapeMismatch("vertex features {} do not fit ({}, {})".format(
            x.shape, structure.num_vertices, config.in_dim), where="forward")
    if phi.shape[1:] != (config.edge_dim,) or phi.shape[0] + len(structure.isolated) != len(structure.src):
        raise ShapeMismatch("edge features {} do not fit the graph".format(phi.shape), where="forward")

    layout = param_layout(config)
    if w.shape != (sum(_segment_size(s) for s in layout),):
        raise ShapeMismatch("parameter vector {} does not fit the model".format(w.shape), where="forward")

    if len(structure.isolated):
        phi = T.concat([phi, T.constant(np.ones((len(structure.isolated), config.edge_dim)))], axis=0)

    if dropout_seed is not None:
        dropout_seed = list(dropout_seed) if isinstance(dropout_seed, (list, tuple)) else [dropout_seed]

    h = x
    for layer in range(config.nlays):
        if dropout_seed is not None and config.drop > 0:
            h = T.dropout(h, config.drop, dropout_seed + [layer])

        seg = dict((s.name, s) for s in layout if s.layer == layer)
        h = _attention_layer(w, seg, h, phi, structure, config.leaky_slope)

        if layer < config.nlays - 1:
            h = T.leaky_relu(h, config.leaky_slope)

    if structure.graph_level:
        h = T.mean(h, axis=0)

    return h


def forward(params, config, snapshot, dropout_seed=None):
    return apply(
        T.constant(params.values),
        config,
        T.constant(snapshot.vertex_features),
        T.constant(snapshot.edge_features),
        GraphStructure(snapshot),
        dropout_seed,
    )


def batch_loss(w, config, entries, dropout_seed=None):
    """
    Mean cross-entropy over all selected items of `entries`, a list of
    (snapshot, x, phi, mask) with x and phi the feature Tensors to use.
    The mask is a per-vertex boolean array for node tasks and ignored for
    graph tasks.
    """
    rows, labels, masks = [], [], []

    for n, (snapshot, x, phi, mask) in enumerate(entries):
        seed = None if dropout_seed is None else [dropout_seed, n]
        rows.append(apply(w, config, x, phi, GraphStructure(snapshot), seed))
        if snapshot.graph_level:
            labels.append([snapshot.labels])
            masks.append([True])
        else:
            labels.append(snapshot.labels)
            masks.append(snapshot.mask if mask is None else mask)

    logits = rows[0] if len(rows) == 1 else T.concat(rows, axis=0)

    return T.cross_entropy(logits, np.concatenate(labels), np.concatenate(masks))


def loss(params, config, batch, dropout_seed=None):
    """Mean masked cross-entropy of a list of (snapshot, mask) pairs."""
    return batch_loss(
        T.constant(params.values),
        config,
        [(g, T.constant(g.vertex_features), T.constant(g.edge_features), mask) for g, mask in batch],
        dropout_seed,
    )


def predict(params, config, snapshot, classes=None):
    """Argmax class per vertex (or per graph), optionally restricted to `classes`."""
    logits = forward(params, config, snapshot).data
    if classes is None:
        return np.argmax(logits, axis=1)

    allowed = np.array(sorted(classes), dtype=np.int64)
    return allowed[np.argmax(logits[:, allowed], axis=1)]


def params_to_dict(params, config):
    return {
        "model": config.as_dict(),
        "layout": [[seg.layer, seg.name, list(seg.shape), seg.offset] for seg in params.layout],
        "values": params.values,
    }


def save_params(params, config, path):
    if params.layout != param_layout(config):
        raise LayoutMismatch("parameter layout does not belong to this model")

    write_canonical(path, params_to_dict(params, config))


def load_params(path):
    try:
        with open(os.fspath(path), encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise IoError("cannot read {}: {}".format(path, e)) from e
    except json.JSONDecodeError as e:
        raise LayoutMismatch("{}: not a parameter checkpoint: {}".format(path, e)) from e

    config = ModelConfig(**doc["model"])
    layout = tuple(Segment(layer, name, tuple(shape), offset) for layer, name, shape, offset in doc["layout"])
    if layout != param_layout(config):
        raise LayoutMismatch("{}: stored layout does not match the stored model".format(path))

    return ParamVector(doc["values"], layout), config
