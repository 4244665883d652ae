"""
Canonical JSON persistence for task streams: sorted keys, floats with 17
significant digits, so identical streams produce identical bytes.
"""
import json
import math
import os

import numpy as np
from atomicwrites import atomic_write

from . import graph
from .errors import (
    GraphError,
    InconsistentStream,
    InvariantError,
    IoError,
    ParseError,
    SchemaError,
)


def _emit(value, out):
    if isinstance(value, dict):
        out.append("{")
        for n, key in enumerate(sorted(value)):
            if n:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _emit(value[key], out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for n, item in enumerate(value):
            if n:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(value, np.ndarray):
        _emit(value.tolist(), out)
    elif isinstance(value, (bool, np.bool_)):
        out.append("true" if value else "false")
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise SchemaError("cannot serialize non-finite float {}".format(value))
        text = "%.17g" % value
        if not any(ch in text for ch in ".en"):
            text += ".0"
        out.append(text)
    elif value is None:
        out.append("null")
    else:
        out.append(json.dumps(value))


def canonical_dumps(value):
    out = []
    _emit(value, out)
    out.append("\n")
    return "".join(out)


def write_canonical(path, value):
    text = canonical_dumps(value)
    try:
        with atomic_write(os.fspath(path), overwrite=True) as f:
            f.write(text)
    except OSError as e:
        raise IoError("cannot write {}: {}".format(path, e)) from e


def snapshot_to_dict(snapshot):
    return {
        "vertex_ids": snapshot.vertex_ids,
        "edges": snapshot.edges,
        "vertex_features": snapshot.vertex_features,
        "edge_features": snapshot.edge_features,
        "labels": snapshot.labels,
        "mask": snapshot.mask,
    }


def task_to_dict(task):
    return {
        "task_id": task.task_id,
        "classes": sorted(task.classes),
        "graphs": [snapshot_to_dict(g) for g in task.graphs],
        "split": dict((part, list(items)) for part, items in task.split.items()),
    }


def stream_to_dict(stream):
    return {
        "universe": stream.universe.as_dict(),
        "objective": stream.objective.value,
        "num_classes_total": stream.num_classes_total,
        "directed": True,
        "tasks": [task_to_dict(t) for t in stream.tasks],
    }


def save_stream(stream, path):
    try:
        graph.check_stream(stream)
    except GraphError as e:
        raise InvariantError("refusing to save invalid stream: {}".format(e)) from e

    write_canonical(path, stream_to_dict(stream))


def _field(obj, key, where):
    if not isinstance(obj, dict):
        raise SchemaError("{}: expected an object".format(where))
    if key not in obj:
        raise SchemaError("{}: missing field '{}'".format(where, key))
    return obj[key]


def _symmetrize(edges, edge_features):
    present = set(map(tuple, edges))
    extra_edges, extra_feats = [], []

    for (src, dst), feat in zip(edges, edge_features):
        if (dst, src) not in present:
            present.add((dst, src))
            extra_edges.append([dst, src])
            extra_feats.append(feat)

    edges = list(edges) + extra_edges
    edge_features = list(edge_features) + extra_feats
    order = sorted(range(len(edges)), key=lambda i: tuple(edges[i]))

    return [edges[i] for i in order], [edge_features[i] for i in order]


def _snapshot_from_dict(d, universe, directed, where):
    try:
        edges = [list(e) for e in _field(d, "edges", where)]
        edge_features = _field(d, "edge_features", where)
        if not directed:
            edges, edge_features = _symmetrize(edges, edge_features)

        return graph.GraphSnapshot(
            _field(d, "vertex_ids", where),
            edges,
            _field(d, "vertex_features", where),
            edge_features,
            _field(d, "labels", where),
            _field(d, "mask", where),
            edge_width=universe.edge_width,
        )
    except (TypeError, ValueError) as e:
        raise SchemaError("{}: malformed graph: {}".format(where, e)) from e


def stream_from_dict(doc):
    universe_doc = _field(doc, "universe", "document")
    try:
        universe = graph.VertexUniverse(
            _field(universe_doc, "size", "universe"),
            _field(universe_doc, "feature_dim", "universe"),
            _field(universe_doc, "edge_feature_dim", "universe"),
        )
    except (TypeError, ValueError) as e:
        raise SchemaError("universe: {}".format(e)) from e

    try:
        objective = graph.Objective(_field(doc, "objective", "document"))
    except ValueError as e:
        raise SchemaError("objective: {}".format(e)) from e

    directed = doc.get("directed", True)
    tasks = []

    for n, task_doc in enumerate(_field(doc, "tasks", "document")):
        where = "tasks[{}]".format(n)
        split_doc = _field(task_doc, "split", where)
        for part in ("train", "test"):
            _field(split_doc, part, where + ".split")

        graphs = [
            _snapshot_from_dict(g, universe, directed, "{}.graphs[{}]".format(where, i))
            for i, g in enumerate(_field(task_doc, "graphs", where))
        ]
        split = dict(
            (part, [tuple(i) if isinstance(i, list) else i for i in items])
            for part, items in split_doc.items()
        )
        try:
            tasks.append(graph.Task(
                _field(task_doc, "task_id", where),
                objective,
                _field(task_doc, "classes", where),
                graphs,
                split,
            ))
        except (TypeError, ValueError) as e:
            raise SchemaError("{}: {}".format(where, e)) from e

    stream = graph.TaskStream(universe, tasks, _field(doc, "num_classes_total", "document"))

    try:
        graph.check_task_order(stream)
    except InconsistentStream as e:
        raise SchemaError(str(e)) from e

    try:
        graph.check_stream(stream)
    except GraphError as e:
        raise InvariantError(str(e)) from e

    return stream


def loads_stream(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno, column=e.colno) from e

    return stream_from_dict(doc)


def load_stream(path):
    try:
        with open(os.fspath(path), encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise IoError("cannot read {}: {}".format(path, e)) from e

    return loads_stream(text)
