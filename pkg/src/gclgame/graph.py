"""
Dynamic graph data model: a fixed vertex universe, graph snapshots over
subsets of it, tasks and task streams, plus a seeded stochastic-block-model
generator with feature drift and vertex-set drift.
"""
import collections
import enum
import logging

import numpy as np

from .errors import (
    DanglingEdge,
    DuplicateEdge,
    InconsistentStream,
    InconsistentTask,
    InvalidConfig,
    NonFiniteValue,
    ShapeMismatch,
    VertexOutOfUniverse,
)

log = logging.getLogger(__name__)


class Objective(enum.Enum):
    NODE = "NodeClassification"
    GRAPH = "GraphClassification"


def _frozen(a):
    a.flags.writeable = False
    return a


class VertexUniverse:
    def __init__(self, size, feature_dim, edge_feature_dim=0):
        if int(size) < 1:
            raise InvalidConfig("size", "universe must hold at least one vertex")
        if int(feature_dim) < 1:
            raise InvalidConfig("feature_dim", "must be positive")
        if int(edge_feature_dim) < 0:
            raise InvalidConfig("edge_feature_dim", "must be nonnegative")

        self.size = int(size)
        self.feature_dim = int(feature_dim)
        self.edge_feature_dim = int(edge_feature_dim)

    @property
    def edge_width(self):
        """Columns of an edge feature matrix; scalar-absent features are a 1.0 column."""
        return max(1, self.edge_feature_dim)

    def as_dict(self):
        return dict(size=self.size, feature_dim=self.feature_dim, edge_feature_dim=self.edge_feature_dim)

    def __eq__(self, other):
        return isinstance(other, VertexUniverse) and self.as_dict() == other.as_dict()

    def __repr__(self):
        return "VertexUniverse({size}, {feature_dim}, {edge_feature_dim})".format(**self.as_dict())


class GraphSnapshot:
    """
    One graph over the positions 0..|V|-1 of `vertex_ids`. `labels` is a
    per-vertex integer array for node tasks and a single int for graph tasks.
    Arrays are read-only after construction.
    """

    def __init__(self, vertex_ids, edges, vertex_features, edge_features, labels, mask=None, *, edge_width=1):
        self.vertex_ids = _frozen(np.array(vertex_ids, dtype=np.int64).reshape(-1))
        nv = len(self.vertex_ids)

        edges = np.array(edges, dtype=np.int64)
        self.edges = _frozen(edges.reshape(-1, 2) if edges.size else np.zeros((0, 2), dtype=np.int64))

        self.vertex_features = _frozen(np.array(vertex_features, dtype=np.float64))

        edge_features = np.array(edge_features, dtype=np.float64)
        if edge_features.size == 0:
            edge_features = edge_features.reshape(0, edge_width)
        self.edge_features = _frozen(edge_features)

        if np.ndim(labels) == 0:
            self.labels = int(labels)
        else:
            self.labels = _frozen(np.array(labels, dtype=np.int64).reshape(-1))

        if mask is None:
            mask = np.ones(nv, dtype=bool)
        self.mask = _frozen(np.array(mask, dtype=bool).reshape(-1))

    @property
    def num_vertices(self):
        return len(self.vertex_ids)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def graph_level(self):
        return isinstance(self.labels, int)

    def label_set(self):
        if self.graph_level:
            return {self.labels}
        return set(int(i) for i in self.labels)

    def __eq__(self, other):
        if not isinstance(other, GraphSnapshot) or self.graph_level != other.graph_level:
            return False

        return (
            np.array_equal(self.vertex_ids, other.vertex_ids)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.vertex_features, other.vertex_features)
            and np.array_equal(self.edge_features, other.edge_features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.mask, other.mask)
        )

    def __repr__(self):
        return "GraphSnapshot(|V|={}, |E|={})".format(self.num_vertices, self.num_edges)


ValidationResult = collections.namedtuple("ValidationResult", "ok error")


def _check_snapshot(snapshot, universe):
    nv = snapshot.num_vertices
    ids = snapshot.vertex_ids

    for pos, vid in enumerate(ids):
        if vid < 0 or vid >= universe.size:
            raise VertexOutOfUniverse(
                "vertex id {} outside universe of size {}".format(vid, universe.size),
                where="vertex_ids[{}]".format(pos)
            )
    if nv > 1:
        bad = np.flatnonzero(np.diff(ids) <= 0)
        if bad.size:
            raise ShapeMismatch("vertex ids must be strictly increasing", where="vertex_ids[{}]".format(bad[0] + 1))

    seen = set()
    for e, (src, dst) in enumerate(snapshot.edges):
        for end in (src, dst):
            if end < 0 or end >= nv:
                raise DanglingEdge(
                    "endpoint {} is not a position among {} vertices".format(end, nv),
                    where="edges[{}]".format(e)
                )
        if (src, dst) in seen:
            raise DuplicateEdge("duplicate edge ({}, {})".format(src, dst), where="edges[{}]".format(e))
        seen.add((src, dst))

    x = snapshot.vertex_features
    if x.shape != (nv, universe.feature_dim):
        raise ShapeMismatch(
            "expected shape {} got {}".format((nv, universe.feature_dim), x.shape),
            where="vertex_features"
        )

    phi = snapshot.edge_features
    if phi.shape != (snapshot.num_edges, universe.edge_width):
        raise ShapeMismatch(
            "expected shape {} got {}".format((snapshot.num_edges, universe.edge_width), phi.shape),
            where="edge_features"
        )

    for name, values in (("vertex_features", x), ("edge_features", phi)):
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            raise NonFiniteValue("non-finite value", where="{}[{}, {}]".format(name, *bad[0]))

    if snapshot.mask.shape != (nv,):
        raise ShapeMismatch("expected {} flags got {}".format(nv, snapshot.mask.shape), where="mask")

    if snapshot.graph_level:
        if snapshot.labels < 0:
            raise ShapeMismatch("class index must be nonnegative", where="labels")
    else:
        if snapshot.labels.shape != (nv,):
            raise ShapeMismatch("expected {} labels got {}".format(nv, snapshot.labels.shape), where="labels")
        bad = np.flatnonzero(snapshot.labels < 0)
        if bad.size:
            raise ShapeMismatch("class index must be nonnegative", where="labels[{}]".format(bad[0]))


def validate_snapshot(snapshot, universe):
    """Return ValidationResult(True, None), or (False, error) for the first violated invariant."""
    try:
        _check_snapshot(snapshot, universe)
    except (VertexOutOfUniverse, DanglingEdge, ShapeMismatch, NonFiniteValue, DuplicateEdge) as e:
        return ValidationResult(False, e)

    return ValidationResult(True, None)


def ensure_valid_snapshot(snapshot, universe, where=None):
    result = validate_snapshot(snapshot, universe)
    if not result.ok:
        if where:
            result.error.args = ("{}: {}".format(where, result.error.args[0]),)
        raise result.error


class Task:
    """
    `split` maps part names ('train', 'test' and optionally 'val') to items:
    (graph_index, position) pairs for node tasks, graph indices for graph tasks.
    """

    PARTS = ('train', 'test', 'val')

    def __init__(self, task_id, objective, classes, graphs, split):
        self.task_id = int(task_id)
        self.objective = Objective(objective)
        self.classes = frozenset(int(c) for c in classes)
        self.graphs = tuple(graphs)

        def normalize(item):
            if self.objective is Objective.NODE:
                g, pos = item
                return int(g), int(pos)
            return int(item)

        self.split = dict(
            (part, tuple(normalize(i) for i in items))
            for part, items in split.items()
        )

    def items(self, part):
        """(graph_index, position-or-None) pairs of one split part."""
        if self.objective is Objective.NODE:
            return list(self.split.get(part, ()))
        return [(g, None) for g in self.split.get(part, ())]

    def labeled_items(self):
        if self.objective is Objective.NODE:
            return set(
                (g, int(p))
                for g, graph in enumerate(self.graphs)
                for p in np.flatnonzero(graph.mask)
            )
        return set(range(len(self.graphs)))

    def label_of(self, graph_index, position=None):
        graph = self.graphs[graph_index]
        if position is None:
            return graph.labels
        return int(graph.labels[position])

    def __eq__(self, other):
        return (
            isinstance(other, Task)
            and self.task_id == other.task_id
            and self.objective is other.objective
            and self.classes == other.classes
            and self.graphs == other.graphs
            and self.split == other.split
        )

    def __repr__(self):
        return "Task({}, {}, classes={}, graphs={})".format(
            self.task_id, self.objective.name, sorted(self.classes), len(self.graphs)
        )


def check_task(task, universe):
    where = "task {}".format(task.task_id)

    if not task.graphs:
        raise InconsistentTask("task has no graphs", where=where)

    for g, graph in enumerate(task.graphs):
        ensure_valid_snapshot(graph, universe, where="{} graph {}".format(where, g))

        if graph.graph_level != (task.objective is Objective.GRAPH):
            raise InconsistentTask("graph {} labels do not match objective {}".format(g, task.objective.value),
                                   where=where)

        stray = graph.label_set() - task.classes
        if stray:
            raise InconsistentTask("graph {} has labels {} outside classes {}".format(
                g, sorted(stray), sorted(task.classes)), where=where)

    labeled = task.labeled_items()
    covered = set()
    for part, items in task.split.items():
        if part not in Task.PARTS:
            raise InconsistentTask("unknown split part '{}'".format(part), where=where)
        for item in items:
            if item not in labeled:
                raise InconsistentTask("{} item {} is not a labeled item".format(part, item), where=where)
            if item in covered:
                raise InconsistentTask("{} item {} appears in more than one part".format(part, item), where=where)
            covered.add(item)

    if covered != labeled:
        raise InconsistentTask("split leaves {} labeled items uncovered".format(len(labeled - covered)),
                               where=where)


class TaskStream:
    def __init__(self, universe, tasks, num_classes_total):
        self.universe = universe
        self.tasks = tuple(tasks)
        self.num_classes_total = int(num_classes_total)

    @property
    def objective(self):
        return self.tasks[0].objective if self.tasks else Objective.NODE

    def __len__(self):
        return len(self.tasks)

    def __eq__(self, other):
        return (
            isinstance(other, TaskStream)
            and self.universe == other.universe
            and self.tasks == other.tasks
            and self.num_classes_total == other.num_classes_total
        )

    def __repr__(self):
        return "TaskStream({!r}, tasks={}, classes={})".format(self.universe, len(self.tasks), self.num_classes_total)


def check_task_order(stream):
    for expected, task in enumerate(stream.tasks):
        if task.task_id != expected:
            raise InconsistentStream("task ids must run 0, 1, 2, ...; found {} at position {}".format(
                task.task_id, expected))


def check_stream(stream):
    if not stream.tasks:
        raise InconsistentStream("stream has no tasks")
    if stream.num_classes_total < 1:
        raise InconsistentStream("num_classes_total must be positive")

    check_task_order(stream)

    for task in stream.tasks:
        if task.objective is not stream.objective:
            raise InconsistentStream("task {} objective {} differs from stream objective {}".format(
                task.task_id, task.objective.value, stream.objective.value))
        if task.classes and max(task.classes) >= stream.num_classes_total:
            raise InconsistentStream("task {} uses class {} beyond num_classes_total {}".format(
                task.task_id, max(task.classes), stream.num_classes_total))

        check_task(task, stream.universe)


class SynthConfig:
    FIELDS = dict(
        num_tasks=3,
        classes_per_task=2,
        universe_size=200,
        vertices_per_task=60,
        feature_dim=8,
        edge_feature_dim=0,
        class_means=None,
        mean_scale=1.0,
        feature_noise=1.0,
        p_in=0.1,
        p_out=0.02,
        drift=0.0,
        resample_fraction=0.0,
        edge_noise=0.0,
        objective=Objective.NODE,
        graphs_per_task=30,
        graph_size=12,
        labeled_fraction=1.0,
    )

    def __init__(self, **kw):
        unknown = set(kw) - set(self.FIELDS)
        if unknown:
            raise InvalidConfig(sorted(unknown)[0], "unknown synthesis parameter")

        for name, default in self.FIELDS.items():
            setattr(self, name, kw.get(name, default))

        self.objective = Objective(self.objective)
        self._validate()

    def _validate(self):
        for name in ('num_tasks', 'classes_per_task', 'universe_size', 'vertices_per_task', 'feature_dim'):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(name, "must be positive")
        if self.edge_feature_dim < 0:
            raise InvalidConfig('edge_feature_dim', "must be nonnegative")
        for name in ('p_in', 'p_out', 'resample_fraction', 'labeled_fraction'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(name, "probability {} outside [0, 1]".format(value))
        for name in ('mean_scale', 'feature_noise', 'drift', 'edge_noise'):
            if getattr(self, name) < 0:
                raise InvalidConfig(name, "must be nonnegative")
        if self.vertices_per_task < 2 * self.classes_per_task:
            raise InvalidConfig('vertices_per_task', "need at least two vertices per class")
        if self.vertices_per_task > self.universe_size:
            raise InvalidConfig('vertices_per_task', "exceeds universe_size")

        fresh = self.vertices_per_task - int(round((1.0 - self.resample_fraction) * self.vertices_per_task))
        if self.vertices_per_task + fresh > self.universe_size:
            raise InvalidConfig('universe_size', "too small to resample {} fresh vertices per task".format(fresh))

        if self.objective is Objective.GRAPH:
            if self.graphs_per_task < 5:
                raise InvalidConfig('graphs_per_task', "need at least five graphs for a 60-20-20 split")
            if not 1 <= self.graph_size <= self.vertices_per_task:
                raise InvalidConfig('graph_size', "must lie in [1, vertices_per_task]")

        if self.class_means is not None:
            means = np.asarray(self.class_means, dtype=np.float64)
            if means.shape != (self.classes_per_task, self.feature_dim):
                raise InvalidConfig('class_means', "expected shape {}".format(
                    (self.classes_per_task, self.feature_dim)))
            if not np.isfinite(means).all():
                raise InvalidConfig('class_means', "must be finite")

    @property
    def num_classes_total(self):
        return self.num_tasks * self.classes_per_task

    def replace(self, **changes):
        kw = self.as_dict()
        kw.update(changes)
        return SynthConfig(**kw)

    def as_dict(self):
        return dict((name, getattr(self, name)) for name in self.FIELDS)


def _unit(v):
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def _drift_vertex_set(rng, universe_size, previous, count, resample_fraction):
    if previous is None:
        return np.sort(rng.choice(universe_size, size=count, replace=False))

    keep = int(round((1.0 - resample_fraction) * count))
    kept = rng.choice(previous, size=keep, replace=False)
    outside = np.setdiff1d(np.arange(universe_size), previous)
    fresh = rng.choice(outside, size=count - keep, replace=False)

    return np.sort(np.concatenate([kept, fresh]))


def _sbm_edges(rng, slots, p_in, p_out, edge_feature_dim, edge_noise):
    n = len(slots)
    iu, ju = np.triu_indices(n, k=1)
    same = slots[iu] == slots[ju]
    draw = rng.random(len(iu)) < np.where(same, p_in, p_out)
    iu, ju, same = iu[draw], ju[draw], same[draw]

    if edge_feature_dim == 0:
        feats = np.ones((len(iu), 1))
    else:
        feats = edge_noise * rng.standard_normal((len(iu), edge_feature_dim))
        feats[:, 0] += same

    src = np.concatenate([iu, ju])
    dst = np.concatenate([ju, iu])
    feats = np.concatenate([feats, feats])
    order = np.lexsort((dst, src))

    return np.stack([src, dst], axis=1)[order], feats[order]


def _split(rng, items, fractions):
    order = rng.permutation(len(items))
    bounds = np.cumsum([int(round(f * len(items))) for f in fractions[:-1]])
    parts = np.split(order, bounds)
    return [sorted(items[i] for i in part) for part in parts]


def synth_verg_stream(config, seed):
    """
    Deterministic given (config, seed). Task k uses classes
    {k*c, ..., k*c + c - 1}; class-conditional means are indexed by the slot
    within a task and shifted by an accumulated per-task drift vector.
    """
    rng = np.random.default_rng(seed)
    c = config.classes_per_task
    n = config.feature_dim

    if config.class_means is None:
        slot_means = rng.normal(0.0, config.mean_scale, size=(c, n))
    else:
        slot_means = np.array(config.class_means, dtype=np.float64)

    universe = VertexUniverse(config.universe_size, n, config.edge_feature_dim)
    shift = np.zeros(n)
    vertex_set = None
    tasks = []

    for k in range(config.num_tasks):
        direction = _unit(rng.standard_normal(n))
        if k > 0:
            shift = shift + config.drift * direction

        vertex_set = _drift_vertex_set(
            rng, config.universe_size, vertex_set, config.vertices_per_task, config.resample_fraction
        )
        classes = range(k * c, k * c + c)

        if config.objective is Objective.NODE:
            graphs, split = _node_task(rng, config, vertex_set, slot_means + shift, k * c)
        else:
            graphs, split = _graph_task(rng, config, vertex_set, slot_means + shift, k * c)

        tasks.append(Task(k, config.objective, classes, graphs, split))
        log.debug("synth task=%d vertices=%d graphs=%d", k, len(vertex_set), len(graphs))

    stream = TaskStream(universe, tasks, config.num_classes_total)
    check_stream(stream)

    return stream


def _node_task(rng, config, vertex_set, means, first_class):
    c = config.classes_per_task
    nv = len(vertex_set)
    slots = rng.permutation(np.arange(nv) % c)
    x = means[slots] + config.feature_noise * rng.standard_normal((nv, config.feature_dim))
    edges, phi = _sbm_edges(rng, slots, config.p_in, config.p_out, config.edge_feature_dim, config.edge_noise)

    mask = rng.random(nv) < config.labeled_fraction
    if mask.sum() < 2:
        mask[:2] = True

    graph = GraphSnapshot(vertex_set, edges, x, phi, first_class + slots, mask, edge_width=phi.shape[1])
    labeled = [(0, int(p)) for p in np.flatnonzero(mask)]
    train, test = _split(rng, labeled, (0.8, 0.2))

    return [graph], dict(train=train, test=test)


def _graph_task(rng, config, vertex_set, means, first_class):
    c = config.classes_per_task
    slots = rng.permutation(np.arange(config.graphs_per_task) % c)
    graphs = []

    for slot in slots:
        ids = np.sort(rng.choice(vertex_set, size=config.graph_size, replace=False))
        x = means[slot] + config.feature_noise * rng.standard_normal((len(ids), config.feature_dim))
        # class-dependent density keeps connectivity informative
        p = config.p_out + (config.p_in - config.p_out) * slot / max(1, c - 1)
        edges, phi = _sbm_edges(
            rng, np.zeros(len(ids), dtype=np.int64), p, p, config.edge_feature_dim, config.edge_noise
        )
        graphs.append(GraphSnapshot(ids, edges, x, phi, int(first_class + slot), edge_width=phi.shape[1]))

    train, test, val = _split(rng, list(range(len(graphs))), (0.6, 0.2, 0.2))

    return graphs, dict(train=train, test=test, val=val)


def jaccard(a, b):
    a, b = set(int(i) for i in a), set(int(i) for i in b)
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def vertex_overlaps(stream):
    """Jaccard overlap of the vertex sets of consecutive tasks."""
    def vertex_set(task):
        return set().union(*(set(int(v) for v in g.vertex_ids) for g in task.graphs))

    sets = [vertex_set(t) for t in stream.tasks]
    return [jaccard(a, b) for a, b in zip(sets[:-1], sets[1:])]


def class_feature_means(task):
    """Per within-task class slot, the empirical vertex-feature mean and sample count."""
    first = min(task.classes)
    rows = collections.defaultdict(list)

    for graph in task.graphs:
        if graph.graph_level:
            rows[graph.labels - first].append(graph.vertex_features)
        else:
            for slot in np.unique(graph.labels):
                rows[int(slot) - first].append(graph.vertex_features[graph.labels == slot])

    result = {}
    for slot, blocks in sorted(rows.items()):
        stacked = np.concatenate(blocks)
        result[slot] = (stacked.mean(axis=0), len(stacked))

    return result


def expected_overlap(resample_fraction):
    f = resample_fraction
    return (1.0 - f) / (1.0 + f)
