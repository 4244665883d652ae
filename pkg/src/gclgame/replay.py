"""
Experience replay: the previous-task buffer with reservoir updates and the
joint previous/new minibatch sampler.
"""
import collections
import logging
import math

import numpy as np

from . import graph
from .errors import EmptyNewData, InvalidConfig
from .streamfile import save_stream

log = logging.getLogger(__name__)


class ReplayItem(collections.namedtuple("ReplayItem", "task_id graph_index snapshot position")):
    """One labeled vertex (node tasks) or one whole graph (position None)."""

    __slots__ = ()

    @property
    def key(self):
        return self.task_id, self.graph_index

    @property
    def ident(self):
        return self.task_id, self.graph_index, self.position


def task_items(task, part='train'):
    return [
        ReplayItem(task.task_id, g, task.graphs[g], pos)
        for g, pos in task.items(part)
    ]


class BatchGroup:
    def __init__(self, key, snapshot, positions):
        self.key = key
        self.snapshot = snapshot
        self.positions = positions

    def mask(self):
        if self.positions is None:
            return None
        mask = np.zeros(self.snapshot.num_vertices, dtype=bool)
        mask[list(self.positions)] = True
        return mask


class Minibatch:
    """Items grouped by snapshot key, keys in sorted order."""

    def __init__(self, items):
        self.items = list(items)

        by_key = collections.OrderedDict()
        for item in sorted(self.items, key=lambda i: (i.key, -1 if i.position is None else i.position)):
            if item.key not in by_key:
                by_key[item.key] = BatchGroup(item.key, item.snapshot, None if item.position is None else [])
            if item.position is not None:
                by_key[item.key].positions.append(item.position)

        self.groups = list(by_key.values())

    @property
    def keys(self):
        return [group.key for group in self.groups]

    def __len__(self):
        return len(self.items)


class ReplayBuffer:
    def __init__(self, capacity=500):
        if capacity < 0:
            raise InvalidConfig('buffer_capacity', "replay capacity must be nonnegative")
        self.capacity = int(capacity)
        self.items = []
        self.seen = 0

    def __len__(self):
        return len(self.items)

    @property
    def task_counts(self):
        return collections.Counter(item.task_id for item in self.items)

    def update(self, task_data, rng):
        """Reservoir-sample `task_data` into the buffer."""
        for item in task_data:
            self.seen += 1
            if len(self.items) < self.capacity:
                self.items.append(item)
            else:
                j = int(rng.integers(0, self.seen))
                if j < self.capacity:
                    self.items[j] = item

        assert len(self.items) <= self.capacity, "replay capacity exceeded"
        log.debug("replay seen=%d stored=%d tasks=%s", self.seen, len(self.items), dict(self.task_counts))

    def dump(self, path, universe, num_classes_total):
        """
        Write the stored items as a task stream, one task per represented
        task id. Stored positions become the only labeled vertices.
        """
        by_task = collections.defaultdict(lambda: collections.defaultdict(list))
        for item in self.items:
            by_task[item.task_id][item.graph_index].append(item)

        tasks = []
        for new_id, task_id in enumerate(sorted(by_task)):
            graphs, train = [], []
            for g, graph_index in enumerate(sorted(by_task[task_id])):
                stored = by_task[task_id][graph_index]
                snapshot = stored[0].snapshot
                if snapshot.graph_level:
                    graphs.append(snapshot)
                    train.append(g)
                else:
                    positions = sorted(set(i.position for i in stored))
                    mask = np.zeros(snapshot.num_vertices, dtype=bool)
                    mask[positions] = True
                    graphs.append(graph.GraphSnapshot(
                        snapshot.vertex_ids, snapshot.edges, snapshot.vertex_features, snapshot.edge_features,
                        snapshot.labels, mask, edge_width=universe.edge_width,
                    ))
                    train.extend((g, p) for p in positions)

            objective = graph.Objective.GRAPH if graphs[0].graph_level else graph.Objective.NODE
            classes = set().union(*(s.label_set() for s in graphs))
            tasks.append(graph.Task(new_id, objective, classes, graphs, dict(train=train, test=[])))

        save_stream(graph.TaskStream(universe, tasks, num_classes_total), path)


def sample_joint(buffer, new_data, b, rng):
    """
    Joint minibatch: up to ceil(b/2) items from the buffer and the rest from
    `new_data`, each source sampled uniformly without replacement. A source
    that runs short is topped up from the other.
    """
    if not new_data:
        raise EmptyNewData("no new-task items to sample from")
    if b < 1:
        raise InvalidConfig('batch_b', "batch size must be positive")

    previous = buffer.items if buffer is not None else []
    p = min(int(math.ceil(b / 2.0)), len(previous))
    n = min(b - p, len(new_data))
    p = min(b - n, len(previous))

    picked = [previous[i] for i in rng.choice(len(previous), size=p, replace=False)] if p else []
    picked += [new_data[i] for i in rng.choice(len(new_data), size=n, replace=False)]

    return Minibatch(picked)
