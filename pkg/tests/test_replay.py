import collections

import numpy as np
import pytest

from gclgame import replay, streamfile
from gclgame.errors import EmptyNewData, InvalidConfig
from gclgame.replay import ReplayBuffer, ReplayItem


def items(task_id, count):
    return [ReplayItem(task_id, 0, None, p) for p in range(count)]


def test_buffer_fills_to_capacity(rng):
    buffer = ReplayBuffer(5)
    buffer.update(items(0, 3), rng)
    assert len(buffer) == 3
    buffer.update(items(1, 10), rng)
    assert len(buffer) == 5
    assert buffer.seen == 13


def test_zero_capacity_stores_nothing(rng):
    buffer = ReplayBuffer(0)
    buffer.update(items(0, 10), rng)
    assert len(buffer) == 0


def test_reservoir_is_uniform():
    counts = collections.Counter()
    for seed in range(2000):
        buffer = ReplayBuffer(10)
        buffer.update(items(0, 50), np.random.default_rng(seed))
        counts.update(i.position for i in buffer.items)

    expected = 2000 * 10 / 50
    assert all(abs(counts[p] - expected) < 5 * np.sqrt(expected) for p in range(50))


def test_joint_batch_halves(rng):
    buffer = ReplayBuffer(100)
    buffer.update(items(0, 40), rng)
    batch = replay.sample_joint(buffer, items(1, 40), 8, rng)
    assert collections.Counter(i.task_id for i in batch.items) == {0: 4, 1: 4}


def test_joint_batch_tops_up_from_other_source(rng):
    buffer = ReplayBuffer(100)
    buffer.update(items(0, 2), rng)
    batch = replay.sample_joint(buffer, items(1, 40), 8, rng)
    assert collections.Counter(i.task_id for i in batch.items) == {0: 2, 1: 6}

    batch = replay.sample_joint(None, items(1, 3), 8, rng)
    assert len(batch) == 3


def test_joint_batch_without_replacement(rng):
    buffer = ReplayBuffer(100)
    buffer.update(items(0, 10), rng)
    batch = replay.sample_joint(buffer, items(1, 10), 20, rng)
    assert len(set(i.ident for i in batch.items)) == 20


def test_empty_new_data(rng):
    with pytest.raises(EmptyNewData):
        replay.sample_joint(ReplayBuffer(), [], 4, rng)


def test_minibatch_groups_by_snapshot():
    picked = [ReplayItem(1, 0, None, 3), ReplayItem(0, 2, None, 1), ReplayItem(1, 0, None, 0)]
    batch = replay.Minibatch(picked)
    assert batch.keys == [(0, 2), (1, 0)]
    assert batch.groups[1].positions == [0, 3]


def test_buffer_dump_is_a_stream(tmp_path, small_stream, rng):
    buffer = ReplayBuffer(20)
    for task in small_stream.tasks[:2]:
        buffer.update(replay.task_items(task), rng)

    path = tmp_path / "buffer.json"
    buffer.dump(path, small_stream.universe, small_stream.num_classes_total)
    dumped = streamfile.load_stream(path)

    assert len(dumped) == len(buffer.task_counts)
    assert sum(len(t.split['train']) for t in dumped.tasks) == len(buffer)


def test_negative_capacity():
    with pytest.raises(InvalidConfig) as info:
        ReplayBuffer(-1)
    assert info.value.field == 'buffer_capacity'


def test_batch_size_must_be_positive(rng):
    with pytest.raises(InvalidConfig) as info:
        replay.sample_joint(ReplayBuffer(), items(1, 4), 0, rng)
    assert info.value.field == 'batch_b'
