import json

import numpy as np
import pytest

from gclgame import graph, streamfile
from gclgame.errors import InvariantError, IoError, ParseError, SchemaError


def test_save_load_roundtrip(tmp_path, small_stream):
    path = tmp_path / "s.json"
    streamfile.save_stream(small_stream, path)
    assert streamfile.load_stream(path) == small_stream


def test_graph_stream_roundtrip(tmp_path, small_config):
    stream = graph.synth_verg_stream(
        small_config.replace(objective=graph.Objective.GRAPH, graphs_per_task=5, graph_size=4, edge_feature_dim=2,
                             edge_noise=0.3),
        1,
    )
    path = tmp_path / "g.json"
    streamfile.save_stream(stream, path)
    assert streamfile.load_stream(path) == stream


def test_saves_are_byte_identical(tmp_path, small_stream):
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    streamfile.save_stream(small_stream, a)
    streamfile.save_stream(small_stream, b)
    streamfile.save_stream(streamfile.load_stream(a), c)
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


@pytest.mark.parametrize("seed", range(5))
def test_random_streams_roundtrip(seed):
    rng = np.random.default_rng(seed)
    config = graph.SynthConfig(
        num_tasks=int(rng.integers(1, 4)),
        classes_per_task=int(rng.integers(1, 3)),
        universe_size=50,
        vertices_per_task=12,
        feature_dim=int(rng.integers(1, 4)),
        edge_feature_dim=int(rng.integers(0, 3)),
        edge_noise=0.5,
        drift=float(rng.uniform(0, 2)),
        resample_fraction=0.25,
        labeled_fraction=0.7,
    )
    stream = graph.synth_verg_stream(config, seed)
    assert streamfile.loads_stream(streamfile.canonical_dumps(streamfile.stream_to_dict(stream))) == stream


def test_canonical_float_format():
    assert streamfile.canonical_dumps({"b": 0.1, "a": 1, "c": 2.0}) == '{"a":1,"b":0.10000000000000001,"c":2.0}\n'


def test_truncated_file_is_parse_error(tmp_path, small_stream):
    path = tmp_path / "s.json"
    streamfile.save_stream(small_stream, path)
    path.write_text(path.read_text()[:100])
    with pytest.raises(ParseError) as e:
        streamfile.load_stream(path)
    assert e.value.line == 1


def test_tasks_out_of_order_is_schema_error(small_stream):
    doc = json.loads(streamfile.canonical_dumps(streamfile.stream_to_dict(small_stream)))
    doc["tasks"].reverse()
    with pytest.raises(SchemaError):
        streamfile.stream_from_dict(doc)


def test_missing_field_is_schema_error(small_stream):
    doc = json.loads(streamfile.canonical_dumps(streamfile.stream_to_dict(small_stream)))
    del doc["tasks"][0]["classes"]
    with pytest.raises(SchemaError):
        streamfile.stream_from_dict(doc)


def test_dangling_edge_is_invariant_error(small_stream):
    doc = json.loads(streamfile.canonical_dumps(streamfile.stream_to_dict(small_stream)))
    doc["tasks"][0]["graphs"][0]["edges"][0] = [0, 10 ** 6]
    with pytest.raises(InvariantError):
        streamfile.stream_from_dict(doc)


def test_undirected_input_is_symmetrized(small_stream):
    doc = json.loads(streamfile.canonical_dumps(streamfile.stream_to_dict(small_stream)))
    g = doc["tasks"][0]["graphs"][0]
    keep = [i for i, (s, d) in enumerate(g["edges"]) if s < d]
    g["edges"] = [g["edges"][i] for i in keep]
    g["edge_features"] = [g["edge_features"][i] for i in keep]
    doc["directed"] = False
    assert streamfile.stream_from_dict(doc) == small_stream


def test_invalid_stream_is_refused(tmp_path, small_stream):
    broken = graph.TaskStream(small_stream.universe, small_stream.tasks[1:], small_stream.num_classes_total)
    with pytest.raises(InvariantError):
        streamfile.save_stream(broken, tmp_path / "x.json")


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        streamfile.load_stream(tmp_path / "nope.json")
