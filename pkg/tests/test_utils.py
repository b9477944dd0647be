import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.island_resonances.utils.cache import ResultCache
from src.island_resonances.utils.errors import ConfigValidationError, CorruptEntry
from src.island_resonances.utils.export import dumps, write_csv
from src.island_resonances.utils.grid import GridSpec, wrapped_offsets
from src.island_resonances.utils.sublevel import distance_to, edge_labels, label_components


def test_half_step_grid_contains_the_coarse_nodes():
    grid = GridSpec(dimension=1, half_width=2.0, points=16)
    fine = grid.half_step()
    assert fine.points == 32
    assert np.allclose(fine.axis()[::2], grid.axis())


def test_nearest_index_wraps_around_the_box():
    grid = GridSpec(dimension=1, half_width=1.0, points=4)
    assert grid.nearest_index(np.array([[1.0], [-0.5], [0.1]])).tolist() == [0, 1, 2]


@pytest.mark.parametrize(
    "changes",
    [{"points": 15}, {"theta": 0.2}, {"dimension": 3}, {"h": 0.0}],
)
def test_invalid_grids(changes):
    with pytest.raises(ConfigValidationError):
        GridSpec(**{"dimension": 1, "half_width": 1.0, "points": 16, **changes})


def test_matrix_size_cap():
    with pytest.raises(ConfigValidationError):
        GridSpec(dimension=2, half_width=1.0, points=64, max_side=100).check_matrix_size()


def test_wrapped_offsets():
    assert wrapped_offsets(4)[0].tolist() == [0, -1, -2, 1]


def test_components_of_a_line():
    count, labels = label_components(np.array([True, True, False, True]))
    assert count == 3
    assert labels.tolist() == [1, 1, 0, 2]
    assert edge_labels(labels) == {1, 2}


def test_interior_blob_does_not_touch_the_edge():
    mask = np.zeros((6, 6), dtype=bool)
    mask[2:4, 2:4] = True
    count, labels = label_components(mask)
    assert count == 2
    assert edge_labels(labels) == set()


def test_distances_in_physical_units():
    assert distance_to(np.array([False, False, True, False]), 0.5).tolist() == [1.0, 0.5, 0.0, 0.5]
    mask = np.zeros((5, 5), dtype=bool)
    mask[2, 2] = True
    assert distance_to(mask, 0.1)[0, 0] == pytest.approx(np.sqrt(8.0) * 0.1, rel=1e-5)
    assert np.all(np.isinf(distance_to(np.zeros(3, dtype=bool), 1.0)))


def test_dumps_handles_numpy_and_complex_values():
    data = json.loads(dumps({"z": 1 + 2j, "n": np.int64(3), "a": np.arange(2.0), "p": Path("out")}))
    assert data == {"z": [1.0, 2.0], "n": 3, "a": [0.0, 1.0], "p": "out"}


def test_csv_carries_the_config_hash(tmp_path):
    path = write_csv(pd.DataFrame({"E": [0.1, 0.2]}), tmp_path / "nested" / "table.csv", config_hash="abc")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["E", "config_hash"]
    assert set(frame["config_hash"]) == {"abc"}


def test_cache_round_trip(tmp_path):
    cache = ResultCache(tmp_path)
    key = ResultCache.key("demo", {"points": 16})
    assert cache.get(key) is None
    cache.put(key, {"values": np.array([1.0, 2.0])})
    assert cache.get(key)["values"].tolist() == [1.0, 2.0]
    assert key != ResultCache.key("demo", {"points": 32})


def test_cache_detects_tampering(tmp_path):
    cache = ResultCache(tmp_path)
    cache.put("demo-1", {"values": np.zeros(3)})
    (tmp_path / "cache" / "demo-1.npz").write_bytes(b"not an archive")
    with pytest.raises(CorruptEntry):
        cache.get("demo-1")


def test_get_or_compute_counts_hits_and_misses(tmp_path, caplog):
    cache = ResultCache(tmp_path)
    calls = []

    def compute():
        calls.append(1)
        return np.array([3.0])

    def encode(values):
        return {"values": values}

    def decode(arrays):
        return arrays["values"]

    assert cache.get_or_compute("demo-2", compute, encode, decode).tolist() == [3.0]
    assert cache.get_or_compute("demo-2", compute, encode, decode).tolist() == [3.0]
    assert (cache.hits, cache.misses, len(calls)) == (1, 1, 1)

    (tmp_path / "cache" / "demo-2.sha256").write_text("0" * 64)
    cache.get_or_compute("demo-2", compute, encode, decode)
    assert len(calls) == 2
    assert "recomputing" in caplog.text


def test_gc_keeps_fresh_entries(tmp_path):
    cache = ResultCache(tmp_path)
    cache.put("demo-3", {"values": np.zeros(1)})
    assert cache.gc(max_age_days=1) == 0
    assert cache.get("demo-3") is not None
