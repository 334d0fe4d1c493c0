import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from trajsynth.errors import ParseError, ValidationError
from trajsynth.geodata import (
    Extent,
    Road,
    RoadClass,
    StreetMap,
    Trajectory,
    load_map,
    load_trajectories,
    save_map,
    save_trajectories,
    spatial_split,
    synth_map,
    synth_trajectories,
)
from trajsynth.raster import rasterize_map

BIG = Extent(side=1920.0, cell_size=10.0)


def write_map(tmp_path, roads, extent=BIG):
    doc = {"extent": extent.to_dict(), "roads": roads}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    return path


class TestExtent:
    def test_cells_per_side(self):
        assert BIG.n == 192

    @pytest.mark.parametrize("kw", [{"side": 0}, {"cell_size": -1}, {"side": 645, "cell_size": 10}])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            Extent(**kw)

    def test_upper_edge_clamps(self):
        assert BIG.cells_of([[1920.0, 1920.0]]).tolist() == [[191, 191]]


class TestLoadMap:
    def test_single_major_road(self, tmp_path):
        m = load_map(write_map(tmp_path, [{"class": "major", "points": [[0, 0], [1920, 0]]}]))
        assert len(m.roads) == 1
        assert len(m.roads[0].points) == 2
        assert m.roads[0].road_class is RoadClass.MAJOR

    def test_vertex_outside_extent(self, tmp_path):
        with pytest.raises(ValidationError):
            load_map(write_map(tmp_path, [{"class": "major", "points": [[2000, 0], [0, 0]]}]))

    @pytest.mark.parametrize("tag", ["Motorway", "trunk", "PRIMARY", "secondary"])
    def test_major_tags(self, tmp_path, tag):
        m = load_map(write_map(tmp_path, [{"class": tag, "points": [[0, 0], [10, 0]]}]))
        assert m.roads[0].road_class is RoadClass.MAJOR

    @pytest.mark.parametrize("tag", ["residential", "footway", "minor"])
    def test_minor_tags(self, tmp_path, tag):
        m = load_map(write_map(tmp_path, [{"class": tag, "points": [[0, 0], [10, 0]]}]))
        assert m.roads[0].road_class is RoadClass.MINOR

    def test_single_vertex_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            load_map(write_map(tmp_path, [{"class": "minor", "points": [[0, 0]]}]))

    @pytest.mark.parametrize("text", ["{", "[]", '{"extent": {}}', '{"extent": {"side": 10}, "roads": []}'])
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "bad.json"
        p.write_text(text)
        with pytest.raises(ParseError):
            load_map(p)


class TestLoadTrajectories:
    def write(self, tmp_path, rows):
        p = tmp_path / "t.csv"
        p.write_text("traj_id,seq,x,y\n" + "".join(f"{r}\n" for r in rows))
        return p

    def test_two_points(self, tmp_path):
        trajs = load_trajectories(self.write(tmp_path, ["t1,0,0,0", "t1,1,10,0"]), BIG)
        assert len(trajs) == 1
        assert trajs[0].points.tolist() == [[0, 0], [10, 0]]

    def test_interleaved_ids(self, tmp_path):
        rows = ["a,1,10,0", "b,0,5,5", "a,0,0,0", "b,2,7,7", "b,1,6,6"]
        trajs = load_trajectories(self.write(tmp_path, rows), BIG)
        assert [t.traj_id for t in trajs] == ["a", "b"]
        assert trajs[0].points.tolist() == [[0, 0], [10, 0]]
        assert trajs[1].points.tolist() == [[5, 5], [6, 6], [7, 7]]

    def test_out_of_extent(self, tmp_path):
        with pytest.raises(ValidationError):
            load_trajectories(self.write(tmp_path, ["t1,0,-5,0"]), BIG)

    def test_gap_in_sequence(self, tmp_path):
        with pytest.raises(ValidationError):
            load_trajectories(self.write(tmp_path, ["t1,0,0,0", "t1,2,10,0"]), BIG)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("id,x,y\n")
        with pytest.raises(ParseError):
            load_trajectories(p, BIG)

    def test_bad_number(self, tmp_path):
        with pytest.raises(ParseError):
            load_trajectories(self.write(tmp_path, ["t1,0,abc,0"]), BIG)


coords = st.floats(0, 1920, allow_nan=False)


@given(st.lists(st.lists(st.tuples(coords, coords), min_size=1, max_size=8), min_size=1, max_size=5))
def test_trajectory_round_trip(tmp_path_factory, raw):
    path = tmp_path_factory.mktemp("rt") / "t.csv"
    trajs = [Trajectory(np.array(pts)) for pts in raw]
    save_trajectories(trajs, path)
    back = load_trajectories(path, BIG)
    assert back == trajs


@given(st.lists(st.lists(st.tuples(coords, coords), min_size=2, max_size=6), min_size=0, max_size=4), st.booleans())
def test_map_round_trip(tmp_path_factory, raw, major):
    path = tmp_path_factory.mktemp("rt") / "m.json"
    cls = RoadClass.MAJOR if major else RoadClass.MINOR
    m = StreetMap(BIG, tuple(Road.make(np.array(p), cls) for p in raw))
    save_map(m, path)
    assert load_map(path) == m


class TestSynthMap:
    def test_grid_line_count(self):
        m = synth_map(0, BIG, grid_pitch=480, diagonal_count=0)
        xs = {r.points[0][0] for r in m.roads if r.points[0][0] == r.points[-1][0]}
        ys = {r.points[0][1] for r in m.roads if r.points[0][1] == r.points[-1][1]}
        assert len(xs) == 5 and len(ys) == 5
        assert len(m.roads) == 10

    def test_deterministic(self, tmp_path):
        save_map(synth_map(7, BIG), tmp_path / "a.json")
        save_map(synth_map(7, BIG), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    @pytest.mark.parametrize("seed", range(5))
    def test_connected(self, seed):
        grid = rasterize_map(synth_map(seed, BIG, grid_pitch=320, diagonal_count=3))
        street = grid.data.max(axis=0) > 0
        _, count = ndimage.label(street, structure=ndimage.generate_binary_structure(2, 1))
        assert count == 1

    def test_has_major_and_minor(self):
        classes = {r.road_class for r in synth_map(1, BIG).roads}
        assert classes == {RoadClass.MAJOR, RoadClass.MINOR}

    def test_pitch_too_small(self):
        with pytest.raises(ValidationError):
            synth_map(0, BIG, grid_pitch=15)


class TestSynthTrajectories:
    def test_zero_count(self, small_map):
        assert synth_trajectories(small_map, 0, 0) == []

    def test_on_streets_and_deterministic(self, small_map):
        trajs = synth_trajectories(small_map, 50, 3)
        assert trajs == synth_trajectories(small_map, 50, 3)
        street = rasterize_map(small_map).data.max(axis=0) > 0
        for t in trajs:
            cells = small_map.extent.cells_of(t.points)
            assert street[cells[:, 1], cells[:, 0]].all()
            steps = np.abs(np.diff(cells, axis=0)).sum(axis=1)
            assert np.all(steps == 1) or len(t) == 1

    def test_major_roads_favoured(self):
        # occupancy per road cell: major exceeds minor at cost ratio 1:3
        m = synth_map(2, Extent(side=640.0))
        grid = rasterize_map(m)
        major = grid.data[0] > 0
        minor = (grid.data[1] > 0) & ~major
        counts = np.zeros_like(major, dtype=np.int64)
        for t in synth_trajectories(m, 1000, 5):
            c = m.extent.cells_of(t.points)
            np.add.at(counts, (c[:, 1], c[:, 0]), 1)
        assert counts[major].sum() / major.sum() > counts[minor].sum() / minor.sum()


class TestSpatialSplit:
    def entry(self, x0):
        return (StreetMap(Extent(origin_x=x0, side=1920.0)), [])

    def test_two_sides(self):
        train, test = spatial_split([self.entry(0), self.entry(2000)], 1960)
        assert len(train) == 1 and len(test) == 1

    def test_straddle(self):
        with pytest.raises(ValidationError):
            spatial_split([self.entry(1900)], 1960)

    def test_ten_entries_disjoint(self):
        origins = [k * 2000.0 for k in range(10)]
        train, test = spatial_split([self.entry(x) for x in origins], 4 * 2000 + 1960)
        assert len(train) + len(test) == 10
        for a, _ in train.entries:
            for b, _ in test.entries:
                assert not a.extent.overlaps(b.extent)
