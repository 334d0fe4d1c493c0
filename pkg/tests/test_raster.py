import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trajsynth.errors import ValidationError
from trajsynth.geodata import Extent, Road, RoadClass, StreetMap, Trajectory
from trajsynth.raster import (
    RasterGrid,
    bresenham,
    component_count,
    dihedral_compose,
    dihedral_transform,
    image_to_trajectory,
    line4,
    rasterize_map,
    rasterize_polyline,
    rasterize_trajectory,
    read_pgm,
    street_mask,
    write_pgm,
)

EXT = Extent(side=640.0)
BIG = Extent(side=1920.0)


def cells_set(grid):
    iy, ix = np.nonzero(grid.data[0])
    return set(zip(ix.tolist(), iy.tolist()))


class TestRasterGrid:
    def test_too_small(self):
        with pytest.raises(ValidationError):
            RasterGrid(Extent(side=70.0), np.zeros((7, 7)))

    def test_size_mismatch(self):
        with pytest.raises(ValidationError):
            RasterGrid(EXT, np.zeros((1, 32, 32)))


class TestRasterizeTrajectory:
    def test_single_point(self):
        g = rasterize_trajectory(Trajectory([[0, 0]]), EXT)
        assert cells_set(g) == {(0, 0)}

    def test_horizontal_segment(self):
        g = rasterize_trajectory(Trajectory([[0, 0], [50, 0]]), EXT)
        assert cells_set(g) == {(i, 0) for i in range(6)}

    def test_upper_edge_clamps(self):
        g = rasterize_trajectory(Trajectory([[640, 640]]), EXT)
        assert cells_set(g) == {(63, 63)}

    @given(st.lists(st.tuples(st.floats(0, 640), st.floats(0, 640)), min_size=10, max_size=10))
    def test_random_path_is_8_connected(self, pts):
        g = rasterize_trajectory(Trajectory(np.array(pts)), EXT)
        assert component_count(g.data[0], connectivity=8) == 1

    def test_cell_centres_idempotent(self):
        # already-centred points: exactly those cells plus line cells
        pts = EXT.cell_centers(np.array([[3, 3], [3, 9], [12, 9]]))
        g = rasterize_trajectory(Trajectory(pts), EXT)
        expect = {(3, y) for y in range(3, 10)} | {(x, 9) for x in range(3, 13)}
        assert cells_set(g) == expect


@given(st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20))
def test_line_connectivity(x0, y0, x1, y1):
    b = bresenham(x0, y0, x1, y1)
    assert b[0] == (x0, y0) and b[-1] == (x1, y1)
    assert all(max(abs(p[0] - q[0]), abs(p[1] - q[1])) == 1 for p, q in zip(b, b[1:]))
    assert len(b) == max(abs(x1 - x0), abs(y1 - y0)) + 1
    f = line4(x0, y0, x1, y1)
    assert all(abs(p[0] - q[0]) + abs(p[1] - q[1]) == 1 for p, q in zip(f, f[1:]))
    assert set(b) <= set(f)


class TestRasterizeMap:
    def test_bottom_row_major(self):
        m = StreetMap(BIG, (Road.make([[0, 0], [1920, 0]], RoadClass.MAJOR),))
        g = rasterize_map(m)
        expect = np.zeros((192, 192), dtype=np.uint8)
        expect[0, :] = 1
        assert np.array_equal(g.data[0], expect)
        assert not g.data[1].any()

    def test_union_of_polylines(self, small_map):
        g = rasterize_map(small_map)
        union = np.zeros((2, 64, 64), dtype=np.uint8)
        for r in small_map.roads:
            ch = 0 if r.road_class is RoadClass.MAJOR else 1
            union[ch] |= rasterize_polyline(r.points, small_map.extent)
        assert np.array_equal(g.data, union)
        assert set(np.unique(g.data)) <= {0, 1}


class TestStreetMask:
    def test_wrong_channels(self):
        with pytest.raises(ValidationError):
            street_mask(RasterGrid(EXT, np.zeros((1, 64, 64))))

    def test_disjoint_popcount(self):
        d = np.zeros((2, 64, 64), dtype=np.uint8)
        d[0, 0, :] = 1
        d[1, 5, :] = 1
        assert street_mask(RasterGrid(EXT, d)).data.sum() == d.sum()

    def test_identical_channels(self):
        rng = np.random.default_rng(0)
        ch = (rng.random((64, 64)) < 0.3).astype(np.uint8)
        m = street_mask(RasterGrid(EXT, np.stack([ch, ch])))
        assert np.array_equal(m.data[0], ch)

    @given(arrays(np.uint8, (2, 8, 8), elements=st.integers(0, 1)))
    def test_or_oracle(self, d):
        ext = Extent(side=80.0)
        m = street_mask(RasterGrid(ext, d)).data[0]
        assert np.array_equal(m, np.bitwise_or(d[0], d[1]))


class TestImageToTrajectory:
    def test_straight_row(self):
        d = np.zeros((64, 64))
        d[4, 10:16] = 1
        tr = image_to_trajectory(RasterGrid(EXT, d))
        assert len(tr) == 6
        assert np.all(np.diff(tr.points[:, 0]) > 0)
        assert np.allclose(tr.points[:, 1], 45.0)

    def test_empty(self):
        with pytest.raises(ValidationError):
            image_to_trajectory(RasterGrid(EXT, np.zeros((64, 64))))

    def test_largest_component_only(self):
        d = np.zeros((64, 64))
        d[4, 10:16] = 1
        d[40, 40:43] = 1
        assert len(image_to_trajectory(RasterGrid(EXT, d))) == 6

    def test_threshold(self):
        d = np.zeros((64, 64))
        d[4, 10:16] = 0.6
        d[4, 16:20] = 0.4
        assert len(image_to_trajectory(RasterGrid(EXT, d), threshold=0.5)) == 6

    @given(st.lists(st.tuples(st.floats(0, 639), st.floats(0, 639)), min_size=1, max_size=8))
    def test_round_trip_cell_set(self, pts):
        g = rasterize_trajectory(Trajectory(np.array(pts)), EXT)
        tr = image_to_trajectory(g)
        back = {tuple(c) for c in EXT.cells_of(tr.points).tolist()}
        assert back == cells_set(g)
        assert len(tr) == len(back)


# -- D4 --------------------------------------------------------------------

# Independent model: element 4f + r acts on centred (x, y) = (col, row)
# coordinates as R^r F^f, with F mirroring x and R = numpy's rot90 direction.
F = np.array([[-1, 0], [0, 1]])
R = np.array([[0, 1], [-1, 0]])


def matrix(e):
    f, r = divmod(e, 4)
    return np.linalg.matrix_power(R, r) @ np.linalg.matrix_power(F, f)


def test_matrix_model_matches_transform():
    n = 8
    for e in range(8):
        for iy in range(n):
            for ix in range(n):
                a = np.zeros((n, n))
                a[iy, ix] = 1
                out = dihedral_transform(a, e)
                c = np.array([ix - 3.5, iy - 3.5])
                x, y = matrix(e) @ c
                assert out[int(y + 3.5), int(x + 3.5)] == 1


def test_group_table():
    rng = np.random.default_rng(1)
    a = rng.random((3, 8, 8))
    mats = [matrix(e) for e in range(8)]
    for x in range(8):
        for y in range(8):
            z = dihedral_compose(x, y)
            assert np.array_equal(mats[x] @ mats[y], mats[z])
            assert np.array_equal(dihedral_transform(dihedral_transform(a, y), x), dihedral_transform(a, z))


def test_identity_rotation_popcount():
    rng = np.random.default_rng(2)
    g = RasterGrid(EXT, (rng.random((2, 64, 64)) < 0.2).astype(np.uint8))
    assert np.array_equal(dihedral_transform(g, 0).data, g.data)
    r = g
    for _ in range(4):
        r = dihedral_transform(r, 1)
    assert np.array_equal(r.data, g.data)
    for e in range(8):
        out = dihedral_transform(g, e).data
        assert out.sum() == g.data.sum()
        assert np.array_equal(out[0], dihedral_transform(g.data[0], e))


def test_bad_element():
    with pytest.raises(ValidationError):
        dihedral_transform(np.zeros((8, 8)), 8)


def test_pgm_round_trip(tmp_path, small_map):
    g = rasterize_map(small_map)
    paths = write_pgm(g, tmp_path / "map")
    assert [p.name for p in paths] == ["map.ch0.pgm", "map.ch1.pgm"]
    for k, p in enumerate(paths):
        assert np.array_equal(read_pgm(p), g.data[k].astype(float))
        assert p.read_bytes().startswith(b"P5\n64 64\n255\n")
