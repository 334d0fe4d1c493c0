import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.sparse.csgraph import shortest_path

from trajsynth.errors import ValidationError
from trajsynth.geodata import Extent
from trajsynth.mobility import (
    MobilityConfig,
    Model,
    bfs_path,
    gen_gm,
    gen_m_gm,
    gen_m_rwp,
    gen_rwp,
    generate,
    gm_process,
    speed_matched_config,
)
from trajsynth.raster import RasterGrid, grid_graph, rasterize_map, street_mask

EXT = Extent(side=640.0)


def on_street(traj, mask):
    cells = mask.extent.cells_of(traj.points)
    centres = mask.extent.cell_centers(cells)
    return bool(mask.data[0][cells[:, 1], cells[:, 0]].all() and np.array_equal(centres, traj.points))


@pytest.fixture(scope="module")
def mask(small_map):
    return street_mask(rasterize_map(small_map))


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"speed_min": 2, "speed_max": 1},
            {"speed_min": -1},
            {"gm_alpha": 1.5},
            {"step_seconds": 0},
            {"horizon_steps": 0},
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            MobilityConfig(**kw)

    def test_wrong_model(self):
        with pytest.raises(ValidationError):
            gen_rwp(MobilityConfig(model="gm"), EXT, 0)

    def test_speed_matched(self):
        cfg = speed_matched_config("mrwp", EXT)
        assert cfg.model is Model.M_RWP
        assert (cfg.speed_min, cfg.speed_max, cfg.gm_mean_speed) == (5.0, 15.0, 10.0)


class TestRWP:
    def test_zero_speed(self):
        t = gen_rwp(MobilityConfig(speed_min=0, speed_max=0), EXT, 1)
        assert len(t) == 64
        assert np.all(t.points == t.points[0])

    def test_single_point(self):
        assert len(gen_rwp(MobilityConfig(horizon_steps=1), EXT, 1)) == 1

    @given(st.integers(0, 2**31), st.floats(0, 20), st.floats(0, 20))
    def test_displacement_bound(self, seed, a, b):
        lo, hi = min(a, b), max(a, b)
        cfg = MobilityConfig(speed_min=lo, speed_max=hi, horizon_steps=40)
        t = gen_rwp(cfg, EXT, seed)
        step = np.linalg.norm(np.diff(t.points, axis=0), axis=1)
        # points are stored at 0.01 m resolution
        assert np.all(step <= hi * cfg.step_seconds + 0.015)
        assert np.all(EXT.contains(t.points))

    def test_deterministic(self):
        cfg = MobilityConfig()
        assert gen_rwp(cfg, EXT, 5) == gen_rwp(cfg, EXT, 5)
        assert gen_rwp(cfg, EXT, 5) != gen_rwp(cfg, EXT, 6)


class TestGM:
    def test_alpha_one_constant_velocity(self):
        big = Extent(side=100000.0)
        cfg = MobilityConfig(model="gm", gm_alpha=1.0, gm_sigma=3.0, gm_heading_sigma=2.0, horizon_steps=30)
        t = gen_gm(cfg, big, 3)
        d = np.diff(t.points, axis=0)
        assert np.allclose(d, d[0], atol=0.02)
        assert np.isclose(np.linalg.norm(d[0]), cfg.gm_mean_speed, atol=0.02)

    def test_alpha_one_process(self):
        cfg = MobilityConfig(model="gm", gm_alpha=1.0, gm_sigma=3.0)
        s, h = gm_process(cfg, 100, np.random.default_rng(0), 0.3)
        assert np.all(s == cfg.gm_mean_speed) and np.all(h == 0.3)

    def test_alpha_zero_iid_variance(self):
        cfg = MobilityConfig(model="gm", gm_alpha=0.0, gm_mean_speed=1.25, gm_sigma=0.5)
        s, _ = gm_process(cfg, 100_000, np.random.default_rng(1), 0.0)
        assert abs(s.var() / 0.25 - 1) < 0.1
        lag1 = np.corrcoef(s[:-1], s[1:])[0, 1]
        assert abs(lag1) < 0.02

    @pytest.mark.parametrize("alpha", [0.3, 0.75, 0.95])
    def test_stationary_variance(self, alpha):
        cfg = MobilityConfig(model="gm", gm_alpha=alpha, gm_sigma=0.5)
        s, _ = gm_process(cfg, 200_000, np.random.default_rng(2), 0.0)
        assert abs(s.var() / 0.25 - 1) < 0.1

    @given(st.integers(0, 2**31))
    def test_within_extent(self, seed):
        cfg = MobilityConfig(model="gm", gm_mean_speed=30.0, gm_sigma=10.0)
        assert np.all(EXT.contains(gen_gm(cfg, EXT, seed).points))


def oracle_length(grid, start, goal):
    graph, index = grid_graph(grid)
    d = shortest_path(graph, indices=index[start[1], start[0]], unweighted=True)
    return d[index[goal[1], goal[0]]] + 1


class TestBFS:
    def test_start_is_goal(self):
        g = np.ones((8, 8), dtype=bool)
        assert bfs_path(g, (3, 3), (3, 3)) == [(3, 3)]

    def test_corridor(self):
        g = np.zeros((8, 8), dtype=bool)
        g[2, 0:7] = True
        p = bfs_path(g, (0, 2), (6, 2))
        assert len(p) == 7
        assert p == [(x, 2) for x in range(7)]

    def test_tie_order(self):
        # open square: N before E, so the path goes up first
        g = np.ones((8, 8), dtype=bool)
        p = bfs_path(g, (0, 0), (1, 1))
        assert p == [(0, 0), (0, 1), (1, 1)]

    def test_unreachable(self):
        g = np.zeros((8, 8), dtype=bool)
        g[0, 0] = g[5, 5] = True
        with pytest.raises(ValidationError):
            bfs_path(g, (0, 0), (5, 5))

    def test_non_street_endpoint(self):
        g = np.zeros((8, 8), dtype=bool)
        g[0, 0] = True
        with pytest.raises(ValidationError):
            bfs_path(g, (0, 0), (1, 0))

    @given(arrays(np.bool_, (10, 10), elements=st.booleans()), st.randoms())
    def test_matches_dijkstra(self, grid, rnd):
        cells = np.argwhere(grid)[:, ::-1]
        if len(cells) < 2:
            return
        a = tuple(cells[rnd.randrange(len(cells))])
        b = tuple(cells[rnd.randrange(len(cells))])
        expect = oracle_length(grid, a, b)
        if not np.isfinite(expect):
            with pytest.raises(ValidationError):
                bfs_path(grid, a, b)
            return
        p = bfs_path(grid, a, b)
        assert len(p) == expect
        assert p[0] == a and p[-1] == b
        assert all(grid[c[1], c[0]] for c in p)
        assert all(abs(u[0] - v[0]) + abs(u[1] - v[1]) == 1 for u, v in zip(p, p[1:]))

    @given(arrays(np.bool_, (8, 8), elements=st.booleans()), st.randoms())
    def test_no_longer_than_random_dfs(self, grid, rnd):
        cells = [tuple(c) for c in np.argwhere(grid)[:, ::-1]]
        if len(cells) < 2:
            return
        a, b = rnd.choice(cells), rnd.choice(cells)
        # randomized DFS: any simple path it finds is an upper bound
        stack, seen = [(a, [a])], {a}
        found = None
        while stack:
            c, path = stack.pop()
            if c == b:
                found = path
                break
            nbrs = [(c[0] + dx, c[1] + dy) for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0))]
            rnd.shuffle(nbrs)
            for n in nbrs:
                if 0 <= n[0] < 8 and 0 <= n[1] < 8 and grid[n[1], n[0]] and n not in seen:
                    seen.add(n)
                    stack.append((n, path + [n]))
        if found is not None:
            assert len(bfs_path(grid, a, b)) <= len(found)


class TestStreetModels:
    def test_single_cell_mask(self):
        d = np.zeros((64, 64), dtype=np.uint8)
        d[10, 20] = 1
        m = RasterGrid(EXT, d)
        for model, fn in (("mrwp", gen_m_rwp), ("mgm", gen_m_gm)):
            t = fn(MobilityConfig(model=model), m, 0)
            assert len(t) == 64
            assert np.all(t.points == [205.0, 105.0])

    def test_empty_mask(self):
        m = RasterGrid(EXT, np.zeros((64, 64), dtype=np.uint8))
        for model, fn in (("mrwp", gen_m_rwp), ("mgm", gen_m_gm)):
            with pytest.raises(ValidationError):
                fn(MobilityConfig(model=model), m, 0)

    def test_corridor_confinement(self):
        d = np.zeros((64, 64), dtype=np.uint8)
        d[30, 5:60] = 1
        m = RasterGrid(EXT, d)
        cfg = MobilityConfig(model="mgm", gm_mean_speed=8.0, gm_sigma=2.0)
        for seed in range(20):
            t = gen_m_gm(cfg, m, seed)
            assert np.all(t.points[:, 1] == 305.0)

    @pytest.mark.parametrize("model", ["mrwp", "mgm"])
    def test_on_street(self, mask, model):
        cfg = speed_matched_config(model, EXT)
        for t in generate(cfg, 100, 1, mask=mask):
            assert on_street(t, mask)
            assert len(t) == cfg.horizon_steps

    def test_mrwp_steps_bounded(self, mask):
        cfg = MobilityConfig(model="mrwp", speed_min=5, speed_max=15)
        for t in generate(cfg, 30, 2, mask=mask):
            steps = np.abs(np.diff(EXT.cells_of(t.points), axis=0)).sum(axis=1)
            # at most ceil(15 m / 10 m) + 1 cells per second along a routed leg
            assert steps.max() <= 3

    def test_heatmap_support(self, mask):
        cfg = MobilityConfig(model="mrwp", speed_min=5, speed_max=15)
        occ = np.zeros((64, 64), dtype=bool)
        for t in generate(cfg, 200, 3, mask=mask):
            c = EXT.cells_of(t.points)
            occ[c[:, 1], c[:, 0]] = True
        assert not (occ & ~mask.data[0].astype(bool)).any()

    def test_momentum(self, mask):
        """M-GM turns less per step than M-RWP on a grid map (same seeds)."""

        def mean_turn(trajs):
            angles = []
            for t in trajs:
                d = np.diff(t.points, axis=0)
                d = d[np.linalg.norm(d, axis=1) > 0]
                for u, v in zip(d, d[1:]):
                    c = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
                    angles.append(math.acos(max(-1.0, min(1.0, c))))
            return float(np.mean(angles))

        gm = generate(speed_matched_config("mgm", EXT), 200, 4, mask=mask)
        rwp = generate(speed_matched_config("mrwp", EXT), 200, 4, mask=mask)
        assert mean_turn(gm) < mean_turn(rwp)

    def test_deterministic(self, mask):
        cfg = MobilityConfig(model="mgm")
        assert generate(cfg, 5, 9, mask=mask) == generate(cfg, 5, 9, mask=mask)

    def test_generate_needs_mask(self):
        with pytest.raises(ValidationError):
            generate(MobilityConfig(model="mrwp"), 2, 0)
