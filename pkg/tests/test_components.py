import math

import numpy as np
import pytest
import shapely
from shapely.geometry import Polygon

from oracles import block_mean_loop, entropy_loop, horn_slope_loop
from walkgrid.components import (
    LandUseClass,
    green_fraction_field,
    horn_slope,
    lum_field,
    ndvi_field,
    per_capita,
    pt_field,
    remap_corine,
    remap_corine_array,
    shannon_entropy,
    slope_field,
    window_class_counts,
)
from walkgrid.errors import AlignmentError, UnsupportedKindError
from walkgrid.fields import ComponentField, ComponentKind
from walkgrid.geoio import PointRecord, RasterLayer
from walkgrid.grid import GridSpec, Point, PolygonGeometry


class TestCorineRemap:
    @pytest.mark.parametrize("code,cls", [
        (111, 1), (112, 1), (121, 2), (124, 2), (141, 3), (142, 4),
        (211, 5), (321, 5), (512, 5), (131, 0), (999, 0),
    ])
    def test_table(self, code, cls):
        assert remap_corine(code) == LandUseClass(cls)
        assert remap_corine_array(np.array([code]))[0] == cls


class TestNdvi:
    def test_block_mean_matches_loop(self, rng):
        grid = GridSpec(0.0, 0.0, 100.0, 6, 7)
        fine_g = GridSpec(0.0, 0.0, 25.0, 24, 28)
        vals = rng.uniform(-1, 1, fine_g.shape)
        valid = rng.random(fine_g.shape) > 0.2
        valid[:4, :4] = False  # one fully missing cell
        layer = RasterLayer.from_masked(fine_g, vals, valid)
        got = ndvi_field(layer, grid)
        ref = block_mean_loop(vals.tolist(), valid.tolist(), 4, 6, 7)
        for r in range(6):
            for c in range(7):
                if ref[r][c] is None:
                    assert not got.valid()[r, c]
                else:
                    assert got.valid()[r, c]
                    assert abs(got.array()[r, c] - ref[r][c]) <= 1e-12 * max(1.0, abs(ref[r][c]))

    def test_offset_window(self):
        grid = GridSpec(100.0, 100.0, 100.0, 1, 1)
        fine = RasterLayer(GridSpec(0.0, 0.0, 50.0, 4, 4), np.arange(16, dtype=float).reshape(4, 4))
        # cell covers fine rows/cols 2..3
        assert ndvi_field(fine, grid).array()[0, 0] == np.mean([10, 11, 14, 15])

    def test_misaligned(self):
        grid = GridSpec(0.0, 0.0, 100.0, 2, 2)
        with pytest.raises(AlignmentError):
            ndvi_field(RasterLayer(GridSpec(0.0, 0.0, 30.0, 8, 8), np.zeros((8, 8))), grid)
        with pytest.raises(AlignmentError):
            ndvi_field(RasterLayer(GridSpec(10.0, 0.0, 25.0, 8, 8), np.zeros((8, 8))), grid)
        with pytest.raises(AlignmentError):
            ndvi_field(RasterLayer(GridSpec(0.0, 0.0, 25.0, 4, 4), np.zeros((4, 4))), grid)


class TestSlope:
    def test_plane(self):
        g = GridSpec(0.0, 0.0, 50.0, 5, 5)
        x = np.arange(5) * 50.0
        z = np.tile(x * 0.1, (5, 1))  # 10 % grade eastwards
        s, _ = horn_slope(RasterLayer(g, z))
        # interior pixels see the true gradient
        np.testing.assert_allclose(s[1:-1, 1:-1], math.degrees(math.atan(0.1)), rtol=1e-12)

    def test_flat_is_zero(self):
        g = GridSpec(0.0, 0.0, 50.0, 4, 4)
        s, _ = horn_slope(RasterLayer(g, np.full((4, 4), 7.0)))
        assert np.all(s == 0.0)

    def test_matches_stencil_loop(self, rng):
        fine_g = GridSpec(0.0, 0.0, 50.0, 10, 12)
        z = rng.normal(100, 20, fine_g.shape)
        valid = rng.random(fine_g.shape) > 0.1
        dem = RasterLayer.from_masked(fine_g, z, valid)
        s, ok = horn_slope(dem)
        ref = horn_slope_loop(dem.values.tolist(), valid.tolist(), 50.0)
        np.testing.assert_allclose(s[valid], np.array(ref)[valid], rtol=1e-12, atol=0)
        np.testing.assert_array_equal(ok, valid)
        field = slope_field(dem, GridSpec(0.0, 0.0, 100.0, 5, 6))
        blocks = block_mean_loop(np.array(ref).tolist(), valid.tolist(), 2, 5, 6)
        for r in range(5):
            for c in range(6):
                if blocks[r][c] is None:
                    assert not field.valid()[r, c]
                else:
                    assert abs(field.array()[r, c] - blocks[r][c]) <= 1e-12 * max(1.0, blocks[r][c])


class TestLum:
    def test_uniform_five_is_ln5(self):
        counts = np.array([[[5]], [[5]], [[5]], [[5]], [[5]]])
        h, ok = shannon_entropy(counts)
        assert ok[0, 0]
        assert abs(h[0, 0] - math.log(5)) <= 1e-12

    def test_single_class_is_zero(self):
        grid = GridSpec(0.0, 0.0, 100.0, 5, 5)
        f = lum_field(RasterLayer(grid, np.full((5, 5), 112.0)), grid)
        assert np.all(f.array() == 0.0)
        assert not np.signbit(f.array()).any()

    def test_five_classes_window(self):
        grid = GridSpec(0.0, 0.0, 100.0, 1, 5)
        codes = np.array([[112.0, 121.0, 141.0, 142.0, 211.0]])
        f = lum_field(RasterLayer(grid, codes), grid, window_radius=2)
        assert abs(f.array()[0, 2] - math.log(5)) <= 1e-12

    def test_matches_loop(self, rng):
        grid = GridSpec(0.0, 0.0, 100.0, 9, 11)
        classes = rng.integers(0, 6, grid.shape)
        for r in (0, 1, 3):
            h, ok = shannon_entropy(window_class_counts(classes, r))
            ref = entropy_loop(classes.tolist(), r)
            for i in range(grid.n_rows):
                for j in range(grid.n_cols):
                    if ref[i][j] is None:
                        assert not ok[i, j]
                    else:
                        assert abs(h[i, j] - ref[i][j]) <= 1e-12

    def test_unclassified_ignored(self):
        grid = GridSpec(0.0, 0.0, 100.0, 1, 3)
        f = lum_field(RasterLayer(grid, np.array([[999.0, 999.0, 999.0]])), grid)
        assert not f.valid().any()

    def test_needs_grid_resolution(self):
        grid = GridSpec(0.0, 0.0, 100.0, 2, 2)
        with pytest.raises(AlignmentError):
            lum_field(RasterLayer(GridSpec(0.0, 0.0, 50.0, 4, 4), np.full((4, 4), 112.0)), grid)


class TestGreenSpace:
    def test_full_and_half(self):
        grid = GridSpec(0.0, 0.0, 100.0, 1, 3)
        ring = np.array([[0, 0], [150, 0], [150, 100], [0, 100], [0, 0]], float)
        f = green_fraction_field([PolygonGeometry(ring, [], {"id": "p"})], grid)
        np.testing.assert_array_equal(f.array(), [[1.0, 0.5, 0.0]])

    def test_union_not_double_counted(self):
        grid = GridSpec(0.0, 0.0, 100.0, 1, 1)
        ring = np.array([[0, 0], [100, 0], [100, 100], [0, 100], [0, 0]], float)
        polys = [PolygonGeometry(ring, [], {"id": "a"}), PolygonGeometry(ring.copy(), [], {"id": "b"})]
        assert green_fraction_field(polys, grid).array()[0, 0] == 1.0

    def test_against_shapely_samples(self, rng):
        grid = GridSpec(0.0, 0.0, 100.0, 8, 8)
        n = 10
        polys, refs = [], []
        for _ in range(4):
            cx, cy = rng.uniform(100, 700, 2)
            ang = np.linspace(0, 2 * np.pi, 9)[:-1]
            rad = rng.uniform(80, 250, 8)
            ring = np.column_stack([cx + rad * np.cos(ang), cy + rad * np.sin(ang)])
            ring = np.vstack([ring, ring[:1]])
            polys.append(PolygonGeometry(ring, [], {"id": "g"}))
            refs.append(Polygon(ring))
        union = shapely.union_all(refs)
        f = green_fraction_field(polys, grid, supersample=n)
        step = 100.0 / n
        for r in range(8):
            for c in range(8):
                xs = c * 100 + (np.arange(n) + 0.5) * step
                ys = r * 100 + (np.arange(n) + 0.5) * step
                X, Y = np.meshgrid(xs, ys)
                inside = shapely.contains(union, shapely.points(X.ravel(), Y.ravel())).sum()
                assert f.array()[r, c] == inside / (n * n)


class TestTransit:
    def test_counts(self):
        grid = GridSpec(0.0, 0.0, 100.0, 2, 2)
        stops = [PointRecord(Point(10, 10), "bus"), PointRecord(Point(20, 20), "tram"),
                 PointRecord(Point(150, 150), "bus"), PointRecord(Point(500, 500), "bus")]
        np.testing.assert_array_equal(pt_field(stops, grid).array(), [[2, 0], [0, 1]])

    def test_empty(self):
        grid = GridSpec(0.0, 0.0, 100.0, 2, 2)
        assert pt_field([], grid).array().sum() == 0


class TestPerCapita:
    def test_floor_at_one(self):
        grid = GridSpec(0.0, 0.0, 100.0, 1, 3)
        f = ComponentField(ComponentKind.SWL, RasterLayer(grid, np.array([[100.0, 100.0, 100.0]])))
        pop = RasterLayer(grid, np.array([[0.0, 0.5, 4.0]]))
        np.testing.assert_array_equal(per_capita(f, pop).array(), [[100.0, 100.0, 25.0]])

    @pytest.mark.parametrize("kind", ["NDVI", "SLOPE", "LUM", "ISO"])
    def test_rejects_other_kinds(self, kind):
        grid = GridSpec(0.0, 0.0, 100.0, 1, 1)
        f = ComponentField(ComponentKind(kind), RasterLayer(grid, np.ones((1, 1))))
        with pytest.raises(UnsupportedKindError):
            per_capita(f, RasterLayer(grid, np.ones((1, 1))))
