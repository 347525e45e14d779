import math

import numpy as np
import pytest

from gridchop import (
    BBox,
    CellWindow,
    InvalidParameterError,
    Point,
    Raster,
    StatSpec,
    buffer_point,
    coverage_fractions,
    polygon_area,
    value_at_point,
    window_for_bbox,
    zonal_stat,
)

from conftest import square, star_polygon


def grid(n=4, values=None, kind="continuous", nodata=-9999.0):
    if values is None:
        values = np.arange(n * n, dtype=float).reshape(n, n)
    return Raster(n, n, 0.0, 0.0, 1.0, nodata, values, kind)


def mc_fraction_oracle(r, poly, row, col, sub=256):
    """Supersampling oracle: fraction of sub*sub cell-interior sample points
    inside the polygon (even-odd crossing count, vectorized)."""
    cs = r.cellsize
    x0 = r.xll + col * cs
    y0 = r.ytop - (row + 1) * cs
    t = (np.arange(sub) + 0.5) / sub * cs
    xs, ys = np.meshgrid(x0 + t, y0 + t)
    xs = xs.ravel()
    ys = ys.ravel()
    inside = np.zeros(xs.size, dtype=int)
    for ring in [poly.outer, *poly.holes]:
        verts = ring.vertices
        n = len(verts)
        for i in range(n):
            a, b = verts[i], verts[(i + 1) % n]
            crosses = (a.y > ys) != (b.y > ys)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = a.x + (ys - a.y) * (b.x - a.x) / (b.y - a.y)
            inside += np.where(crosses & (xc > xs), 1, 0)
    return float(np.mean(inside % 2))


class TestWindowForBBox:
    def test_full_extent(self):
        r = grid()
        assert window_for_bbox(r, r.extent()) == CellWindow(0, 0, 4, 4)

    def test_inside_one_cell(self):
        r = grid()
        assert window_for_bbox(r, BBox(1.2, 1.2, 1.8, 1.8)) == CellWindow(2, 1, 1, 1)

    def test_disjoint(self):
        r = grid()
        assert window_for_bbox(r, BBox(10, 10, 11, 11)).empty


class TestCoverageFractions:
    def test_exact_cell_rectangle(self):
        r = grid()
        cells = coverage_fractions(r, square(1.0, 1.0, 1.0))
        assert len(cells) == 1
        c = cells[0]
        assert (c.row, c.col, c.fraction) == (2, 1, 1.0)

    def test_half_cell(self):
        from gridchop import Polygon, Ring

        # Left half of cell (row 2, col 1): [1, 1.5] x [1, 2].
        half = Polygon(
            Ring([Point(1, 1), Point(1.5, 1), Point(1.5, 2), Point(1, 2)])
        )
        cells = coverage_fractions(grid(), half)
        assert len(cells) == 1
        assert (cells[0].row, cells[0].col) == (2, 1)
        assert cells[0].fraction == pytest.approx(0.5)

    def test_circle_on_cell_corner_vs_mc_oracle(self):
        r = grid(8)
        poly = buffer_point(Point(4.0, 4.0), 1.5, 64)
        cells = coverage_fractions(r, poly)
        assert cells, "circle must cover cells"
        for c in cells:
            oracle = mc_fraction_oracle(r, poly, c.row, c.col)
            assert c.fraction == pytest.approx(oracle, abs=2e-3)

    def test_conservation(self, rng):
        r = grid(10)
        for _ in range(20):
            poly = star_polygon(
                rng.uniform(3, 7), rng.uniform(3, 7), rng.uniform(1, 2.5), rng.uniform(0.4, 0.9)
            )
            cells = coverage_fractions(r, poly)
            total = sum(c.fraction for c in cells) * r.cellsize**2
            assert total == pytest.approx(polygon_area(poly), rel=1e-9)

    def test_axis_aligned_exactness(self):
        r = grid()
        cells = coverage_fractions(r, square(1.0, 0.0, 3.0))
        assert all(c.fraction == 1.0 for c in cells)
        assert len(cells) == 9

    def test_window_cropping_transparency(self):
        # Fractions are a function of the cell and the polygon alone, so the
        # same cells come back regardless of raster extent around them.
        poly = star_polygon(2.0, 2.0, 1.4, 0.5)
        small = grid(4)
        big = Raster(8, 8, -2.0, -2.0, 1.0, -9999.0, np.zeros((8, 8)))
        got_small = {(c.row, c.col): c.fraction for c in coverage_fractions(small, poly)}
        got_big = {
            (c.row - 2, c.col - 2): c.fraction for c in coverage_fractions(big, poly)
        }
        shared = {k: v for k, v in got_big.items() if 0 <= k[0] < 4 and 0 <= k[1] < 4}
        assert got_small == shared


class TestZonalStat:
    def test_constant_mean(self):
        r = grid(4, np.full((4, 4), 5.0))
        cells = coverage_fractions(r, square(0, 0, 4.0))
        assert zonal_stat(r, cells, StatSpec("mean")).value == 5.0

    def test_plain_average(self):
        r = grid(2, np.array([[1.0, 2.0], [3.0, 4.0]]))
        cells = coverage_fractions(r, square(0, 0, 2.0))
        res = zonal_stat(r, cells, StatSpec("mean"))
        assert res.value == 2.5
        assert res.count == 4.0

    def test_frequency(self):
        r = grid(2, np.array([[7.0, 7.0], [7.0, 9.0]]), kind="categorical")
        cells = coverage_fractions(r, square(0, 0, 2.0))
        res = zonal_stat(r, cells, StatSpec("frequency"))
        assert res.frequency == {7.0: 3.0, 9.0: 1.0}
        assert sum(res.frequency.values()) == res.count

    def test_nodata_excluded(self):
        vals = np.array([[1.0, -9999.0], [3.0, 5.0]])
        r = grid(2, vals)
        cells = coverage_fractions(r, square(0, 0, 2.0))
        res = zonal_stat(r, cells, StatSpec("mean"))
        assert res.value == pytest.approx(3.0)
        assert res.count == 3.0

    def test_all_nodata_null(self):
        r = grid(2, np.full((2, 2), -9999.0))
        cells = coverage_fractions(r, square(0, 0, 2.0))
        res = zonal_stat(r, cells, StatSpec("mean"))
        assert res.value is None
        assert res.count == 0.0

    def test_stdev_population(self):
        r = grid(2, np.array([[1.0, 2.0], [3.0, 4.0]]))
        cells = coverage_fractions(r, square(0, 0, 2.0))
        res = zonal_stat(r, cells, StatSpec("stdev"))
        assert res.value == pytest.approx(math.sqrt(1.25))

    def test_min_max_and_mean_bounds(self, rng):
        r = grid(6, np.array([[rng.uniform(0, 10) for _ in range(6)] for _ in range(6)]))
        poly = star_polygon(3.0, 3.0, 2.5, 1.0)
        cells = coverage_fractions(r, poly)
        lo = zonal_stat(r, cells, StatSpec("min")).value
        hi = zonal_stat(r, cells, StatSpec("max")).value
        mu = zonal_stat(r, cells, StatSpec("mean")).value
        assert lo <= mu <= hi

    def test_frequency_requires_categorical(self):
        r = grid(2)
        with pytest.raises(InvalidParameterError):
            zonal_stat(r, coverage_fractions(r, square(0, 0, 2.0)), StatSpec("frequency"))


class TestValueAtPoint:
    def test_cell_center(self):
        r = grid()
        assert value_at_point(r, Point(1.5, 3.5)) == 1.0  # row 0, col 1

    def test_outside(self):
        r = grid()
        assert value_at_point(r, Point(-1, -1)) is None

    def test_half_open_vertical_edge(self):
        # On an interior vertical edge the cell to the right wins.
        r = grid()
        assert value_at_point(r, Point(2.0, 3.5)) == 2.0  # col 2, not col 1

    def test_nodata_is_none(self):
        vals = np.full((2, 2), -9999.0)
        assert value_at_point(grid(2, vals), Point(0.5, 0.5)) is None
