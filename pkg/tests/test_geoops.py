"""Summarizers: buffered/polygon extraction, area-weighted transfer,
exponential-decay sums, nearest distance."""

import math
import random

import numpy as np
import pytest

from gridchop.dataio import Feature, FeatureSet
from gridchop.errors import InvalidParameterError, UnsupportedGeometryError
from gridchop.geom import Point, Polyline, buffer_point, make_polygon, polygon_area
from gridchop.geoops import (
    SedcParams,
    extract_at,
    freq_column,
    freq_sort_key,
    nearest_distance,
    polygon_intersection_area,
    summarize_aw,
    summarize_sedc,
)
from gridchop.raster import Raster


def rect(x0, y0, x1, y1):
    return make_polygon([[Point(x0, y0), Point(x1, y0), Point(x1, y1), Point(x0, y1)]])


def points_fs(coords, values=None):
    feats = []
    for i, (x, y) in enumerate(coords):
        attrs = {"v": float(values[i])} if values is not None else {}
        feats.append(Feature(f"p{i}", Point(float(x), float(y)), attrs))
    return FeatureSet(feats, ["v"] if values is not None else [])


def const_raster(n, value, kind="continuous"):
    return Raster(n, n, 0.0, 0.0, 1.0, -9999.0, np.full((n, n), float(value)), kind)


class TestExtractAtPoints:
    def test_value_under_point(self):
        vals = np.arange(16, dtype=float).reshape(4, 4)  # row 0 = top
        r = Raster(4, 4, 0.0, 0.0, 1.0, -9999.0, vals)
        t = extract_at(r, points_fs([(0.5, 3.5), (3.5, 0.5)]))
        assert t.rows[0]["value"] == 0.0
        assert t.rows[1]["value"] == 15.0

    def test_point_outside_is_null(self):
        t = extract_at(const_raster(2, 5.0), points_fs([(10.0, 10.0)]))
        assert t.rows[0]["value"] is None
        assert t.rows[0]["count"] == 0.0

    def test_nodata_is_null(self):
        vals = np.array([[-9999.0]])
        r = Raster(1, 1, 0.0, 0.0, 1.0, -9999.0, vals)
        t = extract_at(r, points_fs([(0.5, 0.5)]))
        assert t.rows[0]["value"] is None

    def test_buffer_mean_constant_raster(self):
        t = extract_at(const_raster(10, 5.0), points_fs([(5.0, 5.0)]), radius=2.0)
        assert t.rows[0]["mean"] == pytest.approx(5.0, abs=1e-12)

    def test_buffer_count_is_polygon_area(self):
        # coverage-weighted count over a constant raster = buffer area / cs^2
        t = extract_at(
            const_raster(20, 1.0), points_fs([(10.0, 10.0)]), radius=3.0, stat="count",
            segments=32,
        )
        area = polygon_area(buffer_point(Point(10, 10), 3.0, 32))
        assert t.rows[0]["count"] == pytest.approx(area, rel=1e-9)

    def test_buffer_stats_vs_direct_zonal(self):
        # batched windowed path equals the one-polygon coverage path
        from gridchop.raster import StatSpec, coverage_fractions, zonal_stat

        rng = np.random.default_rng(42)
        vals = rng.uniform(0, 10, (30, 30))
        r = Raster(30, 30, 0.0, 0.0, 1.0, -9999.0, vals)
        pts = [(rng.uniform(5, 25), rng.uniform(5, 25)) for _ in range(20)]
        for stat in ("mean", "sum", "min", "max", "stdev"):
            t = extract_at(r, points_fs(pts), radius=2.5, stat=stat, segments=16)
            for i, (x, y) in enumerate(pts):
                poly = buffer_point(Point(x, y), 2.5, 16)
                want = zonal_stat(r, coverage_fractions(r, poly), StatSpec(stat)).value
                assert t.rows[i][stat] == pytest.approx(want, rel=1e-9), stat

    def test_frequency_columns(self):
        vals = np.array([[1.0, 1.0], [1.0, 3.0]])
        r = Raster(2, 2, 0.0, 0.0, 1.0, -9999.0, vals, kind="categorical")
        t = extract_at(r, [rect(0, 0, 2, 2)] and FeatureSet(
            [Feature("a", rect(0, 0, 2, 2))]), stat="frequency")
        row = t.rows[0]
        assert row["freq_1"] == pytest.approx(3.0)
        assert row["freq_3"] == pytest.approx(1.0)
        assert t.columns.index("freq_1") < t.columns.index("freq_3")

    def test_frequency_requires_categorical(self):
        with pytest.raises(InvalidParameterError):
            extract_at(const_raster(2, 1.0), points_fs([(0.5, 0.5)]), stat="frequency")

    def test_lines_rejected(self):
        fs = FeatureSet([Feature("l", Polyline([Point(0, 0), Point(1, 1)]))])
        with pytest.raises(UnsupportedGeometryError):
            extract_at(const_raster(2, 1.0), fs)

    def test_buffered_polygon_rejected(self):
        fs = FeatureSet([Feature("a", rect(0, 0, 1, 1))])
        with pytest.raises(InvalidParameterError):
            extract_at(const_raster(2, 1.0), fs, radius=1.0)


class TestExtractAtPolygons:
    def test_full_extent_mean(self):
        vals = np.array([[1.0, 2.0], [3.0, 4.0]])
        r = Raster(2, 2, 0.0, 0.0, 1.0, -9999.0, vals)
        t = extract_at(r, FeatureSet([Feature("a", rect(0, 0, 2, 2))]), stat="mean")
        assert t.rows[0]["mean"] == pytest.approx(2.5, abs=1e-12)
        assert t.rows[0]["count"] == pytest.approx(4.0, abs=1e-12)


class TestFreqColumns:
    def test_naming_and_sorting(self):
        assert freq_column(3.0) == "freq_3"
        assert freq_column(2.5) == "freq_2.5"
        cols = sorted(["freq_10", "freq_2", "freq_-1"], key=freq_sort_key)
        assert cols == ["freq_-1", "freq_2", "freq_10"]


class TestPolygonIntersectionArea:
    def test_identity_is_exact(self):
        p = rect(0.3, 0.7, 2.9, 3.1)
        assert polygon_intersection_area(p, p) == polygon_area(p)

    def test_disjoint(self):
        assert polygon_intersection_area(rect(0, 0, 1, 1), rect(5, 5, 6, 6)) == 0.0

    def test_partial_overlap(self):
        a = rect(0, 0, 2, 2)
        b = rect(1, 1, 3, 3)
        assert polygon_intersection_area(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_non_convex_vs_shapely_style_decomposition(self):
        # L-shape against a square, checked by decomposing the L by hand
        l_shape = make_polygon(
            [[Point(0, 0), Point(3, 0), Point(3, 1), Point(1, 1), Point(1, 3), Point(0, 3)]]
        )
        got = polygon_intersection_area(l_shape, rect(0.5, 0.5, 2.0, 2.0))
        # overlap = [0.5,2.0]x[0.5,1.0] plus [0.5,1.0]x[1.0,2.0]
        assert got == pytest.approx(1.5 * 0.5 + 0.5 * 1.0, abs=1e-12)

    def test_hole_excluded(self):
        outer = [Point(0, 0), Point(4, 0), Point(4, 4), Point(0, 4)]
        hole = [Point(1, 1), Point(3, 1), Point(3, 3), Point(1, 3)]
        donut = make_polygon([outer, hole])
        got = polygon_intersection_area(donut, rect(0, 0, 4, 2))
        assert got == pytest.approx(8.0 - 2.0, abs=1e-12)


class TestSummarizeAw:
    def test_identical_target_source(self):
        src = FeatureSet([Feature("s", rect(0, 0, 2, 3), {"pop": 42.0})], ["pop"])
        tgt = FeatureSet([Feature("t", rect(0, 0, 2, 3))])
        for stat in ("mean", "sum"):
            t = summarize_aw(tgt, src, ["pop"], stat=stat)
            assert t.rows[0][f"pop_{stat}"] == pytest.approx(42.0, abs=1e-12)
            assert t.rows[0]["coverage"] == pytest.approx(1.0, abs=1e-12)

    def test_half_half_mean(self):
        src = FeatureSet(
            [
                Feature("a", rect(0, 0, 1, 2), {"v": 0.0}),
                Feature("b", rect(1, 0, 2, 2), {"v": 10.0}),
            ],
            ["v"],
        )
        tgt = FeatureSet([Feature("t", rect(0, 0, 2, 2))])
        t = summarize_aw(tgt, src, ["v"], stat="mean")
        assert t.rows[0]["v_mean"] == pytest.approx(5.0, abs=1e-12)

    def test_sum_conservation_random_tilings(self):
        rng = random.Random(7)
        for _ in range(10):
            # random axis-aligned tiling of [0,6]x[0,4] for both sides
            def tiling(prefix, nx, ny, values):
                xb = sorted({0.0, 6.0, *(rng.uniform(0.5, 5.5) for _ in range(nx - 1))})
                yb = sorted({0.0, 4.0, *(rng.uniform(0.5, 3.5) for _ in range(ny - 1))})
                feats = []
                k = 0
                for x0, x1 in zip(xb, xb[1:]):
                    for y0, y1 in zip(yb, yb[1:]):
                        attrs = {"v": values[k % len(values)]} if values else {}
                        feats.append(Feature(f"{prefix}{k}", rect(x0, y0, x1, y1), attrs))
                        k += 1
                return FeatureSet(feats, ["v"] if values else [])

            vals = [rng.uniform(-5, 5) for _ in range(97)]
            sources = tiling("s", 4, 3, vals)
            targets = tiling("t", 3, 4, None)
            t = summarize_aw(targets, sources, ["v"], stat="sum")
            total = sum(row["v_sum"] for row in t.rows)
            want = sum(float(f.attributes["v"]) for f in sources.features)
            assert total == pytest.approx(want, rel=1e-9)

    def test_no_overlap_null_row(self):
        src = FeatureSet([Feature("s", rect(10, 10, 11, 11), {"v": 1.0})], ["v"])
        tgt = FeatureSet([Feature("t", rect(0, 0, 1, 1))])
        t = summarize_aw(tgt, src, ["v"])
        assert t.rows[0]["v_mean"] is None
        assert t.rows[0]["coverage"] == 0.0

    def test_bad_stat(self):
        tgt = FeatureSet([Feature("t", rect(0, 0, 1, 1))])
        with pytest.raises(InvalidParameterError):
            summarize_aw(tgt, tgt, [], stat="median")


class TestSummarizeSedc:
    def test_coincident_source_weight_one(self):
        tgt = points_fs([(0, 0)])
        src = points_fs([(0, 0)], values=[7.0])
        t = summarize_sedc(tgt, src, SedcParams(bandwidth=1.0, value_columns=("v",)))
        assert t.rows[0]["v_sedc"] == pytest.approx(7.0, abs=1e-12)
        assert t.rows[0]["count"] == 1

    def test_weight_at_bandwidth(self):
        tgt = points_fs([(0, 0)])
        src = points_fs([(2.0, 0)], values=[1.0])
        t = summarize_sedc(tgt, src, SedcParams(bandwidth=2.0, value_columns=("v",)))
        assert t.rows[0]["v_sedc"] == pytest.approx(math.exp(-3.0), abs=1e-9)

    def test_cutoff_beyond_maxdist(self):
        tgt = points_fs([(0, 0)])
        src = points_fs([(100.0, 0)], values=[5.0])
        t = summarize_sedc(tgt, src, SedcParams(bandwidth=1.0, value_columns=("v",)))
        assert t.rows[0]["v_sedc"] == 0.0
        assert t.rows[0]["count"] == 0

    def test_maxdist_defaults_to_twice_bandwidth(self):
        p = SedcParams(bandwidth=3.0)
        assert p.maxdist == 6.0
        with pytest.raises(InvalidParameterError):
            SedcParams(bandwidth=3.0, maxdist=2.0)
        with pytest.raises(InvalidParameterError):
            SedcParams(bandwidth=0.0)

    def test_multiple_columns_and_sources(self):
        tgt = points_fs([(0, 0)])
        feats = [
            Feature("s0", Point(1.0, 0.0), {"a": 2.0, "b": 10.0}),
            Feature("s1", Point(0.0, 1.0), {"a": 4.0, "b": 20.0}),
        ]
        src = FeatureSet(feats, ["a", "b"])
        t = summarize_sedc(tgt, src, SedcParams(bandwidth=1.0, value_columns=("a", "b")))
        w = math.exp(-3.0)
        assert t.rows[0]["a_sedc"] == pytest.approx(6.0 * w, rel=1e-12)
        assert t.rows[0]["b_sedc"] == pytest.approx(30.0 * w, rel=1e-12)


class TestNearestDistance:
    def test_point_to_horizontal_line(self):
        lines = FeatureSet([Feature("l", Polyline([Point(-10, 0), Point(10, 0)]))])
        t = nearest_distance(points_fs([(0, 5)]), lines)
        assert t.rows[0]["distance"] == 5.0
        assert t.rows[0]["nearest_feature_id"] == "l"

    def test_coincident_with_vertex(self):
        lines = FeatureSet([Feature("l", Polyline([Point(1, 1), Point(2, 2)]))])
        t = nearest_distance(points_fs([(1, 1)]), lines)
        assert t.rows[0]["distance"] == 0.0

    def test_brute_force_oracle_exact(self):
        # same arithmetic as the scalar helper: equality must be exact
        from gridchop.geom import point_segment_distance

        rng = random.Random(88)
        lines = FeatureSet(
            [
                Feature(
                    f"l{i}",
                    Polyline(
                        [
                            Point(rng.uniform(0, 100), rng.uniform(0, 100)),
                            Point(rng.uniform(0, 100), rng.uniform(0, 100)),
                        ]
                    ),
                )
                for i in range(50)
            ]
        )
        pts = [(rng.uniform(0, 100), rng.uniform(0, 100)) for _ in range(1000)]
        t = nearest_distance(points_fs(pts), lines)
        for i, (x, y) in enumerate(pts):
            best = min(
                point_segment_distance(
                    Point(x, y), f.geometry.vertices[0], f.geometry.vertices[1]
                )
                for f in lines.features
            )
            assert t.rows[i]["distance"] == best  # bitwise

    def test_point_context(self):
        ctx = points_fs([(0, 0), (10, 0)])
        t = nearest_distance(points_fs([(1, 0)]), ctx)
        assert t.rows[0]["distance"] == 1.0
        assert t.rows[0]["nearest_feature_id"] == "p0"
