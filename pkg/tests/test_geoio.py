import json

import numpy as np
import pytest

from walkgrid.errors import InvalidGeometryError, ParseError
from walkgrid.geoio import (
    DECILE_PALETTE,
    NODATA_RGB,
    RasterLayer,
    parse_wkt_linestring,
    read_ascii_grid,
    read_edges_csv,
    read_nodes_csv,
    read_points_csv,
    read_polygons_geojson,
    render_decile_map,
    write_ascii_grid,
)
from walkgrid.grid import GridSpec

G = GridSpec(10.0, 20.0, 25.0, 3, 4)


def _asc(tmp_path, text, name="g.asc"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestAsciiGrid:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        vals = rng.normal(size=G.shape) * 10.0 ** rng.integers(-300, 300, size=G.shape)
        vals[0, 0] = -0.0
        vals[1, 2] = 5e-324
        vals[2, 3] = -9999.0
        layer = RasterLayer(G, vals)
        p = tmp_path / "a.asc"
        write_ascii_grid(layer, p)
        back = read_ascii_grid(p)
        assert back == layer
        assert back.nodata_mask()[2, 3]
        assert back.nodata_mask().sum() == 1

    def test_north_row_first(self, tmp_path):
        vals = np.arange(12, dtype=float).reshape(3, 4)
        p = tmp_path / "n.asc"
        write_ascii_grid(RasterLayer(G, vals), p)
        lines = p.read_text().splitlines()
        assert lines[6].split() == ["8", "9", "10", "11"]
        assert read_ascii_grid(p).values[0, 0] == 0.0

    def test_header_case_insensitive(self, tmp_path):
        p = _asc(tmp_path, "NCOLS 2\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\nnodata_value -1\n1 -1\n")
        layer = read_ascii_grid(p)
        assert layer.valid_mask().tolist() == [[True, False]]

    def test_short_row_reports_line(self, tmp_path):
        p = _asc(tmp_path, "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1 2\n3\n")
        with pytest.raises(ParseError, match="line 8"):
            read_ascii_grid(p)

    def test_bad_token(self, tmp_path):
        p = _asc(tmp_path, "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1 x\n")
        with pytest.raises(ParseError, match="line 7"):
            read_ascii_grid(p)

    def test_nan_rejected(self, tmp_path):
        p = _asc(tmp_path, "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1 nan\n")
        with pytest.raises(ParseError):
            read_ascii_grid(p)

    def test_missing_header(self, tmp_path):
        p = _asc(tmp_path, "ncols 2\nnrows 1\n")
        with pytest.raises(ParseError, match="line 3"):
            read_ascii_grid(p)

    def test_row_count(self, tmp_path):
        p = _asc(tmp_path, "ncols 1\nnrows 3\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1\n2\n")
        with pytest.raises(ParseError, match="expected 3 data rows"):
            read_ascii_grid(p)


class TestCsv:
    def test_points(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("x,y,category\n1.5,2,bus\n3,4,tram\n")
        pts = read_points_csv(p)
        assert [(tuple(r.location), r.category) for r in pts] == [((1.5, 2.0), "bus"), ((3.0, 4.0), "tram")]

    def test_points_bad_row(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("x,y,category\n1,2,bus\n1,abc,bus\n")
        with pytest.raises(ParseError, match="row 2"):
            read_points_csv(p)

    def test_wrong_header(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("a,b,c\n")
        with pytest.raises(ParseError, match="header"):
            read_points_csv(p)

    def test_nodes_duplicate(self, tmp_path):
        p = tmp_path / "n.csv"
        p.write_text("id,x,y\na,0,0\na,1,1\n")
        with pytest.raises(ParseError, match="duplicate"):
            read_nodes_csv(p)

    def test_edges_geometry(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text('u,v,geometry\na,b,"LINESTRING (0 0, 3 4, 3 10)"\n')
        (e,) = read_edges_csv(p)
        assert e.length == 11.0
        assert e.coords.shape == (3, 2)

    def test_edges_length_only(self, tmp_path):
        n = tmp_path / "n.csv"
        n.write_text("id,x,y\na,0,0\nb,10,0\n")
        p = tmp_path / "e.csv"
        p.write_text("u,v,length\na,b,12.5\n")
        (e,) = read_edges_csv(p, read_nodes_csv(n))
        assert e.length == 12.5
        np.testing.assert_array_equal(e.coords, [[0, 0], [10, 0]])

    def test_edges_length_needs_nodes(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("u,v,length\na,b,1\n")
        with pytest.raises(ParseError):
            read_edges_csv(p)

    def test_edges_unknown_node(self, tmp_path):
        n = tmp_path / "n.csv"
        n.write_text("id,x,y\na,0,0\n")
        p = tmp_path / "e.csv"
        p.write_text("u,v,length\na,zz,1\n")
        with pytest.raises(ParseError, match="unknown node"):
            read_edges_csv(p, read_nodes_csv(n))

    def test_bad_wkt(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text('u,v,geometry\na,b,"POINT (0 0)"\n')
        with pytest.raises(ParseError, match="row 1"):
            read_edges_csv(p)

    def test_wkt_parser(self):
        np.testing.assert_array_equal(parse_wkt_linestring("linestring(1 2,3 4)"), [[1, 2], [3, 4]])
        with pytest.raises(ValueError):
            parse_wkt_linestring("LINESTRING (1 2)")


def _fc(*features):
    return json.dumps({"type": "FeatureCollection", "features": list(features)})


SQ = [[0, 0], [10, 0], [10, 10], [0, 10], [0, 0]]


class TestGeoJson:
    def test_polygon_with_hole(self, tmp_path):
        p = tmp_path / "p.geojson"
        hole = [[2, 2], [4, 2], [4, 4], [2, 4], [2, 2]]
        p.write_text(_fc({"type": "Feature", "properties": {"id": 7},
                          "geometry": {"type": "Polygon", "coordinates": [SQ, hole]}}))
        (poly,) = read_polygons_geojson(p)
        assert poly.id == "7"
        assert len(poly.holes) == 1

    def test_multipolygon_explodes(self, tmp_path):
        p = tmp_path / "p.geojson"
        sq2 = [[20, 0], [30, 0], [30, 10], [20, 10], [20, 0]]
        p.write_text(_fc({"type": "Feature", "properties": {"id": "m"},
                          "geometry": {"type": "MultiPolygon", "coordinates": [[SQ], [sq2]]}}))
        polys = read_polygons_geojson(p)
        assert [q.id for q in polys] == ["m", "m"]

    def test_unclosed_ring(self, tmp_path):
        p = tmp_path / "p.geojson"
        p.write_text(_fc({"type": "Feature", "properties": {"id": 1},
                          "geometry": {"type": "Polygon", "coordinates": [SQ[:-1]]}}))
        with pytest.raises(InvalidGeometryError):
            read_polygons_geojson(p)

    def test_unsupported_type(self, tmp_path):
        p = tmp_path / "p.geojson"
        p.write_text(_fc({"type": "Feature", "properties": {"id": 1},
                          "geometry": {"type": "LineString", "coordinates": [[0, 0], [1, 1]]}}))
        with pytest.raises(InvalidGeometryError, match="unsupported"):
            read_polygons_geojson(p)

    def test_missing_id(self, tmp_path):
        p = tmp_path / "p.geojson"
        p.write_text(_fc({"type": "Feature", "properties": {},
                          "geometry": {"type": "Polygon", "coordinates": [SQ]}}))
        with pytest.raises(ParseError):
            read_polygons_geojson(p)


class TestPpm:
    def test_bytes(self, tmp_path):
        g = GridSpec(0.0, 0.0, 100.0, 2, 3)
        vals = np.array([[1, 2, 3], [10, -9999.0, 5]], dtype=float)
        p = tmp_path / "d.ppm"
        render_decile_map(RasterLayer(g, vals), p)
        data = p.read_bytes()
        header = b"P6\n3 2\n255\n"
        assert data.startswith(header)
        px = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(2, 3, 3)
        # north row (row 1) first
        assert tuple(px[0, 0]) == DECILE_PALETTE[9]
        assert tuple(px[0, 1]) == NODATA_RGB
        assert tuple(px[1, 0]) == DECILE_PALETTE[0]
        assert len(set(DECILE_PALETTE)) == 10

    def test_bad_label(self, tmp_path):
        g = GridSpec(0.0, 0.0, 100.0, 1, 1)
        with pytest.raises(ValueError):
            render_decile_map(RasterLayer(g, np.array([[11.0]])), tmp_path / "x.ppm")
