import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from artquant.errors import GeometryError
from artquant.features import (
    FeatureConfig,
    FeatureVector,
    SsimParams,
    extract_features,
    hue_value,
    hue_values,
    lateral_ssim,
    pixel_value,
    population_variance,
    variance_of_color,
    variance_of_line,
    variance_of_shape,
    variance_of_space,
    variance_of_value,
)
from artquant.raster import EdgeMap, GrayRaster, RgbRaster

rgb_grids = arrays(np.uint8, st.tuples(st.integers(1, 8), st.integers(2, 8), st.just(3)))


def close(a, b, rel=1e-12):
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-30)


def constant(w, h, rgb):
    return RgbRaster(np.tile(np.array(rgb, dtype=np.uint8), (h, w, 1)))


def halves(w, h, left, right):
    arr = np.zeros((h, w, 3), dtype=np.uint8)
    arr[:, : w // 2] = left
    arr[:, w // 2 :] = right
    return RgbRaster(arr)


def test_ssim_constants():
    p = SsimParams()
    assert p.c1 == pytest.approx(6.5536, abs=1e-12)
    assert p.c2 == pytest.approx(58.9824, abs=1e-12)


def test_population_variance_constant_is_exact_zero():
    assert population_variance(np.full(17, 0.1)) == 0.0
    assert population_variance([3.0]) == 0.0


class TestLine:
    def test_all_zero_and_all_one(self):
        assert variance_of_line(EdgeMap(np.zeros((3, 4), np.uint8))) == 0
        assert variance_of_line(EdgeMap(np.ones((3, 4), np.uint8))) == 0

    def test_quarter_ones(self):
        flags = np.zeros(100, np.uint8)
        flags[:25] = 1
        assert variance_of_line(EdgeMap(flags.reshape(10, 10))) == pytest.approx(0.1875, abs=1e-15)

    def test_std_dev_mode(self):
        flags = np.zeros(100, np.uint8)
        flags[:25] = 1
        cfg = FeatureConfig(statistic_mode="std_dev")
        assert variance_of_line(EdgeMap(flags.reshape(10, 10)), cfg) == pytest.approx(math.sqrt(0.1875))


class TestHue:
    @pytest.mark.parametrize(
        "px, expected",
        [
            ((255, 0, 0), 0.0),
            ((0, 255, 0), 120.0),
            ((0, 0, 255), 240.0),
            ((255, 255, 0), 60.0),
            ((0, 255, 255), 180.0),
            ((255, 0, 255), 300.0),
            ((255, 0, 1), 360.0 - 60.0 / 255),
        ],
    )
    def test_known_hues(self, px, expected):
        assert hue_value(px) == pytest.approx(expected, abs=1e-12)

    def test_gray_undefined(self):
        assert hue_value((128, 128, 128)) is None

    @given(st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)))
    def test_range_and_oracle(self, px):
        h = hue_value(px)
        ref = oracles.hue(px)
        if ref is None:
            assert h is None
        else:
            assert 0 <= h < 360
            assert h == pytest.approx(ref, abs=1e-12)

    @given(rgb_grids)
    @settings(max_examples=50, deadline=None)
    def test_vectorised_matches_scalar(self, arr):
        img = RgbRaster(arr)
        h = hue_values(img)
        for y in range(img.height):
            for x in range(img.width):
                s = hue_value(img.pixel(x, y))
                assert (s is None and np.isnan(h[y, x])) or s == h[y, x]


class TestColor:
    def test_all_red(self):
        assert variance_of_color(constant(4, 3, (255, 0, 0))) == 0

    def test_all_gray(self):
        assert variance_of_color(constant(4, 3, (90, 90, 90))) == 0

    def test_red_and_cyan(self):
        assert variance_of_color(halves(4, 4, (255, 0, 0), (0, 255, 255))) == pytest.approx(0.0625, abs=1e-15)

    def test_gray_pixels_excluded(self):
        arr = np.zeros((1, 3, 3), np.uint8)
        arr[0, 0] = (255, 0, 0)
        arr[0, 1] = (0, 255, 255)
        arr[0, 2] = (40, 40, 40)
        assert variance_of_color(RgbRaster(arr)) == pytest.approx(0.0625)

    def test_monotone_in_distinct_hues(self):
        # k hues roughly 30 degrees apart, one pixel each
        values = []
        for k in range(1, 8):
            arr = np.array([[_rgb_for_hue(30 * i) for i in range(k)]], dtype=np.uint8)
            values.append(variance_of_color(RgbRaster(arr)))
        assert values[0] == 0
        assert values == sorted(values)
        last = [[_rgb_for_hue(30 * i) for i in range(7)]]
        assert values[-1] == pytest.approx(oracles.v_color(last), rel=1e-12)
        assert values[-1] == pytest.approx((30 / 360) ** 2 * 48 / 12, rel=1e-3)

    def test_dispersion_monotone_in_spread(self):
        # two hue clusters moving apart: variance non-decreasing
        values = []
        for deg in range(0, 181, 20):
            arr = np.array([[(255, 0, 0), _rgb_for_hue(deg)]], dtype=np.uint8)
            values.append(variance_of_color(RgbRaster(arr)))
        assert values == sorted(values)


def _rgb_for_hue(deg):
    """Fully saturated pixel at approximately ``deg`` degrees."""
    sector = int(deg // 60) % 6
    f = (deg % 60) / 60
    up, down = round(255 * f), round(255 * (1 - f))
    return [
        (255, up, 0),
        (down, 255, 0),
        (0, 255, up),
        (0, down, 255),
        (up, 0, 255),
        (255, 0, down),
    ][sector]


class TestValue:
    def test_white_black(self):
        assert pixel_value((255, 255, 255)) == 1.0
        assert pixel_value((0, 0, 0)) == 0.0

    def test_red(self):
        assert pixel_value((255, 0, 0)) == pytest.approx(0.5154, abs=1e-4)
        assert pixel_value((255, 0, 0)) == pytest.approx(math.sqrt(1 / (1 + 1.5**2.2 + 0.6**2.2)), rel=1e-15)

    @given(st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)))
    def test_bounded_and_oracle(self, px):
        v = pixel_value(px)
        assert 0 <= v <= 1
        assert v == pytest.approx(oracles.value(px), rel=1e-12)

    def test_variance_fixtures(self):
        assert variance_of_value(constant(3, 3, (10, 200, 30))) == 0
        assert variance_of_value(halves(4, 2, (255, 255, 255), (0, 0, 0))) == pytest.approx(0.25, abs=1e-15)
        assert variance_of_value(constant(1, 1, (1, 2, 3))) == 0

    def test_monotone_in_contrast(self):
        values = [
            variance_of_value(halves(4, 2, (128 + d,) * 3, (128 - d,) * 3)) for d in range(0, 128, 16)
        ]
        assert values == sorted(values)


class TestSpace:
    def test_single_and_none(self):
        flags = np.zeros((5, 5), np.uint8)
        assert variance_of_space(EdgeMap(flags)) == 0
        flags[2, 3] = 1
        assert variance_of_space(EdgeMap(flags)) == 0

    def test_row_fixture(self):
        flags = np.zeros((10, 10), np.uint8)
        flags[4, :] = 1
        assert variance_of_space(EdgeMap(flags)) == pytest.approx(0.04125, rel=1e-12)

    def test_count_normalisation(self):
        flags = np.zeros((10, 10), np.uint8)
        flags[4, :] = 1
        cfg = FeatureConfig(normalize_space_by_count=True)
        # 0.825 / (2 * 10 edge pixels)
        assert variance_of_space(EdgeMap(flags), cfg) == pytest.approx(0.04125, rel=1e-12)
        flags[5, :] = 1
        # x: 2 * 0.825 = 1.65; y: 20 * 0.0025 = 0.05; divided by 2 * 20
        assert variance_of_space(EdgeMap(flags), cfg) == pytest.approx(1.7 / 40, rel=1e-12)

    def test_monotone_in_spread(self):
        values = []
        for gap in range(1, 9):
            flags = np.zeros((10, 10), np.uint8)
            flags[5, 0] = 1
            flags[5, gap] = 1
            values.append(variance_of_space(EdgeMap(flags)))
        assert values == sorted(values)


class TestShape:
    def test_mirror_symmetric_is_one(self):
        g = np.array([[10.0, 50.0, 90.0, 50.0, 10.0], [0.0, 255.0, 3.0, 255.0, 0.0]])
        assert lateral_ssim(GrayRaster(g)) == pytest.approx(1.0, abs=1e-9)
        assert variance_of_shape(GrayRaster(g)) == pytest.approx(0.001, abs=1e-15)

    def test_luminance_collapse(self):
        g = np.zeros((3, 6))
        g[:, 3:] = 255
        expected = 6.5536 / (65025 + 6.5536)
        assert lateral_ssim(GrayRaster(g)) == pytest.approx(expected, abs=1e-12)
        assert lateral_ssim(GrayRaster(g)) == pytest.approx(1.0078e-4, abs=1e-7)
        assert variance_of_shape(GrayRaster(g)) == 1.0

    def test_constant(self):
        g = GrayRaster(np.full((4, 5), 93.2))
        assert lateral_ssim(g) == 1.0
        assert variance_of_shape(g) == 0.001

    def test_narrow_raises(self):
        with pytest.raises(GeometryError):
            lateral_ssim(GrayRaster([[1.0], [2.0]]))

    def test_odd_width_drops_middle(self):
        g = np.array([[1.0, 2.0, 200.0, 2.0, 1.0]])
        assert lateral_ssim(GrayRaster(g)) == 1.0

    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 9)), elements=st.floats(0, 255)))
    @settings(max_examples=100, deadline=None)
    def test_bounds_and_mirror(self, g):
        s = lateral_ssim(GrayRaster(g))
        assert -1 - 1e-12 <= s <= 1 + 1e-12
        assert variance_of_shape(GrayRaster(g[:, ::-1])) == variance_of_shape(GrayRaster(g))
        v = variance_of_shape(GrayRaster(g))
        assert 0 < v <= 1
        assert s == pytest.approx(oracles.ssim_halves(g.tolist()), rel=1e-9, abs=1e-12)


class TestExtract:
    def test_constant_mid_gray(self):
        fv = extract_features(constant(7, 5, (128, 128, 128)))
        assert fv.measures() == (0.0, 0.0, 0.0, 0.001, 0.0)
        assert (fv.width, fv.height) == (7, 5)

    def test_deterministic(self):
        arr = np.random.default_rng(5).integers(0, 256, (40, 50, 3), dtype=np.uint8)
        assert extract_features(RgbRaster(arr)) == extract_features(RgbRaster(arr))

    def test_metadata(self):
        img = RgbRaster(np.zeros((20, 40, 3), np.uint8), "abc")
        cfg = FeatureConfig(resize_max_dim=10)
        fv = extract_features(img, cfg)
        assert (fv.source_id, fv.width, fv.height) == ("abc", 10, 5)
        assert fv.config_fingerprint == cfg.fingerprint()
        assert FeatureConfig(resize_max_dim=11).fingerprint() != cfg.fingerprint()

    def test_custom_ssim_params_change_fingerprint(self):
        img = constant(4, 4, (1, 2, 3))
        assert extract_features(img, params=SsimParams(k1=0.02)).config_fingerprint != \
            extract_features(img).config_fingerprint

    def test_narrow_image(self):
        with pytest.raises(GeometryError):
            extract_features(constant(1, 5, (1, 2, 3)))

    @given(rgb_grids)
    @settings(max_examples=60, deadline=None)
    def test_bounds_and_oracles(self, arr):
        img = RgbRaster(arr)
        fv = extract_features(img)
        assert all(math.isfinite(v) and v >= 0 for v in fv.measures())
        assert fv.v_line <= 0.25 and fv.v_value <= 0.25 and fv.v_color <= 0.25
        assert 0 < fv.v_shape <= 1
        px = oracles.rows(arr)
        gray = [[oracles.gray(p) for p in row] for row in px]
        edges = oracles.sobel_edges(gray, 80.0)
        assert close(fv.v_line, oracles.v_line(edges))
        assert close(fv.v_color, oracles.v_color(px))
        assert close(fv.v_value, oracles.v_value(px))
        assert close(fv.v_space, oracles.v_space(edges))
        assert close(fv.v_shape, oracles.v_shape(gray))

    def test_information_quantity_is_product(self):
        fv = FeatureVector(0.1, 0.2, 0.3, 0.01, 0.05)
        assert fv.information_quantity == pytest.approx(0.1 * 0.2 * 0.3 * 0.01 * 0.05)

    def test_serialisation_roundtrip(self):
        arr = np.random.default_rng(3).integers(0, 256, (9, 9, 3), dtype=np.uint8)
        fv = extract_features(RgbRaster(arr, "x1"))
        assert FeatureVector.from_dict(fv.to_dict()) == fv
        from artquant.features import CSV_COLUMNS
        row = dict(zip(CSV_COLUMNS, fv.to_csv_row()))
        assert FeatureVector.from_csv_row(row) == fv


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"edge_threshold": 0},
            {"resize_max_dim": 0},
            {"statistic_mode": "median"},
            {"ssim_floor": 1.0},
            {"hue_scale": -1},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            FeatureConfig(**kwargs)

    def test_roundtrip_and_unknown_keys(self):
        cfg = FeatureConfig(edge_threshold=40, statistic_mode="std_dev")
        assert FeatureConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError):
            FeatureConfig.from_dict({"nope": 1})

    def test_std_dev_mode_applies_to_dispersion_measures(self):
        arr = np.random.default_rng(9).integers(0, 256, (16, 16, 3), dtype=np.uint8)
        img = RgbRaster(arr)
        var = extract_features(img)
        sd = extract_features(img, FeatureConfig(statistic_mode="std_dev"))
        for name in ("line", "color", "value"):
            assert sd.measure(name) == pytest.approx(math.sqrt(var.measure(name)), rel=1e-12)
        assert sd.v_space == var.v_space and sd.v_shape == var.v_shape
