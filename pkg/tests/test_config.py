import json

import numpy as np
import pytest

from lipdyn.config import config_hash, load_fixture, parse_map_config, read_config
from lipdyn.errors import CoverageGap, ParseError
from lipdyn.lipcore import AffinePieces, Iterate, LinearPlusLip, PiecewiseExpr


def test_every_shipped_fixture_parses():
    names = ["affine2x", "conj_saddle", "horseshoe", "linear_saddle", "logistic", "piecewise_logistic",
             "piecewise_logistic_literal", "four_piece", "cubic", "four_piece_sink", "sin_saddle", "single_strip", "x_cos_ln"]
    for name in names:
        assert load_fixture(name).dim in (1, 2)


def test_kinds_build_the_right_maps():
    assert isinstance(load_fixture("logistic"), PiecewiseExpr)
    assert isinstance(load_fixture("sin_saddle"), LinearPlusLip)
    assert isinstance(load_fixture("horseshoe"), AffinePieces)
    it = parse_map_config(json.dumps({"kind": "iterate", "k": 2, "inner": json.loads(
        '{"dim": 1, "domain": {"center": [0.5], "radius": 0.5}, "pieces": [{"expr": ["3.3*x*(1-x)"]}]}')}))
    assert isinstance(it, Iterate)
    assert it(np.array([0.3]))[0] == pytest.approx(3.3 * 0.693 * (1 - 0.693))


def test_extra_keys_land_in_meta():
    m = load_fixture("sin_saddle")
    assert m.meta["splitting"]["unstable"] == [[1.0, 0.0]]


def test_coverage_gap_reports_the_uncovered_interval():
    with pytest.raises(CoverageGap) as info:
        load_fixture("four_piece_gap")
    assert info.value.lo[0] == pytest.approx(0.0, abs=1e-12)
    assert info.value.hi[0] == pytest.approx(0.1, abs=1e-12)


@pytest.mark.parametrize("text, line", [
    ('{"dim": 1,\n "kind": "bogus"}', 2),
    ('{"dim": 4, "pieces": []}', 1),
    ('{"dim": 1,\n "pieces": [{"expr": ["x +"]}]}', 2),
    ('{"dim": 1, "pieces": [', None),
])
def test_parse_errors_carry_positions(text, line):
    with pytest.raises(ParseError) as info:
        parse_map_config(text)
    if line is not None:
        assert info.value.line == line


def test_matrix_shape_is_validated():
    with pytest.raises(ParseError):
        parse_map_config('{"dim": 2, "kind": "linear_plus_lip", "matrix": [[1, 0]]}')


def test_read_config_accepts_paths_and_fixture_names(tmp_path):
    text = '{"dim": 1, "domain": {"center": [0], "radius": 1}, "pieces": [{"expr": ["x/2"]}]}'
    p = tmp_path / "half.json"
    p.write_text(text)
    m, got = read_config(str(p))
    assert got == text and m(np.array([1.0]))[0] == 0.5
    m2, _ = read_config("affine2x")
    assert m2(np.array([0.25]))[0] == 0.5
    assert config_hash(text) == config_hash(got)
    assert len(config_hash(text)) == 64
