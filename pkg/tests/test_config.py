import pytest

from riccilab.config import parse_config
from riccilab.errors import RangeError, SchemaError

MINIMAL = """
[[scenario]]
id = "s3"
family = "sphere"
N = 64
t_end = 0.1
"""


def test_minimal_sphere_defaults():
    """[TRIVIAL] unspecified params and policies get their defaults."""
    (sc,) = parse_config(MINIMAL)
    assert sc.params == {"n": 3, "r": 1.0}
    assert sc.dt.c_cfl == 0.2 and sc.ceilings.curvature == 1e6
    assert sc.checks == []


def test_negative_grid_size_is_range_error():
    """[TRIVIAL] error carries line and field."""
    with pytest.raises(RangeError) as ei:
        parse_config(MINIMAL.replace("N = 64", "N = -4"))
    assert ei.value.field == "N" and ei.value.line == 5


def test_cfl_above_hard_bound():
    """[TRIVIAL]"""
    with pytest.raises(RangeError) as ei:
        parse_config(MINIMAL + "dt = { c_cfl = 0.7 }\n")
    assert ei.value.field == "dt.c_cfl"


def test_duplicate_ids():
    """[TRIVIAL]"""
    with pytest.raises(SchemaError, match="duplicate"):
        parse_config(MINIMAL + MINIMAL)


@pytest.mark.parametrize("extra,field", [
    ("colour = 3\n", "colour"),
    ("params = { n = 3, radius = 2.0 }\n", "scenario"),
    ("outputs = { cadense = 0.1 }\n", "outputs.cadense"),
])
def test_unknown_keys_rejected(extra, field):
    """[TRIVIAL] strict schema everywhere."""
    with pytest.raises(SchemaError) as ei:
        parse_config(MINIMAL + extra)
    assert ei.value.field == field
    assert ei.value.line is not None


def test_unknown_family_and_missing_t_end():
    """[TRIVIAL]"""
    with pytest.raises(SchemaError, match="unknown family"):
        parse_config(MINIMAL.replace('"sphere"', '"klein_bottle"'))
    with pytest.raises(SchemaError, match="t_end"):
        parse_config(MINIMAL.replace("t_end = 0.1\n", ""))


def test_malformed_toml_and_top_level_keys():
    """[TRIVIAL]"""
    with pytest.raises(SchemaError) as ei:
        parse_config(MINIMAL + "oops = \n")
    assert ei.value.line is not None
    with pytest.raises(SchemaError, match="top-level"):
        parse_config("title = 'x'\n" + MINIMAL)
    with pytest.raises(SchemaError):
        parse_config("")
