import pytest

from causalsmooth import ConfigurationError
from causalsmooth.config import apply_overrides, parse_value, read_config_file


def test_overrides_nested_and_typed():
    values = apply_overrides({"a": {"b": 1}}, ["a.b=2", "a.c=[1, 2]", "d=true", "e=hello", "f=0.5"])
    assert values == {"a": {"b": 2, "c": [1, 2]}, "d": True, "e": "hello", "f": 0.5}


def test_bad_overrides():
    with pytest.raises(ConfigurationError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigurationError):
        apply_overrides({"a": 1}, ["a.b=2"])


def test_parse_value():
    assert parse_value("3") == 3
    assert parse_value("False") is False
    assert parse_value("two_stage_ls") == "two_stage_ls"


def test_read_errors(tmp_path):
    (tmp_path / "x.toml").write_text("a = [")
    with pytest.raises(ConfigurationError):
        read_config_file(tmp_path / "x.toml")
    with pytest.raises(ConfigurationError):
        read_config_file(tmp_path / "missing.toml")
    (tmp_path / "y.json").write_text("[1]")
    with pytest.raises(ConfigurationError):
        read_config_file(tmp_path / "y.json")
