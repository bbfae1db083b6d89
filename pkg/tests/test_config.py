# tests/test_config.py - `key = value` parsing, precedence and validation
import pytest

from backend.config.parser import KNOWN_KEYS, RunConfig, load_config, parse_config, parse_lines
from backend.errors import ConfigError


def test_empty_text_gives_defaults():
    config = parse_config("")
    assert config == RunConfig()
    assert config.M > 3 * config.N
    assert config.x0 == (1.0, 2.0)


def test_comments_and_types():
    config = parse_config("""
        # forcing
        alpha = 5.2   # inside (5, 6)
        N = 8
        inviscid = no
        J = 0, 2, 5
        x0 = 0.5, 1.5
        scheme = lawson4
    """)
    assert config.alpha == 5.2
    assert config.N == 8
    assert config.inviscid is False
    assert config.J == [0, 2, 5]
    assert config.x0 == (0.5, 1.5)
    assert config.scheme == "lawson4"


def test_alpha_outside_range_names_the_key():
    with pytest.raises(ConfigError) as info:
        parse_config("alpha = 7")
    assert info.value.key == "alpha"
    assert info.value.exit_code == 2


def test_negative_dt_rejected():
    with pytest.raises(ConfigError, match="dt must be positive"):
        parse_config("dt = -1")


def test_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError) as info:
        parse_config("viscosity = 0.1")
    assert info.value.key == "viscosity"
    with pytest.raises(ConfigError, match="duplicate"):
        parse_lines("N = 4\nN = 8")
    with pytest.raises(ConfigError):
        parse_lines("just some words")


def test_unparseable_value():
    with pytest.raises(ConfigError) as info:
        parse_config("thin = many")
    assert info.value.key == "thin"


def test_grid_follows_cutoff():
    assert parse_config("N = 32").M == 128
    assert parse_config("N = 4").M == 64
    with pytest.raises(ConfigError) as info:
        parse_config("N = 32\nM = 96")
    assert info.value.key == "M"


def test_overrides_take_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 3\nT = 2.0\n")
    config = load_config(path, {"seed": "11"})
    assert config.seed == 11
    assert config.T == 2.0
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_overlapping_balls_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config("balls = 1,1,0.5;1.5,1,0.5")
    assert info.value.key == "balls"


def test_index_set_must_increase():
    with pytest.raises(ConfigError):
        parse_config("J = 0, 2, 1")


def test_inviscid_allows_zero_epsilon():
    config = parse_config("inviscid = true\nepsilon = 0")
    assert config.sim_params().inviscid


def test_every_field_is_a_known_key():
    assert set(KNOWN_KEYS) == set(RunConfig().as_dict())
