import pytest

from mabr.config import Config, ConfigError, load_config, parse_config


def test_defaults_roundtrip_through_text():
    cfg = Config()
    again = parse_config(cfg.dumps())
    assert again.to_flat() == cfg.to_flat()


def test_parse_values_and_comments():
    cfg = parse_config("""
    # a comment
    sim.episode_seconds = 30   # trailing
    gcc.resolution_adaptation = false
    ppo.learning_rate = 1e-3
    reward.quality_term = rate_factor
    """)
    assert cfg.sim.episode_seconds == 30.0
    assert cfg.gcc.resolution_adaptation is False
    assert cfg.ppo.learning_rate == 1e-3
    assert cfg.reward.quality_term == "rate_factor"


def test_unknown_keys_are_all_listed():
    with pytest.raises(ConfigError) as exc:
        parse_config("sim.nope = 1\nfoo.bar = 2\nsim.tick = 0.01\n")
    assert "sim.nope" in str(exc.value) and "foo.bar" in str(exc.value)


def test_bad_value_and_bad_line():
    with pytest.raises(ConfigError):
        parse_config("sim.mtu = big\n")
    with pytest.raises(ConfigError):
        parse_config("just words\n")


def test_overrides_do_not_touch_original():
    base = Config()
    cfg = base.with_overrides({"ppo.epochs": "2"})
    assert cfg.ppo.epochs == 2 and base.ppo.epochs == 4
    with pytest.raises(ConfigError):
        base.with_overrides({"ppo.epoch": "2"})


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.cfg")
    assert load_config(None).to_flat() == Config().to_flat()
