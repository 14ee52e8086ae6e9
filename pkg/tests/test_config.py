import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ovmm.config import FLAGS, AgentConfig, NoiseConfig, RunConfig, load_config, parse_config_text
from ovmm.errors import ConfigError, UnknownClass


def test_default_round_trip():
    run = RunConfig()
    assert parse_config_text(run.canonical_text()) == run


def test_non_default_round_trip():
    text = """
    # comments and blank lines are ignored
    run.budget = 300
    scene.goal = cup,chair,table
    scene.receptacle_classes = chair,table
    noise.confusion_pairs = chair:sofa
    noise.true_conf = 0.5, 0.9
    agent.pick_verify = off
    agent.nav_stop = 2.5
    """
    run = parse_config_text(text)
    assert run.budget == 300
    assert run.scene.receptacle_classes == ("chair", "table")
    assert run.noise.confusion_pairs == (("chair", "sofa"),)
    assert run.noise.true_conf == (0.5, 0.9)
    assert not run.agent.pick_verify and run.agent.nav_stop == 2.5
    assert parse_config_text(run.canonical_text()) == run


@settings(max_examples=50, deadline=None)
@given(st.fixed_dictionaries({f: st.booleans() for f in FLAGS}), st.integers(1, 5000))
def test_flag_round_trip(flags, budget):
    run = RunConfig(agent=AgentConfig(**flags), budget=budget)
    assert parse_config_text(run.canonical_text()) == run


def test_fingerprint_tracks_content():
    a = RunConfig()
    b = RunConfig(agent=AgentConfig.baseline())
    assert a.fingerprint() == RunConfig().fingerprint() != b.fingerprint()


@pytest.mark.parametrize(
    "line",
    [
        "agent.warp_drive = on",
        "robot.speed = 1",
        "agent.pick_verify = maybe",
        "scene.width = wide",
        "noise.p_miss = 1.5",
        "noise.confusion_pairs = chair",
        "no equals sign here",
    ],
)
def test_bad_lines_raise_config_error(line):
    with pytest.raises(ConfigError):
        parse_config_text(line)


def test_unknown_floor_class_is_config_error():
    with pytest.raises(UnknownClass):
        parse_config_text("noise.floor_fp_classes = throne")


def test_with_flags_rejects_unknown():
    with pytest.raises(ConfigError):
        AgentConfig().with_flags(teleport=True)


def test_presets():
    assert all(getattr(AgentConfig.uniteam(), f) for f in FLAGS)
    assert not any(getattr(AgentConfig.baseline(), f) for f in FLAGS)
    assert NoiseConfig.noiseless().is_noiseless and not NoiseConfig().is_noiseless


def test_load_from_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("run.budget = 77\n")
    assert load_config(p).budget == 77
