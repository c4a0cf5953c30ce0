import numpy as np
import pytest

from reflectsim.config import default_config_text, load_config, parse_config
from reflectsim.errors import InvalidConfiguration


def test_default_values():
    cfg = load_config()
    assert cfg.profile == "desk" and cfg.ppo.episodes == 300
    assert cfg.env.num_agents == 3 and cfg.env.delta_max > 0
    assert cfg.layout().n_tiles == 72
    assert len(cfg.scene.obstacles) == 1 and cfg.scene.obstacles[0].radius == 0.3
    assert cfg.seeds == (0, 1, 2)
    assert cfg.ppo.lr == 2e-4 and cfg.ppo.gamma == 0.985 and cfg.ppo.minibatch == 200


def test_profiles():
    assert load_config(profile="full").ppo.episodes == 3000
    with pytest.raises(InvalidConfiguration):
        load_config(profile="huge")


def test_overrides_change_hash_but_not_text():
    cfg = load_config()
    other = cfg.with_overrides(episodes=5, seeds=[4])
    assert other.ppo.episodes == 5 and other.seeds == (4,)
    assert other.source_text == cfg.source_text and other.content_hash != cfg.content_hash
    assert load_config().content_hash == cfg.content_hash


@pytest.mark.parametrize("old, new", [
    ("delta_max = 0.5", "delta_max = -0.5"),
    ("seeds = 0, 1, 2", "seeds = "),
    ("material = wood", "material = marble"),
    ("lobe_exponent = 140.0", "lobe_exponent = abc"),
    ("[ppo]", "[ppx]"),
])
def test_bad_values_rejected(old, new):
    text = default_config_text()
    assert old in text
    with pytest.raises(InvalidConfiguration):
        parse_config(text.replace(old, new))


def test_missing_file():
    with pytest.raises(InvalidConfiguration):
        load_config("/nonexistent/config.ini")


def test_scene_file_is_inlined(tmp_path):
    text = default_config_text()
    cut = text.index("[array]")
    (tmp_path / "scene.ini").write_text(text[:cut])
    main = text[cut:].replace("[experiment]", "[experiment]\nscene_file = scene.ini")
    (tmp_path / "run.ini").write_text(main)
    cfg = load_config(tmp_path / "run.ini")
    np.testing.assert_array_equal(cfg.scene.users, load_config().scene.users)
    assert "scene_file =" not in cfg.source_text
    # the stored text parses on its own
    again = parse_config(cfg.source_text)
    np.testing.assert_array_equal(again.scene.ap_position, cfg.scene.ap_position)
