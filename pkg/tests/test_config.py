# =============================================================================
# tests/test_config.py
# =============================================================================

import pytest

from src.utils.config import ConfigError, ModelConfig, VSCGConfig, preset


def test_defaults_validate():
    cfg = ModelConfig().validate()
    assert cfg.bg_index == cfg.C - 1
    assert cfg.lstm_hidden == cfg.d_l // 2
    assert cfg.d_i == 2 * cfg.d_e


def test_dropout_isce_depends_on_mode():
    assert ModelConfig(mode='fully').dropout_isce == 0.2
    assert ModelConfig(mode='weakly').dropout_isce == 0.5
    assert ModelConfig(mode='weakly', r_i=0.1).dropout_isce == 0.1


def test_paper_preset_dimensions():
    cfg = preset('paper').validate()
    assert (cfg.C, cfg.d_a, cfg.d_v, cfg.H, cfg.W) == (29, 128, 512, 7, 7)
    assert cfg.bg_index == 28


def test_unknown_preset():
    with pytest.raises(ConfigError, match='preset'):
        preset('huge')


@pytest.mark.parametrize('changes, fragment', [
    ({'d_i': 100}, 'd_i'),
    ({'T': 3}, 'T >= 4'),
    ({'background_index': 6}, 'background_index'),
    ({'tau_b': 1.0}, 'tau_b'),
    ({'lam': 0.0}, 'lam'),
    ({'r_s': 1.0}, 'r_s'),
    ({'mode': 'semi'}, 'mode'),
    ({'variant': 'bce_only'}, 'bce_only'),
    ({'mode': 'weakly', 'variant': 'ce_avps'}, 'ce_avps'),
    ({'cere': 'zero_init', 'shared_cere': False}, 'alternative'),
    ({'escm': False, 'cere': 'zero_init'}, 'ESCM'),
    ({'d_l': 7}, 'd_l'),
])
def test_invalid_configs_name_the_constraint(changes, fragment):
    with pytest.raises(ConfigError, match=fragment):
        ModelConfig(**changes).validate()


def test_short_sequences_allowed_without_escm():
    ModelConfig(T=3, escm=False).validate()


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match='sconosciute'):
        ModelConfig.from_dict({'T': 10, 'depth': 3})


def test_dict_round_trip():
    cfg = preset('tiny', seed=5)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_sectioned_get_and_set():
    config = VSCGConfig()
    assert config.get('train.lr') == 1e-3
    assert config.get('nope.x', 5) == 5
    config.set('dims.T', '8')
    config.set('ablation.escm', 'off')
    cfg = config.to_model_config()
    assert cfg.T == 8 and cfg.escm is False
    with pytest.raises(ConfigError):
        config.set('dims.depth', 3)


def test_load_file(tmp_path):
    path = tmp_path / 'run.cfg'
    path.write_text("# prova\ntrain.lr = 0.01\ndims.T = 8  # segmenti\n\nrates.r_i = none\n",
                    encoding='utf-8')
    cfg = VSCGConfig(preset('tiny')).load_file(path).to_model_config()
    assert cfg.lr == 0.01
    assert cfg.T == 8
    assert cfg.r_i is None
    assert cfg.C == 3


@pytest.mark.parametrize('text', ['dims.depth = 3\n', 'dims.T = abc\n', 'dims.T\n'])
def test_load_file_errors(tmp_path, text):
    path = tmp_path / 'bad.cfg'
    path.write_text(text, encoding='utf-8')
    with pytest.raises(ConfigError):
        VSCGConfig().load_file(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        VSCGConfig().load_file(tmp_path / 'missing.cfg')


def test_save_then_load(tmp_path):
    original = VSCGConfig(preset('tiny', seed=9, escm=False))
    path = tmp_path / 'saved.cfg'
    original.save_file(path)
    loaded = VSCGConfig().load_file(path)
    assert loaded.to_model_config() == original.to_model_config()


def test_reset_to_defaults():
    config = VSCGConfig(preset('tiny'))
    config.set('train.epochs', 40)
    config.reset_to_defaults()
    assert config.get('train.epochs') == 2
