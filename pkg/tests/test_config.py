import pytest

from peergrade.config import (dump_class_spec, dump_config, load_class_spec, load_config,
                              load_config_full)
from peergrade.model import (GridSpec, Hyperparameters, ModelConfig, UniformGrid,
                             ValidationError, preset_hyperparameters)
from peergrade.synth import ClassSpec


def write(tmp_path, text, name="c.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_empty_file_gives_defaults(tmp_path):
    hp, config = load_config(write(tmp_path, ""))
    assert hp == Hyperparameters() and config == ModelConfig()


def test_round_trip(tmp_path):
    hp = Hyperparameters(mu_s=3.5, tau_ell=4.0)
    grids = GridSpec(true_grade_grid=UniformGrid(51, -1.0, 7.0))
    config = ModelConfig(chains=2, samples=150, burn_in=30, seed=12, effort_enabled=False, grids=grids)
    clamps = {"effort_clamps": {"ta1": 1.0}, "reliability_clamps": {"boss": 16.0},
              "bias_clamps": {"boss": 0.0}}
    text = dump_config(hp, config, clamps)
    got_hp, got_config, got_clamps = load_config_full(write(tmp_path, text))
    assert got_hp == hp and got_config == config and got_clamps == clamps
    assert dump_config(got_hp, got_config, got_clamps) == text


def test_preset_and_override(tmp_path):
    hp, _ = load_config(write(tmp_path, 'preset = "concentrated-low-effort"\n'
                                        "[hyperparameters]\nmu_s = 3.5\n"))
    assert hp.tau_ell == 4.0 and hp.mu_s == 3.5


def test_sigma_key_overrides_preset_precision(tmp_path):
    hp, _ = load_config(write(tmp_path, 'preset = "paper-default"\n'
                                        "[hyperparameters]\nsigma_s = 1.6\n"))
    assert hp.tau_s == pytest.approx(1 / 1.6**2)
    assert hp.mu_s == preset_hyperparameters("paper-default").mu_s


def test_conflicting_spellings(tmp_path):
    with pytest.raises(ValidationError, match="conflicting"):
        load_config(write(tmp_path, "[hyperparameters]\nsigma_s = 1.0\ntau_s = 1.0\n"))


@pytest.mark.parametrize("text", ["colour = 1\n", "[model]\nchain = 2\n",
                                  "[model.grids]\nfoo = {count = 3, lo = 0.0, hi = 1.0}\n",
                                  "[clamps]\nmood = []\n", "[hyperparameters]\nheight = 2.0\n"])
def test_unknown_keys_rejected(tmp_path, text):
    with pytest.raises(ValidationError):
        load_config(write(tmp_path, text))


def test_unknown_preset(tmp_path):
    with pytest.raises(ValidationError, match="known presets"):
        load_config(write(tmp_path, 'preset = "nope"\n'))


def test_parse_error_reports_position(tmp_path):
    with pytest.raises(ValidationError, match=r"line 2, column \d+"):
        load_config(write(tmp_path, "[model]\nchains = = 3\n"))


def test_invalid_values_rejected(tmp_path):
    with pytest.raises(ValidationError):
        load_config(write(tmp_path, "[model]\nchains = 0\n"))
    with pytest.raises(ValidationError):
        load_config(write(tmp_path, "[hyperparameters]\nepsilon = 2.0\n"))


def test_class_spec_round_trip(tmp_path):
    spec = ClassSpec(students=30, weeks=3, tas=2, seed=8, hp=Hyperparameters(mu_s=3.0),
                     submissions_per_week=20, grades_per_submission=6)
    text = dump_class_spec(spec)
    assert load_class_spec(write(tmp_path, text)) == spec


def test_class_spec_components_follow_hyperparameters(tmp_path):
    spec = load_class_spec(write(tmp_path, "[hyperparameters]\nC = 2\n[class]\nstudents = 10\n"))
    assert spec.components == 2 and spec.hp.C == 2


def test_class_spec_unknown_key(tmp_path):
    with pytest.raises(ValidationError):
        load_class_spec(write(tmp_path, "[class]\npupils = 10\n"))
