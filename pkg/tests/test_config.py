import numpy as np
import pytest

from reheatlab.config import ConfigError, ExperimentConfig, gmm_to_config_text, load_config


def write(tmp_path, text):
    path = tmp_path / "exp.ini"
    path.write_text(text)
    return path


class TestDefaults:
    def test_default_config_builds_everything(self):
        cfg = ExperimentConfig()
        assert cfg.t_reheat == 0.4 and cfg.delta == 0.15
        assert cfg.period == 25 and cfg.delta_st == 0.08
        assert cfg.amplitude == 0.2 and cfg.damping == 2.5 and cfg.frequency == 4.0
        assert cfg.delta_tau == 50 and cfg.max_reheats == 15
        assert cfg.percentile == 80.0 and cfg.k_cal == 100
        gmm = cfg.build_gmm()
        assert gmm.K == 8 and gmm.d == 2
        sched = cfg.build_schedule(10)
        assert sched.kind == "monotonic" and sched.n == 10

    def test_empty_file_equals_defaults(self, tmp_path):
        cfg = load_config(write(tmp_path, ""))
        assert cfg == ExperimentConfig()


class TestParsing:
    def test_sections_and_overrides(self, tmp_path):
        cfg = load_config(write(tmp_path, """
[model]
kind = perturbed
eps_amp = 2.5

[schedule]
kind = single_reheat
delta = 0.3

[run]
nfe_list = 10,25
n_samples = 512
"""))
        assert cfg.model_kind == "perturbed" and cfg.eps_amp == 2.5
        assert cfg.schedule_kind == "single_reheat" and cfg.delta == 0.3
        assert cfg.nfe_list == (10, 25) and cfg.n_samples == 512

    def test_seed_override(self, tmp_path):
        cfg = load_config(write(tmp_path, "[run]\nbase_seed = 5\n"), overrides={"base_seed": 9})
        assert cfg.base_seed == 9

    def test_unknown_section_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, "[mystery]\nx = 1\n"))

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, "[model]\nshape = blob\n"))

    def test_bad_value_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, "[run]\nn_samples = many\n"))

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_clip_none_and_value(self, tmp_path):
        assert load_config(write(tmp_path, "[sampler]\nclip = none\n")).clip is None
        assert load_config(write(tmp_path, "[sampler]\nclip = 1.5\n")).clip == 1.5


class TestGmmSerialization:
    def test_round_trip(self, tmp_path):
        gmm = ExperimentConfig().build_gmm()
        text = gmm_to_config_text(gmm)
        cfg = load_config(write(tmp_path, text))
        back = cfg.build_gmm()
        assert np.array_equal(back.means, gmm.means)
        assert np.array_equal(back.stds, gmm.stds)
        assert np.array_equal(back.weights, gmm.weights)

    def test_explicit_layout_requires_fields(self):
        cfg = ExperimentConfig(layout="explicit")
        with pytest.raises(ConfigError):
            cfg.build_gmm()


class TestBuilders:
    def test_family_processes(self):
        assert ExperimentConfig(family="ddpm").build_process().T == 1000
        assert ExperimentConfig(family="edm").build_process().sigma_max == 80.0
        assert ExperimentConfig(family="fm").build_process().t_max == 0.999

    def test_perturbed_denoiser(self):
        den = ExperimentConfig(model_kind="perturbed").build_denoiser()
        assert den.kind == "perturbed"
        assert den.perturbation.eps_amp == 8.0

    def test_adaptive_is_not_constructed(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().build_schedule(10, kind="adaptive")
