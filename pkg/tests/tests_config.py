import logging

import pytest

from wnoskit.config import SEED_ENV_VAR, Settings, resolve_seed


class TestSettings:
    def test_defaults(self):
        settings = Settings()
        assert settings.n_global == 20
        assert settings.n_local == 10
        assert settings.timescale_ratio == 30
        assert settings.transport_period == 30
        assert settings.logging_level == logging.INFO
        assert settings.step == "diminishing"

    def test_wrong_types(self):
        with pytest.raises(TypeError):
            Settings(n_global=2.5)
        with pytest.raises(TypeError):
            Settings(high_sinr=1)
        with pytest.raises(TypeError):
            Settings(no_such_option=1)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            Settings(n_global=5, n_local=6)
        with pytest.raises(ValueError):
            Settings(step="quadratic")
        with pytest.raises(ValueError):
            Settings(alpha0=-1.0)
        with pytest.raises(ValueError):
            Settings(steady_fraction=0.0)

    def test_strings_are_coerced(self):
        settings = Settings(n_global="12", alpha0="0.1", high_sinr="true")
        assert settings.n_global == 12
        assert settings.alpha0 == pytest.approx(0.1)
        assert settings.high_sinr is True
        with pytest.raises(ValueError):
            Settings(n_local="ten")

    def test_load_config(self, tmp_path):
        path = tmp_path / "config.ini"
        path.write_text("[instantiation]\nn_global = 8\nn_local = 4\n\n[pps]\ntimescale_ratio = 10\n")
        settings = Settings().load_config(str(path))
        assert (settings.n_global, settings.n_local) == (8, 4)
        assert settings.timescale_ratio == 10
        # absent options keep their defaults
        assert settings.alpha0 == pytest.approx(0.05)

    def test_program_overrides(self):
        settings = Settings().apply_program({"n_global": 3, "n_local": 2, "routing": "shortest"})
        assert (settings.n_global, settings.n_local) == (3, 2)

    def test_copy_is_independent(self):
        settings = Settings()
        other = settings.copy()
        other.update(alpha0=0.5)
        assert settings != other
        assert settings.alpha0 == pytest.approx(0.05)


class TestSeed:
    def test_explicit_wins(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "11")
        assert resolve_seed(4) == 4

    def test_environment_fallback(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "11")
        assert resolve_seed(None) == 11

    def test_configured_seed(self, monkeypatch):
        monkeypatch.delenv(SEED_ENV_VAR, raising=False)
        assert resolve_seed(None, Settings(rng_seed=7)) == 7
        assert resolve_seed(None) == 0
