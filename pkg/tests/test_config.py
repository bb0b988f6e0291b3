"""Configuration loading tests."""

from __future__ import annotations

import pytest

from idgate.config import ConfigError, ServiceConfig, load_config


def test_defaults():
    config = load_config(environ={})
    assert config.base_url == "http://127.0.0.1:8400"
    assert config.session_lifetime == 3600
    assert config.role_staleness == 60
    assert config.session_key() is None


def test_file_layer(tmp_path):
    path = tmp_path / "gateway.toml"
    path.write_text(
        'base_url = "https://sso.example"\n'
        "session_lifetime = 7200\n"
        "cookie_secure = true\n"
    )
    config = load_config(path, environ={})
    assert config.base_url == "https://sso.example"
    assert config.session_lifetime == 7200
    assert config.cookie_secure is True


def test_environment_wins_over_file(tmp_path):
    path = tmp_path / "gateway.toml"
    path.write_text('base_url = "https://file.example"\n')
    config = load_config(
        path,
        environ={"IDGATE_BASE_URL": "https://env.example", "IDGATE_ROLE_STALENESS": "5"},
    )
    assert config.base_url == "https://env.example"
    assert config.role_staleness == 5


def test_unknown_setting_rejected(tmp_path):
    path = tmp_path / "gateway.toml"
    path.write_text("sesion_lifetime = 1\n")
    with pytest.raises(ConfigError, match="sesion_lifetime"):
        load_config(path, environ={})


def test_unreadable_file_rejected(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml", environ={})
    bad = tmp_path / "bad.toml"
    bad.write_text("base_url = [unterminated\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(bad, environ={})


def test_bad_integer_rejected():
    with pytest.raises(ConfigError, match="session_lifetime"):
        load_config(environ={"IDGATE_SESSION_LIFETIME": "soon"})


def test_bool_spellings():
    for text, expected in (("1", True), ("off", False), ("Yes", True), ("false", False)):
        config = load_config(environ={"IDGATE_COOKIE_SECURE": text})
        assert config.cookie_secure is expected
    with pytest.raises(ConfigError, match="cookie_secure"):
        load_config(environ={"IDGATE_COOKIE_SECURE": "sometimes"})


def test_session_key_validation():
    with pytest.raises(ConfigError, match="hexadecimal"):
        load_config(environ={"IDGATE_SESSION_KEY_HEX": "zz"})
    with pytest.raises(ConfigError, match="32 bytes"):
        load_config(environ={"IDGATE_SESSION_KEY_HEX": "abcd"})
    key_hex = "11" * 32
    config = load_config(environ={"IDGATE_SESSION_KEY_HEX": key_hex})
    assert config.session_key() == b"\x11" * 32


def test_effective_realm():
    assert ServiceConfig().effective_realm == "http://127.0.0.1:8400/"
    assert (
        ServiceConfig(base_url="https://sso.example/").effective_realm
        == "https://sso.example/"
    )
    assert (
        ServiceConfig(realm="https://*.example/").effective_realm == "https://*.example/"
    )
