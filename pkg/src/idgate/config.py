"""Gateway configuration: defaults, a TOML file, then environment overrides,
each layer winning over the one before."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

ENV_PREFIX = "IDGATE_"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ServiceConfig:
    base_url: str = "http://127.0.0.1:8400"
    data_dir: str | None = None
    session_key_hex: str | None = None
    session_lifetime: int = 3600
    pending_lifetime: int = 600
    role_staleness: int = 60
    auto_role_days: int = 365
    cookie_name: str = "idgate_session"
    pending_cookie_name: str = "idgate_pending"
    cookie_secure: bool = False
    realm: str | None = None
    console_dir: str | None = None

    @property
    def effective_realm(self) -> str:
        return self.realm or self.base_url.rstrip("/") + "/"

    def session_key(self) -> bytes | None:
        if self.session_key_hex is None:
            return None
        try:
            key = bytes.fromhex(self.session_key_hex)
        except ValueError:
            raise ConfigError("session_key_hex is not hexadecimal") from None
        if len(key) != 32:
            raise ConfigError("session key must be 32 bytes (64 hex digits)")
        return key


_FIELDS = {f.name: f for f in fields(ServiceConfig)}


def _coerce(name: str, value):
    kind = _FIELDS[name].type
    if kind == "int":
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name} must be an integer, got {value!r}") from None
    if kind == "bool":
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name} must be a boolean, got {value!r}")
    if value is None:
        return None
    return str(value)


def load_config(
    path: str | Path | None = None,
    environ: dict[str, str] | None = None,
) -> ServiceConfig:
    """Configuration from an optional TOML file plus ``IDGATE_*`` variables."""
    config = ServiceConfig()
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        unknown = set(data) - set(_FIELDS)
        if unknown:
            raise ConfigError(f"unknown settings in {path}: {sorted(unknown)}")
        config = replace(
            config, **{name: _coerce(name, value) for name, value in data.items()}
        )
    environ = os.environ if environ is None else environ
    overrides = {}
    for name in _FIELDS:
        env_name = ENV_PREFIX + name.upper()
        if env_name in environ:
            overrides[name] = _coerce(name, environ[env_name])
    if overrides:
        config = replace(config, **overrides)
    config.session_key()
    return config
