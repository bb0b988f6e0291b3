"""Sealed session cookies.

A session is a JSON claims object encrypted and authenticated with
AES-GCM.  The cookie value is ``v1.`` followed by the urlsafe base64 of
nonce plus ciphertext, unpadded.  Anything that fails to open cleanly,
in any way, reads as "no session".
"""

from __future__ import annotations

import base64
import json
import secrets
import time
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

TOKEN_VERSION = "v1"
KEY_BYTES = 32
NONCE_BYTES = 12
AAD = b"idgate-session"


def new_session_key() -> bytes:
    return secrets.token_bytes(KEY_BYTES)


@dataclass(frozen=True)
class SessionClaims:
    """What the gateway knows about a signed-in browser."""

    session_id: str
    user_id: int
    user_name: str
    identity: str
    roles: tuple[str, ...]
    issued_at: float
    expires_at: float
    roles_refreshed_at: float
    email: str | None = None
    extra: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "sid": self.session_id,
            "uid": self.user_id,
            "name": self.user_name,
            "identity": self.identity,
            "roles": list(self.roles),
            "iat": self.issued_at,
            "exp": self.expires_at,
            "rrat": self.roles_refreshed_at,
            "email": self.email,
            "extra": self.extra,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "SessionClaims":
        return cls(
            payload["sid"],
            int(payload["uid"]),
            payload["name"],
            payload["identity"],
            tuple(payload["roles"]),
            float(payload["iat"]),
            float(payload["exp"]),
            float(payload["rrat"]),
            payload.get("email"),
            payload.get("extra", {}),
        )

    @classmethod
    def fresh(
        cls,
        user_id: int,
        user_name: str,
        identity: str,
        roles,
        *,
        lifetime: float,
        now: float | None = None,
        email: str | None = None,
    ) -> "SessionClaims":
        now = time.time() if now is None else now
        return cls(
            secrets.token_urlsafe(16),
            user_id,
            user_name,
            identity,
            tuple(roles),
            now,
            now + lifetime,
            now,
            email,
        )


def seal(key: bytes, payload: dict) -> str:
    """Opaque token carrying the payload."""
    if len(key) != KEY_BYTES:
        raise ValueError(f"session key must be {KEY_BYTES} bytes")
    nonce = secrets.token_bytes(NONCE_BYTES)
    plaintext = json.dumps(payload, separators=(",", ":"), sort_keys=True).encode()
    sealed = AESGCM(key).encrypt(nonce, plaintext, AAD)
    body = base64.urlsafe_b64encode(nonce + sealed).decode("ascii").rstrip("=")
    return f"{TOKEN_VERSION}.{body}"


def unseal(key: bytes, token: str) -> dict | None:
    """Payload of a token, or None for anything that does not open."""
    if len(key) != KEY_BYTES:
        raise ValueError(f"session key must be {KEY_BYTES} bytes")
    version, _, body = token.partition(".")
    if version != TOKEN_VERSION or not body:
        return None
    try:
        raw = base64.urlsafe_b64decode(body + "=" * (-len(body) % 4))
    except (ValueError, TypeError):
        return None
    if len(raw) <= NONCE_BYTES:
        return None
    try:
        plaintext = AESGCM(key).decrypt(raw[:NONCE_BYTES], raw[NONCE_BYTES:], AAD)
        payload = json.loads(plaintext.decode("utf-8"))
    except (InvalidTag, ValueError, UnicodeDecodeError):
        return None
    return payload if isinstance(payload, dict) else None


def mint_session(key: bytes, claims: SessionClaims) -> str:
    return seal(key, claims.to_payload())


def read_session(key: bytes, token: str, now: float | None = None) -> SessionClaims | None:
    """Claims carried by a live session token; None for absent, damaged,
    foreign, or expired tokens."""
    if not token:
        return None
    payload = unseal(key, token)
    if payload is None:
        return None
    try:
        claims = SessionClaims.from_payload(payload)
    except (KeyError, TypeError, ValueError):
        return None
    now = time.time() if now is None else now
    if now >= claims.expires_at:
        return None
    return claims
