"""Sealed session token tests."""

from __future__ import annotations

import pytest

from idgate.tokens import (
    SessionClaims,
    mint_session,
    new_session_key,
    read_session,
    seal,
    unseal,
)


@pytest.fixture()
def key():
    return new_session_key()


def test_seal_round_trip(key):
    payload = {"a": 1, "b": ["x", "y"], "c": {"d": None}}
    assert unseal(key, seal(key, payload)) == payload


def test_token_shape(key):
    token = seal(key, {"v": 1})
    assert token.startswith("v1.")
    assert "=" not in token


def test_unseal_rejects_damage(key):
    token = seal(key, {"v": 1})
    assert unseal(key, "") is None
    assert unseal(key, "v1.") is None
    assert unseal(key, "v2." + token[3:]) is None
    assert unseal(key, token[:-2]) is None
    body = token[3:]
    flipped = body[:-1] + ("A" if body[-1] != "A" else "B")
    assert unseal(key, "v1." + flipped) is None


def test_unseal_rejects_foreign_key(key):
    token = seal(key, {"v": 1})
    assert unseal(new_session_key(), token) is None


def test_bad_key_length_raises(key):
    with pytest.raises(ValueError):
        seal(b"short", {})
    with pytest.raises(ValueError):
        unseal(b"short", "v1.x")


def test_claims_round_trip(key):
    claims = SessionClaims.fresh(
        7,
        "casey",
        "http://id.example/casey",
        ("6", "7"),
        lifetime=3600,
        now=1000.0,
        email="casey@example.org",
    )
    token = mint_session(key, claims)
    back = read_session(key, token, now=1000.0)
    assert back == claims
    assert back.roles == ("6", "7")
    assert back.expires_at == 4600.0
    assert back.roles_refreshed_at == 1000.0


def test_session_ids_are_unique(key):
    a = SessionClaims.fresh(1, "a", "http://x/", (), lifetime=10, now=0.0)
    b = SessionClaims.fresh(1, "a", "http://x/", (), lifetime=10, now=0.0)
    assert a.session_id != b.session_id


def test_expired_session_unreadable(key):
    claims = SessionClaims.fresh(1, "a", "http://x/", (), lifetime=10, now=1000.0)
    token = mint_session(key, claims)
    assert read_session(key, token, now=1009.0) is not None
    assert read_session(key, token, now=1011.0) is None


def test_read_session_tolerates_junk(key):
    assert read_session(key, "", now=0.0) is None
    assert read_session(key, "v1.not-base64!!", now=0.0) is None
    assert read_session(key, seal(key, {"not": "claims"}), now=0.0) is None
    assert read_session(key, seal(key, {"sid": 5}), now=0.0) is None
