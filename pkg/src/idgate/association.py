"""Shared-secret establishment between relying party and provider.

A relying party and a provider agree on an HMAC key up front so later
assertions can be checked locally, without another round trip per login.
The key travels blinded: both sides run a Diffie-Hellman exchange over a
fixed prime group and the provider XORs the MAC key with a hash of the
shared group element.  Eavesdroppers on the exchange learn nothing useful;
only active interception defeats it, which is why deployments still front
the endpoints with TLS.

The default group is the 1536-bit well-known modulus with generator 2.
"""

from __future__ import annotations

import base64
import hashlib
import secrets
import time
from dataclasses import dataclass

from .messages import (
    OPENID2_NS,
    Message,
    btwoc,
    sign_message,
    unbtwoc,
    verify_signature,
)

# 1536-bit well-known modulus: p = 2q + 1 with q prime, generator 2.
DEFAULT_DH_MODULUS = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D"
    "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D"
    "670C354E4ABC9804F1746C08CA237327FFFFFFFFFFFFFFFF",
    16,
)
DEFAULT_DH_GENERATOR = 2

DEFAULT_ASSOC_TYPE = "HMAC-SHA256"
DEFAULT_SESSION_TYPE = "DH-SHA256"
DEFAULT_LIFETIME = 3600

SESSION_HASHES = {"DH-SHA1": hashlib.sha1, "DH-SHA256": hashlib.sha256}
MAC_KEY_LENGTHS = {"HMAC-SHA1": 20, "HMAC-SHA256": 32}
SESSION_TYPES = ("no-encryption",) + tuple(SESSION_HASHES)

HANDLE_BYTES = 16


class AssociationError(Exception):
    """Key exchange failed or produced an unusable message."""


class NegotiationError(AssociationError):
    """The peer rejected our association or session type.

    Carries the peer's preference so the caller can retry once.
    """

    def __init__(self, assoc_type: str | None, session_type: str | None) -> None:
        super().__init__(
            f"peer prefers assoc_type={assoc_type!r} session_type={session_type!r}"
        )
        self.assoc_type = assoc_type
        self.session_type = session_type


# -- group arithmetic ------------------------------------------------------


@dataclass(frozen=True)
class DhParams:
    modulus: int
    generator: int

    def __post_init__(self) -> None:
        if self.modulus < 5 or self.generator < 2 or self.generator >= self.modulus:
            raise AssociationError("degenerate group parameters")


DEFAULT_DH_PARAMS = DhParams(DEFAULT_DH_MODULUS, DEFAULT_DH_GENERATOR)


@dataclass(frozen=True)
class DhKeyPair:
    params: DhParams
    private: int
    public: int


def generate_keypair(params: DhParams = DEFAULT_DH_PARAMS) -> DhKeyPair:
    private = 1 + secrets.randbelow(params.modulus - 2)
    return keypair_from_private(params, private)


def keypair_from_private(params: DhParams, private: int) -> DhKeyPair:
    if not 1 <= private <= params.modulus - 2:
        raise AssociationError("private key outside group order")
    return DhKeyPair(params, private, pow(params.generator, private, params.modulus))


def shared_secret(keypair: DhKeyPair, their_public: int) -> int:
    """Group element both sides derive.  Publics at the edges of the group
    (0, 1, p-1 and anything out of range) collapse the secret to a guessable
    value, so they are rejected outright."""
    p = keypair.params.modulus
    if not 1 < their_public < p - 1:
        raise AssociationError("peer public key outside the safe range")
    return pow(their_public, keypair.private, p)


def mask_mac_key(session_type: str, shared: int, mac_key: bytes) -> bytes:
    """XOR the MAC key with the hashed shared element.  Applying it twice
    restores the key, so the same function masks and unmasks."""
    try:
        digest = SESSION_HASHES[session_type](btwoc(shared)).digest()
    except KeyError:
        raise AssociationError(f"session type {session_type!r} has no hash") from None
    if len(digest) != len(mac_key):
        raise AssociationError(
            f"{session_type} digest length {len(digest)} != key length {len(mac_key)}"
        )
    return bytes(a ^ b for a, b in zip(digest, mac_key))


unmask_mac_key = mask_mac_key


def new_handle() -> str:
    return base64.b64encode(secrets.token_bytes(HANDLE_BYTES)).decode("ascii")


def valid_handle(handle: str) -> bool:
    return 0 < len(handle) <= 255 and all(33 <= ord(c) <= 126 for c in handle)


def new_mac_key(assoc_type: str) -> bytes:
    try:
        return secrets.token_bytes(MAC_KEY_LENGTHS[assoc_type])
    except KeyError:
        raise AssociationError(f"unknown association type {assoc_type!r}") from None


def _check_type_pairing(assoc_type: str, session_type: str) -> None:
    if assoc_type not in MAC_KEY_LENGTHS:
        raise NegotiationError(DEFAULT_ASSOC_TYPE, DEFAULT_SESSION_TYPE)
    if session_type not in SESSION_TYPES:
        raise NegotiationError(DEFAULT_ASSOC_TYPE, DEFAULT_SESSION_TYPE)
    if session_type != "no-encryption":
        digest_len = SESSION_HASHES[session_type]().digest_size
        if digest_len != MAC_KEY_LENGTHS[assoc_type]:
            raise NegotiationError(DEFAULT_ASSOC_TYPE, DEFAULT_SESSION_TYPE)


# -- the association itself ------------------------------------------------


@dataclass(frozen=True)
class Association:
    """An agreed MAC key with its handle and lifetime.

    ``private`` marks keys a provider never shared; they back assertions for
    relying parties that keep no state and verify by a direct call instead.
    """

    handle: str
    mac_key: bytes
    assoc_type: str
    issued: int
    lifetime: int
    private: bool = False

    @property
    def expires_at(self) -> int:
        return self.issued + self.lifetime

    def remaining(self, now: float | None = None) -> int:
        now = time.time() if now is None else now
        return max(0, int(self.expires_at - now))

    def is_valid(self, now: float | None = None) -> bool:
        return self.remaining(now) > 0

    def sign(self, message: Message) -> Message:
        return sign_message(message, self.assoc_type, self.mac_key)

    def verify(self, message: Message) -> bool:
        return verify_signature(message, self.assoc_type, self.mac_key)

    def to_payload(self) -> dict:
        return {
            "handle": self.handle,
            "mac_key": base64.b64encode(self.mac_key).decode("ascii"),
            "assoc_type": self.assoc_type,
            "issued": self.issued,
            "lifetime": self.lifetime,
            "private": self.private,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "Association":
        return cls(
            payload["handle"],
            base64.b64decode(payload["mac_key"]),
            payload["assoc_type"],
            int(payload["issued"]),
            int(payload["lifetime"]),
            bool(payload.get("private", False)),
        )

    @classmethod
    def fresh(
        cls,
        assoc_type: str,
        *,
        lifetime: int = DEFAULT_LIFETIME,
        now: float | None = None,
        private: bool = False,
    ) -> "Association":
        now = time.time() if now is None else now
        return cls(new_handle(), new_mac_key(assoc_type), assoc_type, int(now), lifetime, private)


# -- requester side --------------------------------------------------------


def _b64_btwoc(n: int) -> str:
    return base64.b64encode(btwoc(n)).decode("ascii")


def _unb64_btwoc(text: str) -> int:
    try:
        return unbtwoc(base64.b64decode(text, validate=True))
    except (ValueError, TypeError) as exc:
        raise AssociationError(f"bad number encoding: {exc}") from None


def build_associate_request(
    keypair: DhKeyPair | None,
    assoc_type: str = DEFAULT_ASSOC_TYPE,
    session_type: str = DEFAULT_SESSION_TYPE,
) -> Message:
    """Direct request opening an exchange.  ``keypair`` is None only for the
    no-encryption session, where the key comes back in the clear."""
    _check_type_pairing(assoc_type, session_type)
    msg = Message(
        {
            "ns": OPENID2_NS,
            "mode": "associate",
            "assoc_type": assoc_type,
            "session_type": session_type,
        }
    )
    if session_type == "no-encryption":
        if keypair is not None:
            raise AssociationError("no-encryption session takes no key pair")
        return msg
    if keypair is None:
        raise AssociationError(f"{session_type} session requires a key pair")
    msg.set("dh_modulus", _b64_btwoc(keypair.params.modulus))
    msg.set("dh_gen", _b64_btwoc(keypair.params.generator))
    msg.set("dh_consumer_public", _b64_btwoc(keypair.public))
    return msg


def parse_associate_response(
    response: Message,
    keypair: DhKeyPair | None,
    *,
    assoc_type: str = DEFAULT_ASSOC_TYPE,
    session_type: str = DEFAULT_SESSION_TYPE,
    now: float | None = None,
) -> Association:
    """Recover the MAC key from the provider's reply to our request."""
    if response.get("error_code") == "unsupported-type":
        raise NegotiationError(response.get("assoc_type"), response.get("session_type"))
    if "error" in response:
        raise AssociationError(f"provider refused association: {response['error']}")
    if response.get("assoc_type") != assoc_type:
        raise AssociationError(f"reply changed assoc_type to {response.get('assoc_type')!r}")
    if response.get("session_type") != session_type:
        raise AssociationError(f"reply changed session_type to {response.get('session_type')!r}")
    handle = response["assoc_handle"]
    if not valid_handle(handle):
        raise AssociationError(f"unusable association handle {handle!r}")
    try:
        lifetime = int(response["expires_in"])
    except ValueError:
        raise AssociationError("expires_in is not an integer") from None
    if lifetime <= 0:
        raise AssociationError("association already expired on arrival")
    if session_type == "no-encryption":
        mac_key = base64.b64decode(response["mac_key"])
    else:
        if keypair is None:
            raise AssociationError("cannot unmask key without our key pair")
        server_public = _unb64_btwoc(response["dh_server_public"])
        shared = shared_secret(keypair, server_public)
        enc = base64.b64decode(response["enc_mac_key"])
        mac_key = unmask_mac_key(session_type, shared, enc)
    if len(mac_key) != MAC_KEY_LENGTHS[assoc_type]:
        raise AssociationError("MAC key length does not match association type")
    now = time.time() if now is None else now
    return Association(handle, mac_key, assoc_type, int(now), lifetime)


# -- responder side --------------------------------------------------------


@dataclass(frozen=True)
class AssociateResult:
    response: Message
    association: Association | None


def respond_to_associate(
    request: Message,
    *,
    lifetime: int = DEFAULT_LIFETIME,
    now: float | None = None,
) -> AssociateResult:
    """Answer an association request.

    On an unacceptable type pairing the response names our preferred types
    and no association is made; the requester may retry once with them.
    Malformed group numbers raise instead, which callers surface as a
    direct error.
    """
    assoc_type = request.get("assoc_type", "")
    session_type = request.get("session_type", "")
    try:
        _check_type_pairing(assoc_type, session_type)
    except NegotiationError as pref:
        return AssociateResult(
            Message(
                {
                    "ns": OPENID2_NS,
                    "error": "unsupported association or session type",
                    "error_code": "unsupported-type",
                    "assoc_type": pref.assoc_type or DEFAULT_ASSOC_TYPE,
                    "session_type": pref.session_type or DEFAULT_SESSION_TYPE,
                }
            ),
            None,
        )
    association = Association.fresh(assoc_type, lifetime=lifetime, now=now)
    response = Message(
        {
            "ns": OPENID2_NS,
            "assoc_handle": association.handle,
            "assoc_type": assoc_type,
            "session_type": session_type,
            "expires_in": str(lifetime),
        }
    )
    if session_type == "no-encryption":
        response.set("mac_key", base64.b64encode(association.mac_key).decode("ascii"))
        return AssociateResult(response, association)
    params = DhParams(
        _unb64_btwoc(request["dh_modulus"]) if "dh_modulus" in request else DEFAULT_DH_MODULUS,
        _unb64_btwoc(request["dh_gen"]) if "dh_gen" in request else DEFAULT_DH_GENERATOR,
    )
    consumer_public = _unb64_btwoc(request["dh_consumer_public"])
    server_keypair = generate_keypair(params)
    shared = shared_secret(server_keypair, consumer_public)
    masked = mask_mac_key(session_type, shared, association.mac_key)
    response.set("dh_server_public", _b64_btwoc(server_keypair.public))
    response.set("enc_mac_key", base64.b64encode(masked).decode("ascii"))
    return AssociateResult(response, association)


# -- bookkeeping -----------------------------------------------------------


class AssociationStore:
    """Associations held by one party, keyed by peer endpoint and handle.

    Backed by a record store when given one, so agreed keys survive a
    restart; otherwise purely in memory.
    """

    KIND = "associations"

    def __init__(self, store=None) -> None:
        self._store = store
        self._assocs: dict[tuple[str, str], Association] = {}
        if store is not None:
            for rec in store.scan(self.KIND):
                payload = rec.payload
                assoc = Association.from_payload(payload)
                self._assocs[(payload["endpoint"], assoc.handle)] = assoc

    @staticmethod
    def _record_key(endpoint: str, handle: str) -> str:
        raw = endpoint.encode("utf-8") + b"\x00" + handle.encode("utf-8")
        return hashlib.sha256(raw).hexdigest()

    def add(self, endpoint: str, association: Association) -> None:
        self._assocs[(endpoint, association.handle)] = association
        if self._store is not None:
            payload = association.to_payload()
            payload["endpoint"] = endpoint
            self._store.put(self.KIND, self._record_key(endpoint, association.handle), payload)

    def get(self, endpoint: str, handle: str, now: float | None = None) -> Association | None:
        assoc = self._assocs.get((endpoint, handle))
        if assoc is None:
            return None
        if not assoc.is_valid(now):
            self.remove(endpoint, handle)
            return None
        return assoc

    def best(self, endpoint: str, now: float | None = None) -> Association | None:
        """Longest-lived valid association with the peer, if any."""
        live = [
            a
            for (ep, _), a in list(self._assocs.items())
            if ep == endpoint and a.is_valid(now)
        ]
        if not live:
            return None
        return max(live, key=lambda a: (a.expires_at, a.handle))

    def remove(self, endpoint: str, handle: str) -> None:
        self._assocs.pop((endpoint, handle), None)
        if self._store is not None:
            self._store.delete(self.KIND, self._record_key(endpoint, handle))

    def prune(self, now: float | None = None) -> int:
        stale = [k for k, a in self._assocs.items() if not a.is_valid(now)]
        for endpoint, handle in stale:
            self.remove(endpoint, handle)
        return len(stale)
