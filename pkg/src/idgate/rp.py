"""Relying-party side of the sign-on flow.

``Consumer.begin`` resolves a typed identifier, lines up a shared MAC key
with the provider when it can, and produces the redirect that sends the
browser off to authenticate.  ``Consumer.complete`` takes the parameters
the browser brings back and decides, fail-closed, whether they prove the
identity: every structural check must pass, the signature must verify
(locally or by one direct call back to the provider), and the response
nonce must be fresh and never seen before.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping
from urllib.parse import urlsplit

from .association import (
    DEFAULT_ASSOC_TYPE,
    DEFAULT_SESSION_TYPE,
    MAC_KEY_LENGTHS,
    SESSION_HASHES,
    Association,
    AssociationError,
    AssociationStore,
    NegotiationError,
    build_associate_request,
    generate_keypair,
    parse_associate_response,
)
from .discovery import DiscoveryError, discover
from .fetch import Fetcher, FetchError
from .messages import (
    OPENID2_NS,
    SREG_FIELDS,
    SREG_NS,
    Message,
    MessageError,
    split_nonce,
)

logger = logging.getLogger(__name__)

KV_CONTENT_TYPE = "text/plain; charset=utf-8"

# Freshness window for response nonces, and how long seen ones are kept.
# Retention exceeds the window, so a nonce can never be accepted twice.
NONCE_SKEW = 300
NONCE_RETENTION = 600

V2_REQUIRED_SIGNED = ("op_endpoint", "return_to", "response_nonce", "assoc_handle")
V1_REQUIRED_SIGNED = ("identity", "return_to")

DEFAULT_PORTS = {"http": "80", "https": "443"}


class ProtocolError(Exception):
    """A request cannot be built as asked."""


class VerificationFailure(Exception):
    """Why a returned assertion was rejected."""


# -- realm handling --------------------------------------------------------


def validate_realm(realm: str) -> None:
    """Shape check: http(s), no fragment, at most one wildcard and only as
    the leading host label."""
    split = urlsplit(realm)
    if split.scheme not in ("http", "https"):
        raise ProtocolError(f"realm scheme must be http or https: {realm!r}")
    if split.fragment:
        raise ProtocolError(f"realm may not carry a fragment: {realm!r}")
    host = split.netloc.rsplit("@", 1)[-1].split(":", 1)[0]
    if not host:
        raise ProtocolError(f"realm has no host: {realm!r}")
    if "*" in host:
        if not host.startswith("*."):
            raise ProtocolError(f"wildcard must be the leading label: {realm!r}")
        if "*" in host[2:] or host[2:] == "":
            raise ProtocolError(f"only one leading wildcard allowed: {realm!r}")
    if "*" in split.path:
        raise ProtocolError(f"wildcards belong in the host, not the path: {realm!r}")


def _port_of(split, scheme: str) -> str:
    return str(split.port) if split.port is not None else DEFAULT_PORTS.get(scheme, "")


def realm_matches(realm: str, url: str) -> bool:
    """Does the URL sit inside the realm?  Scheme and port must agree, the
    host must equal the realm's (or sit under a ``*.`` wildcard), and the
    path must be the realm's path or below it."""
    try:
        validate_realm(realm)
    except ProtocolError:
        return False
    r, u = urlsplit(realm), urlsplit(url)
    if u.scheme != r.scheme:
        return False
    r_host = (r.hostname or "").lower()
    u_host = (u.hostname or "").lower()
    if not u_host:
        return False
    if r_host.startswith("*."):
        suffix = r_host[2:]
        if u_host != suffix and not u_host.endswith("." + suffix):
            return False
    elif u_host != r_host:
        return False
    if _port_of(u, u.scheme) != _port_of(r, r.scheme):
        return False
    r_path = r.path or "/"
    u_path = u.path or "/"
    if u_path == r_path:
        return True
    prefix = r_path if r_path.endswith("/") else r_path + "/"
    return u_path.startswith(prefix)


# -- nonce bookkeeping -----------------------------------------------------


class NonceStore:
    """Remembers response nonces per endpoint so each is honoured once.

    ``check_and_store`` is a single atomic gate: under concurrency, exactly
    one caller presenting a given nonce inside the window wins.
    """

    def __init__(self, skew: int = NONCE_SKEW, retention: int = NONCE_RETENTION):
        if retention < skew:
            raise ValueError("retention must be at least the freshness window")
        self._skew = skew
        self._retention = retention
        self._seen: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()

    def check_and_store(self, endpoint: str, nonce: str, now: float | None = None) -> bool:
        now = time.time() if now is None else now
        try:
            stamp, _ = split_nonce(nonce)
        except ValueError:
            return False
        issued = stamp.timestamp()
        if abs(now - issued) > self._skew:
            return False
        with self._lock:
            cutoff = now - self._retention
            for key, when in list(self._seen.items()):
                if when < cutoff:
                    del self._seen[key]
            key = (endpoint, nonce)
            if key in self._seen:
                return False
            self._seen[key] = issued
            return True

    def __len__(self) -> int:
        with self._lock:
            return len(self._seen)


# -- request state ---------------------------------------------------------


@dataclass
class AuthRequest:
    """One begun sign-on attempt; survives the redirect round trip by being
    serialized into the requester's session."""

    claimed_id: str
    identity: str
    op_endpoint: str
    version: str
    assoc_handle: str | None = None
    sreg_required: tuple[str, ...] = ()
    sreg_optional: tuple[str, ...] = ()
    realm: str | None = None
    return_to: str | None = None

    def add_sreg(
        self, required: Iterable[str] = (), optional: Iterable[str] = ()
    ) -> "AuthRequest":
        required = tuple(required)
        optional = tuple(optional)
        for name in (*required, *optional):
            if name not in SREG_FIELDS:
                raise ProtocolError(f"unknown profile field {name!r}")
        self.sreg_required = required
        self.sreg_optional = optional
        return self

    def redirect_url(self, realm: str, return_to: str) -> str:
        """Provider URL that carries the sign-on request in its query."""
        validate_realm(realm)
        if not realm_matches(realm, return_to):
            raise ProtocolError(f"return URL {return_to!r} lies outside realm {realm!r}")
        self.realm = realm
        self.return_to = return_to
        if self.version == "2.0":
            msg = Message(
                {
                    "ns": OPENID2_NS,
                    "mode": "checkid_setup",
                    "claimed_id": self.claimed_id,
                    "identity": self.identity,
                    "return_to": return_to,
                    "realm": realm,
                }
            )
        else:
            msg = Message(
                {
                    "mode": "checkid_setup",
                    "identity": self.identity,
                    "return_to": return_to,
                    "trust_root": realm,
                }
            )
        if self.assoc_handle:
            msg.set("assoc_handle", self.assoc_handle)
        if self.sreg_required or self.sreg_optional:
            msg.set("ns.sreg", SREG_NS)
            if self.sreg_required:
                msg.set("sreg.required", ",".join(self.sreg_required))
            if self.sreg_optional:
                msg.set("sreg.optional", ",".join(self.sreg_optional))
        return msg.to_url(self.op_endpoint)

    def to_payload(self) -> dict:
        return {
            "claimed_id": self.claimed_id,
            "identity": self.identity,
            "op_endpoint": self.op_endpoint,
            "version": self.version,
            "assoc_handle": self.assoc_handle,
            "sreg_required": list(self.sreg_required),
            "sreg_optional": list(self.sreg_optional),
            "realm": self.realm,
            "return_to": self.return_to,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "AuthRequest":
        return cls(
            payload["claimed_id"],
            payload["identity"],
            payload["op_endpoint"],
            payload["version"],
            payload.get("assoc_handle"),
            tuple(payload.get("sreg_required", ())),
            tuple(payload.get("sreg_optional", ())),
            payload.get("realm"),
            payload.get("return_to"),
        )


@dataclass(frozen=True)
class AuthOutcome:
    status: str
    identity: str | None = None
    claimed_id: str | None = None
    sreg: Mapping[str, str] = field(default_factory=dict)
    message: str | None = None

    @classmethod
    def success(cls, identity: str, claimed_id: str, sreg: Mapping[str, str]) -> "AuthOutcome":
        return cls("success", identity, claimed_id, dict(sreg))

    @classmethod
    def cancelled(cls) -> "AuthOutcome":
        return cls("cancel")

    @classmethod
    def failed(cls, message: str) -> "AuthOutcome":
        return cls("failure", message=message)


# -- the consumer ----------------------------------------------------------


class Consumer:
    """Relying-party engine: resolves identifiers, manages provider keys,
    builds redirects, and verifies what comes back."""

    def __init__(
        self,
        fetcher: Fetcher,
        associations: AssociationStore | None = None,
        nonces: NonceStore | None = None,
        clock=time.time,
    ) -> None:
        self.fetcher = fetcher
        self.associations = associations if associations is not None else AssociationStore()
        self.nonces = nonces if nonces is not None else NonceStore()
        self.clock = clock

    # -- starting ----------------------------------------------------------

    def begin(self, user_input: str) -> AuthRequest:
        """Resolve the identifier and prepare a request.  Association
        trouble downgrades to the stateless flow instead of blocking the
        login."""
        result = discover(self.fetcher, user_input)
        assoc = self.associations.best(result.op_endpoint, now=self.clock())
        if assoc is None:
            assoc = self._associate(result.op_endpoint)
        return AuthRequest(
            result.claimed_id,
            result.identity,
            result.op_endpoint,
            result.version,
            assoc.handle if assoc else None,
        )

    def _associate(self, endpoint: str) -> Association | None:
        assoc_type, session_type = DEFAULT_ASSOC_TYPE, DEFAULT_SESSION_TYPE
        for attempt in range(2):
            try:
                assoc = self._associate_once(endpoint, assoc_type, session_type)
            except NegotiationError as pref:
                if attempt or not pref.assoc_type or not pref.session_type:
                    logger.warning("association with %s failed to negotiate", endpoint)
                    return None
                assoc_type, session_type = pref.assoc_type, pref.session_type
                if assoc_type not in MAC_KEY_LENGTHS or session_type not in SESSION_HASHES:
                    logger.warning("%s offered unusable types %s/%s", endpoint, assoc_type, session_type)
                    return None
                continue
            except (AssociationError, FetchError, MessageError) as exc:
                logger.warning("association with %s failed: %s", endpoint, exc)
                return None
            self.associations.add(endpoint, assoc)
            return assoc
        return None

    def _associate_once(
        self, endpoint: str, assoc_type: str, session_type: str
    ) -> Association:
        keypair = generate_keypair()
        request = build_associate_request(keypair, assoc_type, session_type)
        response = self.fetcher.post(endpoint, request.to_kv().encode(), KV_CONTENT_TYPE)
        reply = Message.from_kv(response.text)
        return parse_associate_response(
            reply,
            keypair,
            assoc_type=assoc_type,
            session_type=session_type,
            now=self.clock(),
        )

    # -- finishing ---------------------------------------------------------

    def complete(
        self,
        params: Mapping[str, str],
        current_url: str,
        request: AuthRequest,
    ) -> AuthOutcome:
        """Judge the parameters the browser returned with."""
        try:
            msg = Message.from_query(params)
        except MessageError as exc:
            return AuthOutcome.failed(f"malformed response: {exc}")
        mode = msg.mode
        if mode == "cancel":
            return AuthOutcome.cancelled()
        if mode == "error":
            return AuthOutcome.failed(msg.get("error") or "provider reported an error")
        if mode != "id_res":
            return AuthOutcome.failed(f"unexpected response mode {mode!r}")
        try:
            self._verify(msg, current_url, request)
            sreg = self._extract_sreg(msg)
        except VerificationFailure as exc:
            return AuthOutcome.failed(str(exc))
        return AuthOutcome.success(msg.get("identity") or request.identity, request.claimed_id, sreg)

    def _verify(self, msg: Message, current_url: str, request: AuthRequest) -> None:
        if request.version == "2.0":
            if msg.namespace != OPENID2_NS:
                raise VerificationFailure("missing or wrong protocol namespace")
            if msg.get("op_endpoint") != request.op_endpoint:
                raise VerificationFailure("endpoint does not match discovery")
            if msg.get("claimed_id") != request.claimed_id:
                raise VerificationFailure("claimed identifier changed during verification")
            if msg.get("identity") != request.identity:
                raise VerificationFailure("identity changed during verification")
        else:
            if msg.namespace is not None and msg.namespace != OPENID2_NS:
                raise VerificationFailure("unexpected protocol namespace")
            if msg.get("identity") != request.identity:
                raise VerificationFailure("identity changed during verification")
        self._check_return_to(msg, current_url, request)
        self._check_signed_coverage(msg, request)
        self._check_signature(msg, request)
        self._check_nonce(msg, request)

    def _check_return_to(self, msg: Message, current_url: str, request: AuthRequest) -> None:
        try:
            stated = msg["return_to"]
        except MessageError:
            raise VerificationFailure("response carries no return URL") from None
        s, c = urlsplit(stated), urlsplit(current_url)
        if (s.scheme, s.netloc, s.path) != (c.scheme, c.netloc, c.path):
            raise VerificationFailure("return URL does not match the receiving URL")
        current_pairs = set(_query_pairs(c.query))
        for pair in _query_pairs(s.query):
            if pair not in current_pairs:
                raise VerificationFailure("return URL query was altered")
        if request.return_to is not None:
            r = urlsplit(request.return_to)
            if (s.scheme, s.netloc, s.path) != (r.scheme, r.netloc, r.path):
                raise VerificationFailure("return URL does not match the request")

    def _check_signed_coverage(self, msg: Message, request: AuthRequest) -> None:
        try:
            signed = msg["signed"].split(",")
        except MessageError:
            raise VerificationFailure("response is unsigned") from None
        required = list(
            V2_REQUIRED_SIGNED if request.version == "2.0" else V1_REQUIRED_SIGNED
        )
        for name in ("claimed_id", "identity"):
            if name in msg and name not in required:
                required.append(name)
        for name in required:
            if name not in signed:
                raise VerificationFailure(f"field {name!r} is not covered by the signature")

    def _check_signature(self, msg: Message, request: AuthRequest) -> None:
        handle = msg.get("assoc_handle", "")
        assoc = self.associations.get(request.op_endpoint, handle, now=self.clock())
        if assoc is not None:
            if not assoc.verify(msg):
                raise VerificationFailure("signature verification failed")
            return
        if not self._check_authentication(msg, request.op_endpoint):
            raise VerificationFailure("provider did not confirm the assertion")

    def _check_authentication(self, msg: Message, endpoint: str) -> bool:
        """Stateless verification: send the assertion back over a direct
        call and let the provider check its own signature."""
        direct = msg.copy()
        direct.fields["mode"] = "check_authentication"
        try:
            response = self.fetcher.post(endpoint, direct.to_kv().encode(), KV_CONTENT_TYPE)
            reply = Message.from_kv(response.text)
        except (FetchError, MessageError) as exc:
            logger.warning("check_authentication with %s failed: %s", endpoint, exc)
            return False
        invalidate = reply.get("invalidate_handle")
        if invalidate:
            self.associations.remove(endpoint, invalidate)
        return response.ok and reply.get("is_valid") == "true"

    def _check_nonce(self, msg: Message, request: AuthRequest) -> None:
        nonce = msg.get("response_nonce")
        if nonce is None:
            if request.version == "2.0":
                raise VerificationFailure("response carries no nonce")
            return
        if not self.nonces.check_and_store(request.op_endpoint, nonce, now=self.clock()):
            raise VerificationFailure("response nonce was already used or is out of window")

    def _extract_sreg(self, msg: Message) -> dict[str, str]:
        signed = set(msg.get("signed", "").split(","))
        present = [name for name in msg if name.startswith("sreg.")]
        if not present:
            return {}
        ns = msg.get("ns.sreg")
        if ns is not None and (ns != SREG_NS or "ns.sreg" not in signed):
            raise VerificationFailure("profile extension namespace is wrong or unsigned")
        values: dict[str, str] = {}
        for name in present:
            field_name = name[len("sreg."):]
            if field_name not in SREG_FIELDS:
                continue
            if name not in signed:
                raise VerificationFailure(f"profile field {field_name!r} is not signed")
            values[field_name] = msg[name]
        return values


def _query_pairs(query: str) -> list[tuple[str, str]]:
    from .messages import decode_query

    return decode_query(query)
