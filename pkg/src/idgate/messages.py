"""Wire formats for the sign-on protocol.

Two encodings carry every protocol message:

* Direct exchanges (association, signature verification) use the key-value
  form: one ``key:value`` pair per line, split on the first colon, newline
  terminated.
* Indirect exchanges (redirects through the browser) rename each field to
  ``openid.<name>`` and carry it as a percent-encoded query parameter.  Only
  unreserved characters stay literal and a space is ``%20``, never ``+``.

Also here: the minimal big-endian two's-complement integer encoding used by
the key-exchange, HMAC signing over an explicit signed-field list, and the
timestamped response nonce.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Iterator, Mapping
from urllib.parse import quote, unquote

OPENID2_NS = "http://specs.openid.net/auth/2.0"
SREG_NS = "http://openid.net/extensions/sreg/1.1"

OPENID_PREFIX = "openid."

# Profile fields the sreg extension may carry.
SREG_FIELDS = (
    "nickname",
    "email",
    "fullname",
    "dob",
    "gender",
    "postcode",
    "country",
    "language",
    "timezone",
)

SIGNATURE_ALGORITHMS = {
    "HMAC-SHA1": hashlib.sha1,
    "HMAC-SHA256": hashlib.sha256,
}

DEFAULT_ASSOC_TYPE = "HMAC-SHA256"

NONCE_TIME_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
NONCE_SALT_LENGTH = 6
NONCE_ALPHABET = (
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"
)


class MessageError(Exception):
    """Malformed or unsignable protocol message."""


class KvError(MessageError):
    """Text that does not parse as (or values that cannot encode to) the
    key-value form."""


# -- key-value form --------------------------------------------------------


def kv_encode(data: Mapping[str, str] | Iterable[tuple[str, str]]) -> str:
    """Render pairs as ``key:value`` lines in the given order."""
    items = data.items() if isinstance(data, Mapping) else data
    out = []
    for key, value in items:
        if ":" in key or "\n" in key:
            raise KvError(f"key may not contain colon or newline: {key!r}")
        if "\n" in value:
            raise KvError(f"value may not contain newline: {value!r}")
        out.append(f"{key}:{value}\n")
    return "".join(out)


def kv_decode(text: str) -> dict[str, str]:
    """Parse key-value lines; splits each line on its first colon.

    Rejects lines without a colon, repeated keys, and a final line missing
    its newline, so decode(encode(d)) == d exactly.
    """
    result: dict[str, str] = {}
    if not text:
        return result
    if not text.endswith("\n"):
        raise KvError("unterminated final line")
    for lineno, line in enumerate(text.split("\n")[:-1], start=1):
        key, colon, value = line.partition(":")
        if not colon:
            raise KvError(f"line {lineno} has no colon: {line!r}")
        if key in result:
            raise KvError(f"line {lineno} repeats key {key!r}")
        result[key] = value
    return result


# -- integer encoding ------------------------------------------------------


def btwoc(n: int) -> bytes:
    """Shortest big-endian two's-complement encoding of a nonnegative
    integer; the high bit of the first byte is always clear."""
    if n < 0:
        raise ValueError("btwoc is defined for nonnegative integers only")
    return n.to_bytes((n.bit_length() + 8) // 8 or 1, "big")


def unbtwoc(data: bytes) -> int:
    if not data:
        raise ValueError("empty btwoc value")
    if data[0] & 0x80:
        raise ValueError("negative btwoc value")
    return int.from_bytes(data, "big")


# -- indirect (query string) form ------------------------------------------


def quote_param(value: str) -> str:
    # safe="" leaves exactly ALPHA / DIGIT / "-" / "." / "_" / "~" literal.
    return quote(value, safe="")


def encode_query(params: Mapping[str, str] | Iterable[tuple[str, str]]) -> str:
    items = params.items() if isinstance(params, Mapping) else params
    return "&".join(f"{quote_param(k)}={quote_param(v)}" for k, v in items)


def decode_query(query: str) -> list[tuple[str, str]]:
    """Split a raw query string into decoded pairs.

    A literal ``+`` stays a plus sign; only percent escapes are decoded.
    """
    pairs: list[tuple[str, str]] = []
    for part in query.split("&"):
        if not part:
            continue
        key, _, value = part.partition("=")
        pairs.append((unquote(key), unquote(value)))
    return pairs


def append_query(url: str, query: str) -> str:
    if not query:
        return url
    sep = "&" if "?" in url else "?"
    return url + sep + query


# -- protocol messages -----------------------------------------------------


@dataclass
class Message:
    """An ordered bag of protocol fields, without the ``openid.`` prefix.

    The same object renders to either wire form; factories that build
    concrete requests decide which fields (such as ``ns``) are present.
    """

    fields: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_kv(cls, text: str) -> "Message":
        return cls(kv_decode(text))

    @classmethod
    def from_query(cls, params: Mapping[str, str] | Iterable[tuple[str, str]]) -> "Message":
        """Keep only ``openid.``-prefixed parameters, stripping the prefix."""
        items = params.items() if isinstance(params, Mapping) else params
        fields: dict[str, str] = {}
        for key, value in items:
            if key.startswith(OPENID_PREFIX):
                name = key[len(OPENID_PREFIX):]
                if name in fields:
                    raise MessageError(f"repeated parameter {key!r}")
                fields[name] = value
        return cls(fields)

    @classmethod
    def from_query_string(cls, query: str) -> "Message":
        return cls.from_query(decode_query(query))

    def to_kv(self) -> str:
        return kv_encode(self.fields)

    def to_query_args(self) -> dict[str, str]:
        return {OPENID_PREFIX + k: v for k, v in self.fields.items()}

    def to_query_string(self) -> str:
        return encode_query(self.to_query_args())

    def to_url(self, base: str) -> str:
        return append_query(base, self.to_query_string())

    # Mapping-flavoured access.

    def __contains__(self, key: str) -> bool:
        return key in self.fields

    def __getitem__(self, key: str) -> str:
        try:
            return self.fields[key]
        except KeyError:
            raise MessageError(f"missing field {key!r}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self.fields)

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.fields.get(key, default)

    def set(self, key: str, value: str) -> "Message":
        self.fields[key] = value
        return self

    def copy(self) -> "Message":
        return Message(dict(self.fields))

    @property
    def namespace(self) -> str | None:
        return self.fields.get("ns")

    @property
    def mode(self) -> str | None:
        return self.fields.get("mode")


# -- signing ---------------------------------------------------------------


def signature_base(message: Message, signed_fields: Iterable[str]) -> bytes:
    """Key-value rendering of the named fields, in list order; this is the
    byte string the MAC covers."""
    pairs = []
    for name in signed_fields:
        if name not in message:
            raise MessageError(f"signed list names absent field {name!r}")
        pairs.append((name, message[name]))
    return kv_encode(pairs).encode("utf-8")


def compute_mac(assoc_type: str, mac_key: bytes, base: bytes) -> bytes:
    try:
        digestmod = SIGNATURE_ALGORITHMS[assoc_type]
    except KeyError:
        raise MessageError(f"unknown association type {assoc_type!r}") from None
    return hmac.new(mac_key, base, digestmod).digest()


def sign_message(message: Message, assoc_type: str, mac_key: bytes) -> Message:
    """Return a copy carrying ``signed`` (sorted list of every field plus the
    list itself) and a base64 ``sig`` over exactly those fields."""
    if "sig" in message or "signed" in message:
        raise MessageError("message already signed")
    signed = message.copy()
    signed_fields = sorted(list(signed.fields) + ["signed"])
    signed.set("signed", ",".join(signed_fields))
    mac = compute_mac(assoc_type, mac_key, signature_base(signed, signed_fields))
    signed.set("sig", base64.b64encode(mac).decode("ascii"))
    return signed


def verify_signature(message: Message, assoc_type: str, mac_key: bytes) -> bool:
    """Recompute the MAC over the declared signed list and compare in
    constant time.  Any structural defect fails closed."""
    try:
        signed_fields = message["signed"].split(",")
        presented = message["sig"]
        claimed = base64.b64decode(presented, validate=True)
        # only the canonical encoding is accepted: base64 leaves unused
        # bits in its final character, so one MAC has several spellings
        if base64.b64encode(claimed).decode("ascii") != presented:
            return False
        expected = compute_mac(
            assoc_type, mac_key, signature_base(message, signed_fields)
        )
    except (MessageError, ValueError):
        return False
    return hmac.compare_digest(claimed, expected)


# -- response nonce --------------------------------------------------------


def make_nonce(when: datetime | None = None) -> str:
    """Timestamp (UTC, second resolution) plus a random 6-character suffix."""
    when = when or datetime.now(timezone.utc)
    stamp = when.astimezone(timezone.utc).strftime(NONCE_TIME_FORMAT)
    salt = "".join(secrets.choice(NONCE_ALPHABET) for _ in range(NONCE_SALT_LENGTH))
    return stamp + salt


def split_nonce(nonce: str) -> tuple[datetime, str]:
    """Timestamp and salt of a nonce; raises ``ValueError`` when either part
    is malformed."""
    stamp, salt = nonce[:20], nonce[20:]
    when = datetime.strptime(stamp, NONCE_TIME_FORMAT).replace(tzinfo=timezone.utc)
    if not salt or any(c not in NONCE_ALPHABET for c in salt):
        raise ValueError(f"malformed nonce salt in {nonce!r}")
    return when, salt
