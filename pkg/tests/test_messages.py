"""Wire codec behaviour: key-value form, query form, integers, signatures."""

import base64
import random
import string
from datetime import datetime, timezone

import pytest

from idgate.messages import (
    NONCE_ALPHABET,
    OPENID2_NS,
    KvError,
    Message,
    MessageError,
    append_query,
    btwoc,
    compute_mac,
    decode_query,
    encode_query,
    kv_decode,
    kv_encode,
    make_nonce,
    quote_param,
    sign_message,
    signature_base,
    split_nonce,
    unbtwoc,
    verify_signature,
)

# -- key-value form --------------------------------------------------------


def test_kv_encode_known_form():
    text = kv_encode({"mode": "error", "error": "This is an example message"})
    assert text == "mode:error\nerror:This is an example message\n"


def test_kv_decode_splits_on_first_colon():
    assert kv_decode("key:v:alue\n") == {"key": "v:alue"}


def test_kv_value_may_be_empty():
    assert kv_decode("key:\n") == {"key": ""}
    assert kv_encode({"key": ""}) == "key:\n"


def test_kv_empty_message():
    assert kv_encode({}) == ""
    assert kv_decode("") == {}


def test_kv_decode_rejects_colonless_line():
    with pytest.raises(KvError):
        kv_decode("no colon here\n")


def test_kv_decode_rejects_unterminated_tail():
    with pytest.raises(KvError):
        kv_decode("key:value")


def test_kv_decode_rejects_repeated_key():
    with pytest.raises(KvError):
        kv_decode("key:1\nkey:2\n")


def test_kv_encode_rejects_bad_characters():
    with pytest.raises(KvError):
        kv_encode({"a:b": "v"})
    with pytest.raises(KvError):
        kv_encode({"a\nb": "v"})
    with pytest.raises(KvError):
        kv_encode({"a": "v\n"})


def test_kv_roundtrip_bulk():
    rng = random.Random(7)
    key_chars = string.ascii_letters + string.digits + "._-"
    value_chars = key_chars + ": /?&=%+\t"
    for _ in range(2000):
        data = {}
        for _ in range(rng.randrange(0, 8)):
            key = "".join(rng.choice(key_chars) for _ in range(rng.randrange(1, 12)))
            value = "".join(rng.choice(value_chars) for _ in range(rng.randrange(0, 24)))
            data[key] = value
        assert kv_decode(kv_encode(data)) == data


# -- integer encoding ------------------------------------------------------


@pytest.mark.parametrize(
    "n,encoded",
    [
        (0, b"\x00"),
        (1, b"\x01"),
        (127, b"\x7f"),
        (128, b"\x00\x80"),
        (255, b"\x00\xff"),
        (256, b"\x01\x00"),
        (32768, b"\x00\x80\x00"),
    ],
)
def test_btwoc_known_values(n, encoded):
    assert btwoc(n) == encoded
    assert unbtwoc(encoded) == n


def test_btwoc_rejects_negative():
    with pytest.raises(ValueError):
        btwoc(-1)


def test_unbtwoc_rejects_empty_and_negative_forms():
    with pytest.raises(ValueError):
        unbtwoc(b"")
    with pytest.raises(ValueError):
        unbtwoc(b"\x80")


def test_btwoc_roundtrip_bulk():
    rng = random.Random(11)
    for _ in range(2000):
        n = rng.getrandbits(rng.randrange(1, 320))
        assert unbtwoc(btwoc(n)) == n


# -- query form ------------------------------------------------------------


def test_quote_param_strict_unreserved_set():
    assert quote_param("AZaz09-._~") == "AZaz09-._~"
    assert quote_param("a b") == "a%20b"
    assert quote_param("a+b") == "a%2Bb"
    assert quote_param("a/b?c=d&e") == "a%2Fb%3Fc%3Dd%26e"


def test_query_roundtrip_preserves_plus_and_space():
    pairs = [("openid.sig", "ab+/cd=="), ("openid.msg", "hello world")]
    encoded = encode_query(pairs)
    assert "+" not in encoded.replace("%2B", "")
    assert decode_query(encoded) == pairs


def test_append_query_picks_separator():
    assert append_query("http://e/", "a=1") == "http://e/?a=1"
    assert append_query("http://e/?x=1", "a=1") == "http://e/?x=1&a=1"


def test_message_query_roundtrip():
    msg = Message({"ns": OPENID2_NS, "mode": "checkid_setup", "return_to": "http://rp/?x=1"})
    url = msg.to_url("http://op/endpoint")
    query = url.split("?", 1)[1]
    back = Message.from_query_string(query)
    assert back.fields == msg.fields


def test_from_query_ignores_foreign_parameters():
    msg = Message.from_query({"openid.mode": "id_res", "janrain_nonce": "x"})
    assert msg.fields == {"mode": "id_res"}


def test_from_query_rejects_repeats():
    with pytest.raises(MessageError):
        Message.from_query([("openid.mode", "id_res"), ("openid.mode", "cancel")])


# -- signatures ------------------------------------------------------------

HMAC_SHA1_KEY = b"\x0b" * 20
HMAC_SHA1_DATA = b"Hi There"


def test_hmac_sha1_known_answer():
    mac = compute_mac("HMAC-SHA1", HMAC_SHA1_KEY, HMAC_SHA1_DATA)
    assert mac.hex() == "b617318655057264e28bc0b6fb378c8ef146be00"


def test_hmac_sha256_known_answer():
    mac = compute_mac("HMAC-SHA256", HMAC_SHA1_KEY, HMAC_SHA1_DATA)
    assert mac.hex() == (
        "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
    )


def test_unknown_association_type_rejected():
    with pytest.raises(MessageError):
        compute_mac("HMAC-MD5", b"k", b"d")


def test_signature_base_is_ordered_kv():
    msg = Message({"b": "2", "a": "1"})
    assert signature_base(msg, ["a", "b"]) == b"a:1\nb:2\n"
    assert signature_base(msg, ["b", "a"]) == b"b:2\na:1\n"
    with pytest.raises(MessageError):
        signature_base(msg, ["a", "missing"])


@pytest.mark.parametrize("assoc_type", ["HMAC-SHA1", "HMAC-SHA256"])
def test_sign_and_verify_roundtrip(assoc_type):
    key = bytes(range(32))
    msg = Message({"ns": OPENID2_NS, "mode": "id_res", "identity": "http://op/id/u"})
    signed = sign_message(msg, assoc_type, key)
    assert signed["signed"] == "identity,mode,ns,signed"
    assert verify_signature(signed, assoc_type, key)
    # Transport through the query form must not break the signature.
    back = Message.from_query_string(signed.to_query_string())
    assert verify_signature(back, assoc_type, key)


def test_sign_refuses_presigned_message():
    key = b"k" * 20
    signed = sign_message(Message({"mode": "id_res"}), "HMAC-SHA1", key)
    with pytest.raises(MessageError):
        sign_message(signed, "HMAC-SHA1", key)


def test_verify_rejects_wrong_key_and_tampering():
    key = b"k" * 32
    signed = sign_message(
        Message({"mode": "id_res", "identity": "http://op/id/u"}), "HMAC-SHA256", key
    )
    assert not verify_signature(signed, "HMAC-SHA256", b"x" * 32)
    tampered = signed.copy().set("identity", "http://op/id/admin")
    assert not verify_signature(tampered, "HMAC-SHA256", key)


def test_verify_fails_closed_on_structural_defects():
    key = b"k" * 32
    signed = sign_message(Message({"mode": "id_res"}), "HMAC-SHA256", key)
    missing_sig = signed.copy()
    del missing_sig.fields["sig"]
    assert not verify_signature(missing_sig, "HMAC-SHA256", key)
    bad_b64 = signed.copy().set("sig", "!not base64!")
    assert not verify_signature(bad_b64, "HMAC-SHA256", key)
    dangling = signed.copy().set("signed", "mode,ghost,signed")
    assert not verify_signature(dangling, "HMAC-SHA256", key)


def test_non_canonical_sig_spelling_rejected():
    # base64 leaves unused bits in its last character, so one MAC has
    # several spellings; only the canonical one may verify
    key = b"k" * 32
    signed = sign_message(Message({"mode": "id_res"}), "HMAC-SHA256", key)
    sig = signed["sig"]
    assert sig.endswith("=")
    last = sig.rstrip("=")[-1]
    alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
    respelled = alphabet[alphabet.index(last) ^ 1]
    variant = sig.rstrip("=")[:-1] + respelled + "=" * (len(sig) - len(sig.rstrip("=")))
    assert base64.b64decode(variant, validate=True) == base64.b64decode(sig)
    assert not verify_signature(signed.copy().set("sig", variant), "HMAC-SHA256", key)
    assert verify_signature(signed, "HMAC-SHA256", key)


def test_single_bit_flips_in_sig_rejected():
    key = b"k" * 32
    signed = sign_message(Message({"mode": "id_res"}), "HMAC-SHA256", key)
    raw = bytearray(base64.b64decode(signed["sig"]))
    for byte in range(len(raw)):
        for bit in range(8):
            raw[byte] ^= 1 << bit
            flipped = signed.copy().set("sig", base64.b64encode(bytes(raw)).decode())
            assert not verify_signature(flipped, "HMAC-SHA256", key)
            raw[byte] ^= 1 << bit


# -- nonces ----------------------------------------------------------------


def test_nonce_shape_and_roundtrip():
    when = datetime(2008, 9, 18, 4, 14, 41, tzinfo=timezone.utc)
    nonce = make_nonce(when)
    assert nonce.startswith("2008-09-18T04:14:41Z")
    assert len(nonce) == 26
    stamp, salt = split_nonce(nonce)
    assert stamp == when
    assert len(salt) == 6
    assert all(c in NONCE_ALPHABET for c in salt)


def test_nonces_are_unique():
    when = datetime(2008, 9, 18, 4, 14, 41, tzinfo=timezone.utc)
    assert len({make_nonce(when) for _ in range(200)}) == 200


@pytest.mark.parametrize(
    "bad",
    [
        "",
        "2008-09-18T04:14:41Z",
        "2008-09-18T04:14:41Zsal t",
        "2008-13-18T04:14:41Zabcdef",
        "not-a-nonce",
    ],
)
def test_malformed_nonces_rejected(bad):
    with pytest.raises(ValueError):
        split_nonce(bad)
