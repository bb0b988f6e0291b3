"""Provider behaviour: accounts, assertions, direct verification, HTTP."""

import pytest
from fastapi.testclient import TestClient

from idgate.discovery import parse_xrds
from idgate.messages import OPENID2_NS, Message, decode_query
from idgate.op import (
    AccountStore,
    OpError,
    Provider,
    create_op_app,
    hash_password,
    verify_password,
)

# -- password records ------------------------------------------------------


def test_password_roundtrip():
    record = hash_password("s3cret")
    assert verify_password(record, "s3cret")
    assert not verify_password(record, "s3cret ")
    assert not verify_password(record, "")


def test_password_record_shape():
    record = hash_password("x", salt=b"\x01" * 16, iterations=1 << 15)
    assert record["algorithm"] == "pbkdf2-sha256"
    assert record["iterations"] == 32768
    # Same inputs, same digest; fresh salt, fresh digest.
    assert record == hash_password("x", salt=b"\x01" * 16)
    assert hash_password("x") != hash_password("x")


def test_tampered_record_rejected():
    record = hash_password("x")
    assert not verify_password({**record, "algorithm": "md5"}, "x")
    assert not verify_password({**record, "salt": "*bad*"}, "x")
    assert not verify_password({}, "x")


def test_account_store_verification():
    accounts = AccountStore()
    accounts.add("bob", "pw", {"email": "b@e"})
    assert accounts.verify("bob", "pw")
    assert not accounts.verify("bob", "wrong")
    assert not accounts.verify("nobody", "pw")
    assert accounts.usernames() == ["bob"]


def test_account_rejects_bad_profile_field_and_name():
    accounts = AccountStore()
    with pytest.raises(OpError):
        accounts.add("bob", "pw", {"shoe_size": "44"})
    with pytest.raises(OpError):
        accounts.add("a/b", "pw")


# -- identity mapping ------------------------------------------------------


def test_identity_url_mapping(op_provider):
    assert op_provider.identity_url("bob") == "http://op.example/id/bob"
    assert op_provider.username_for_identity("http://op.example/id/bob") == "bob"
    assert op_provider.username_for_identity("http://op.example/id/") is None
    assert op_provider.username_for_identity("http://op.example/id/a/b") is None
    assert op_provider.username_for_identity("http://other.example/id/bob") is None


def test_xrds_document_parses(op_provider):
    services = parse_xrds(op_provider.xrds_document("bob"))
    assert services[0].uris == ("http://op.example/endpoint",)
    assert "http://specs.openid.net/auth/2.0/signon" in services[0].types


# -- checkid handling ------------------------------------------------------


def checkid_message(provider, **overrides):
    fields = {
        "ns": OPENID2_NS,
        "mode": "checkid_setup",
        "claimed_id": provider.identity_url("bob"),
        "identity": provider.identity_url("bob"),
        "return_to": "http://rp.example/cb",
        "realm": "http://rp.example/",
    }
    fields.update(overrides)
    return Message({k: v for k, v in fields.items() if v is not None})


def test_checkid_context(op_provider):
    context = op_provider.checkid_context(checkid_message(op_provider))
    assert context["identity"] == "http://op.example/id/bob"
    assert context["realm"] == "http://rp.example/"


def test_checkid_context_requires_fields(op_provider):
    with pytest.raises(OpError):
        op_provider.checkid_context(checkid_message(op_provider, return_to=None))
    with pytest.raises(OpError):
        op_provider.checkid_context(checkid_message(op_provider, mode="checkid_immediate"))
    with pytest.raises(OpError):
        op_provider.checkid_context(
            checkid_message(op_provider, return_to="javascript:alert(1)")
        )


def test_decide_deny_redirects_with_cancel(op_provider):
    result = op_provider.decide(checkid_message(op_provider), "", "", "deny")
    assert result.redirect_url.startswith("http://rp.example/cb?")
    params = dict(decode_query(result.redirect_url.partition("?")[2]))
    assert params["openid.mode"] == "cancel"
    assert params["openid.ns"] == OPENID2_NS


def test_decide_rejects_identity_not_owned(op_provider):
    msg = checkid_message(
        op_provider,
        identity=op_provider.identity_url("alice"),
        claimed_id=op_provider.identity_url("alice"),
    )
    result = op_provider.decide(msg, "bob", "hunter2", "allow")
    assert result.redirect_url is None
    assert "identity" in result.error


def test_assertion_is_well_formed_and_signed(op_provider):
    msg = checkid_message(op_provider, **{"ns.sreg": "http://openid.net/extensions/sreg/1.1",
                                          "sreg.required": "email,nickname"})
    url = op_provider.build_assertion(msg, "bob")
    assert url.startswith("http://rp.example/cb?")
    assertion = Message.from_query_string(url.partition("?")[2])
    assert assertion.mode == "id_res"
    assert assertion["op_endpoint"] == op_provider.endpoint_url
    assert assertion["identity"] == "http://op.example/id/bob"
    assert assertion["sreg.email"] == "bob@example.org"
    assert assertion["sreg.nickname"] == "bobby"
    signed = assertion["signed"].split(",")
    for name in ("op_endpoint", "return_to", "response_nonce", "assoc_handle",
                 "identity", "claimed_id", "sreg.email", "ns.sreg", "signed"):
        assert name in signed
    handle = assertion["assoc_handle"]
    assoc = op_provider.associations.get(op_provider.endpoint_url, handle)
    assert assoc.verify(assertion)


def test_v1_assertion_shape(op_provider):
    msg = Message(
        {
            "mode": "checkid_setup",
            "identity": op_provider.identity_url("bob"),
            "return_to": "http://rp.example/cb",
            "trust_root": "http://rp.example/",
        }
    )
    url = op_provider.build_assertion(msg, "bob")
    assertion = Message.from_query_string(url.partition("?")[2])
    assert "ns" not in assertion
    assert "op_endpoint" not in assertion
    assert assertion["identity"] == "http://op.example/id/bob"
    assert "response_nonce" in assertion


# -- direct verification ---------------------------------------------------


def signed_private_assertion(provider):
    url = provider.build_assertion(checkid_message(provider, assoc_handle=None), "bob")
    return Message.from_query_string(url.partition("?")[2])


def as_check_auth(assertion):
    direct = assertion.copy()
    direct.fields["mode"] = "check_authentication"
    return direct


def test_check_authentication_confirms_once(op_provider):
    assertion = signed_private_assertion(op_provider)
    first = op_provider.handle_check_authentication(as_check_auth(assertion))
    second = op_provider.handle_check_authentication(as_check_auth(assertion))
    assert first["is_valid"] == "true"
    assert second["is_valid"] == "false"


def test_check_authentication_rejects_tampering(op_provider):
    assertion = signed_private_assertion(op_provider)
    tampered = as_check_auth(assertion).set("identity", "http://op.example/id/alice")
    assert op_provider.handle_check_authentication(tampered)["is_valid"] == "false"


def test_check_authentication_rejects_shared_keys(op_provider, op_fetcher):
    from idgate.rp import Consumer

    consumer = Consumer(op_fetcher)
    request = consumer.begin("op.example/id/bob")
    msg = checkid_message(op_provider, assoc_handle=request.assoc_handle)
    url = op_provider.build_assertion(msg, "bob")
    assertion = Message.from_query_string(url.partition("?")[2])
    assert assertion["assoc_handle"] == request.assoc_handle
    reply = op_provider.handle_check_authentication(as_check_auth(assertion))
    assert reply["is_valid"] == "false"


def test_check_authentication_echoes_dead_handle(op_provider):
    assertion = signed_private_assertion(op_provider)
    direct = as_check_auth(assertion).set("invalidate_handle", "gone-handle")
    reply = op_provider.handle_check_authentication(direct)
    assert reply["invalidate_handle"] == "gone-handle"
    assert reply["is_valid"] == "true"


def test_handle_direct_dispatch(op_provider):
    reply, ok = op_provider.handle_direct("mode:unheard_of\n")
    assert not ok and "error" in reply
    reply, ok = op_provider.handle_direct("not a kv body")
    assert not ok and "error" in reply


# -- the http app ----------------------------------------------------------


@pytest.fixture
def op_client(op_provider):
    return TestClient(create_op_app(op_provider), base_url="http://op.example")


def test_identity_page_served_with_pointer_header(op_client):
    response = op_client.get("http://op.example/id/bob")
    assert response.status_code == 200
    assert response.headers["x-xrds-location"] == "http://op.example/xrds/bob"
    assert 'rel="openid2.provider"' in response.text
    assert op_client.get("http://op.example/id/nobody").status_code == 404


def test_xrds_served_with_content_type(op_client):
    response = op_client.get("http://op.example/xrds/bob")
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("application/xrds+xml")


def test_associate_over_http(op_client):
    from idgate.association import (
        build_associate_request,
        generate_keypair,
        parse_associate_response,
    )

    keypair = generate_keypair()
    request = build_associate_request(keypair)
    response = op_client.post(
        "http://op.example/endpoint",
        content=request.to_kv(),
        headers={"Content-Type": "text/plain; charset=utf-8"},
    )
    assert response.status_code == 200
    assoc = parse_associate_response(Message.from_kv(response.text), keypair)
    assert len(assoc.mac_key) == 32


def test_bad_direct_request_gets_400(op_client):
    response = op_client.post("http://op.example/endpoint", content="junk")
    assert response.status_code == 400
    assert "error" in Message.from_kv(response.text)


def test_login_form_and_decision_flow(op_provider, op_client):
    url = checkid_message(op_provider).to_url("http://op.example/endpoint")
    form_page = op_client.get(url)
    assert form_page.status_code == 200
    assert "http://op.example/id/bob" in form_page.text
    assert 'name="request"' in form_page.text

    query = url.split("?", 1)[1]
    good = op_client.post(
        "http://op.example/endpoint/decision",
        data={"request": query, "username": "bob", "password": "hunter2", "decision": "allow"},
        follow_redirects=False,
    )
    assert good.status_code == 302
    location = good.headers["location"]
    assert location.startswith("http://rp.example/cb?")
    assert "openid.sig=" in location


def test_decision_with_wrong_password_retries(op_provider, op_client):
    query = checkid_message(op_provider).to_query_string()
    response = op_client.post(
        "http://op.example/endpoint/decision",
        data={"request": query, "username": "bob", "password": "nope", "decision": "allow"},
    )
    assert response.status_code == 403
    assert "Wrong username or password." in response.text


def test_decision_deny_over_http(op_provider, op_client):
    query = checkid_message(op_provider).to_query_string()
    response = op_client.post(
        "http://op.example/endpoint/decision",
        data={"request": query, "decision": "deny"},
        follow_redirects=False,
    )
    assert response.status_code == 302
    assert "openid.mode=cancel" in response.headers["location"]


def test_endpoint_get_without_mode_is_informational(op_client):
    response = op_client.get("http://op.example/endpoint")
    assert response.status_code == 200


def test_malformed_checkid_gets_400(op_client):
    response = op_client.get(
        "http://op.example/endpoint?openid.mode=checkid_setup&openid.identity=x"
    )
    assert response.status_code == 400
