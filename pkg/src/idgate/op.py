"""A small identity provider for exercising the sign-on flow end to end.

It publishes identity pages with both discovery mechanisms, answers
association requests, shows a combined login-and-approval form for each
sign-on, and mints signed assertions.  Relying parties that keep no state
can send an assertion back over a direct call; such checks ride on keys the
provider never shared and each assertion passes at most once.

Accounts live in memory with salted, stretched password verifiers; this
component backs tests and demos, not production identity.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import html
import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping
from urllib.parse import parse_qsl, urlsplit

from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, PlainTextResponse, RedirectResponse

from .association import (
    DEFAULT_LIFETIME,
    Association,
    AssociationError,
    AssociationStore,
    respond_to_associate,
)
from .messages import OPENID2_NS, SREG_FIELDS, SREG_NS, Message, MessageError, make_nonce

PBKDF2_ALGORITHM = "pbkdf2-sha256"
PBKDF2_ITERATIONS = 1 << 15
PBKDF2_SALT_BYTES = 16

# How long a consumed assertion nonce stays on record.
CHECKED_NONCE_RETENTION = 600


class OpError(Exception):
    """Request the provider cannot act on."""


# -- password records ------------------------------------------------------


def hash_password(
    password: str,
    *,
    salt: bytes | None = None,
    iterations: int = PBKDF2_ITERATIONS,
) -> dict:
    salt = secrets.token_bytes(PBKDF2_SALT_BYTES) if salt is None else salt
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return {
        "algorithm": PBKDF2_ALGORITHM,
        "iterations": iterations,
        "salt": base64.b64encode(salt).decode("ascii"),
        "hash": base64.b64encode(digest).decode("ascii"),
    }


def verify_password(record: Mapping, password: str) -> bool:
    if record.get("algorithm") != PBKDF2_ALGORITHM:
        return False
    try:
        salt = base64.b64decode(record["salt"])
        expected = base64.b64decode(record["hash"])
        iterations = int(record["iterations"])
    except (KeyError, ValueError, TypeError):
        return False
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return hmac.compare_digest(digest, expected)


@dataclass
class OpUserAccount:
    username: str
    password_record: dict
    sreg: dict[str, str] = field(default_factory=dict)


class AccountStore:
    """Login accounts; unknown names burn the same verification work as
    known ones, so the response time gives nothing away."""

    def __init__(self) -> None:
        self._accounts: dict[str, OpUserAccount] = {}
        self._dummy = hash_password("decoy password")
        self._lock = threading.Lock()

    def add(self, username: str, password: str, sreg: Mapping[str, str] | None = None) -> OpUserAccount:
        if not username or "/" in username:
            raise OpError(f"unusable username {username!r}")
        for name in sreg or {}:
            if name not in SREG_FIELDS:
                raise OpError(f"unknown profile field {name!r}")
        account = OpUserAccount(username, hash_password(password), dict(sreg or {}))
        with self._lock:
            self._accounts[username] = account
        return account

    def get(self, username: str) -> OpUserAccount | None:
        with self._lock:
            return self._accounts.get(username)

    def verify(self, username: str, password: str) -> bool:
        account = self.get(username)
        record = account.password_record if account else self._dummy
        ok = verify_password(record, password)
        return ok and account is not None

    def usernames(self) -> list[str]:
        with self._lock:
            return sorted(self._accounts)


# -- provider core ---------------------------------------------------------


@dataclass(frozen=True)
class DecisionResult:
    """Where to send the browser after the approval form, or why to show
    the form again."""

    redirect_url: str | None = None
    error: str | None = None


class Provider:
    def __init__(
        self,
        base_url: str,
        accounts: AccountStore | None = None,
        *,
        assoc_lifetime: int = DEFAULT_LIFETIME,
        clock=time.time,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.endpoint_url = self.base_url + "/endpoint"
        self.accounts = accounts or AccountStore()
        self.assoc_lifetime = assoc_lifetime
        self.clock = clock
        self.associations = AssociationStore()
        self._checked_nonces: dict[str, float] = {}
        self._lock = threading.Lock()

    # -- identity pages ----------------------------------------------------

    def identity_url(self, username: str) -> str:
        return f"{self.base_url}/id/{username}"

    def xrds_url(self, username: str) -> str:
        return f"{self.base_url}/xrds/{username}"

    def username_for_identity(self, identity: str) -> str | None:
        prefix = self.base_url + "/id/"
        if not identity.startswith(prefix):
            return None
        rest = identity[len(prefix):]
        return rest if rest and "/" not in rest else None

    def identity_page(self, username: str) -> str:
        endpoint = html.escape(self.endpoint_url, quote=True)
        return (
            "<html><head>\n"
            f'<meta http-equiv="X-XRDS-Location" content="{html.escape(self.xrds_url(username), quote=True)}">\n'
            f'<link rel="openid2.provider" href="{endpoint}">\n'
            f'<link rel="openid.server" href="{endpoint}">\n'
            f"<title>{html.escape(username)}</title>\n"
            "</head><body>\n"
            f"<h1>{html.escape(username)}</h1>\n"
            f"<p>This page identifies {html.escape(username)}.</p>\n"
            "</body></html>\n"
        )

    def xrds_document(self, username: str) -> str:
        endpoint = html.escape(self.endpoint_url)
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            '<xrds:XRDS xmlns:xrds="xri://$xrds" xmlns="xri://$xrd*($v*2.0)">\n'
            "  <XRD>\n"
            '    <Service priority="0">\n'
            "      <Type>http://specs.openid.net/auth/2.0/signon</Type>\n"
            f"      <Type>{SREG_NS}</Type>\n"
            f"      <URI>{endpoint}</URI>\n"
            "    </Service>\n"
            '    <Service priority="10">\n'
            "      <Type>http://openid.net/signon/1.1</Type>\n"
            f"      <URI>{endpoint}</URI>\n"
            "    </Service>\n"
            "  </XRD>\n"
            "</xrds:XRDS>\n"
        )

    # -- direct messages ---------------------------------------------------

    def handle_direct(self, body: str) -> tuple[Message, bool]:
        """Answer a direct protocol call; the flag is False for error
        replies so transports can mark the status accordingly."""
        try:
            msg = Message.from_kv(body)
        except MessageError as exc:
            return self._direct_error(f"unparsable request: {exc}"), False
        mode = msg.mode
        if mode == "associate":
            try:
                result = respond_to_associate(
                    msg, lifetime=self.assoc_lifetime, now=self.clock()
                )
            except AssociationError as exc:
                return self._direct_error(str(exc)), False
            if result.association is not None:
                self.associations.add(self.endpoint_url, result.association)
            return result.response, True
        if mode == "check_authentication":
            return self.handle_check_authentication(msg), True
        return self._direct_error(f"unsupported direct mode {mode!r}"), False

    @staticmethod
    def _direct_error(text: str) -> Message:
        return Message({"ns": OPENID2_NS, "error": text})

    def handle_check_authentication(self, msg: Message) -> Message:
        """Confirm an assertion for a stateless relying party.

        Only never-shared keys count here, the signature is re-checked with
        the mode restored, and each nonce confirms at most once.
        """
        reply = Message({"ns": OPENID2_NS, "is_valid": "false"})
        invalidate = msg.get("invalidate_handle")
        if invalidate and self._shared_association(invalidate) is None:
            reply.set("invalidate_handle", invalidate)
        handle = msg.get("assoc_handle", "")
        assoc = self.associations.get(self.endpoint_url, handle, now=self.clock())
        if assoc is None or not assoc.private:
            return reply
        restored = msg.copy()
        restored.fields["mode"] = "id_res"
        if not assoc.verify(restored):
            return reply
        nonce = msg.get("response_nonce", "")
        if not self._consume_checked_nonce(nonce):
            return reply
        reply.set("is_valid", "true")
        return reply

    def _shared_association(self, handle: str) -> Association | None:
        assoc = self.associations.get(self.endpoint_url, handle, now=self.clock())
        if assoc is None or assoc.private:
            return None
        return assoc

    def _private_association(self) -> Association:
        with self._lock:
            best = self.associations.best(self.endpoint_url, now=self.clock())
            if best is not None and best.private and best.remaining(self.clock()) > 60:
                return best
            assoc = Association.fresh(
                "HMAC-SHA256", lifetime=self.assoc_lifetime, now=self.clock(), private=True
            )
            self.associations.add(self.endpoint_url, assoc)
            return assoc

    def _consume_checked_nonce(self, nonce: str) -> bool:
        if not nonce:
            return False
        now = self.clock()
        with self._lock:
            cutoff = now - CHECKED_NONCE_RETENTION
            for key, when in list(self._checked_nonces.items()):
                if when < cutoff:
                    del self._checked_nonces[key]
            if nonce in self._checked_nonces:
                return False
            self._checked_nonces[nonce] = now
            return True

    # -- the sign-on itself ------------------------------------------------

    def checkid_context(self, msg: Message) -> dict:
        """What the approval form needs to show; raises when the request is
        too broken to answer."""
        if msg.mode != "checkid_setup":
            raise OpError(f"unsupported request mode {msg.mode!r}")
        try:
            return_to = msg["return_to"]
            identity = msg["identity"]
        except MessageError as exc:
            raise OpError(str(exc)) from None
        if urlsplit(return_to).scheme not in ("http", "https"):
            raise OpError("return URL must be http or https")
        realm = msg.get("realm") or msg.get("trust_root") or return_to
        return {
            "identity": identity,
            "realm": realm,
            "return_to": return_to,
            "query": msg.to_query_string(),
        }

    def decide(
        self, msg: Message, username: str, password: str, decision: str
    ) -> DecisionResult:
        """Apply a submitted approval form to the pending request."""
        context = self.checkid_context(msg)
        if decision != "allow":
            return DecisionResult(redirect_url=self.cancel_url(msg))
        if not self.accounts.verify(username, password):
            return DecisionResult(error="Wrong username or password.")
        expected = self.username_for_identity(context["identity"])
        if expected != username:
            return DecisionResult(
                error="That account does not own the requested identity."
            )
        return DecisionResult(redirect_url=self.build_assertion(msg, username))

    def cancel_url(self, msg: Message) -> str:
        fields = {"mode": "cancel"}
        if msg.namespace == OPENID2_NS:
            fields = {"ns": OPENID2_NS, "mode": "cancel"}
        return Message(fields).to_url(msg["return_to"])

    def build_assertion(self, msg: Message, username: str) -> str:
        """Signed positive assertion, sent back through the browser."""
        v2 = msg.namespace == OPENID2_NS
        account = self.accounts.get(username)
        if account is None:
            raise OpError(f"no account {username!r}")
        fields: dict[str, str] = {}
        if v2:
            fields["ns"] = OPENID2_NS
        fields["mode"] = "id_res"
        if v2:
            fields["op_endpoint"] = self.endpoint_url
            if "claimed_id" in msg:
                fields["claimed_id"] = msg["claimed_id"]
        fields["identity"] = msg["identity"]
        fields["return_to"] = msg["return_to"]
        fields["response_nonce"] = make_nonce()
        assertion = Message(fields)

        requested_handle = msg.get("assoc_handle", "")
        assoc = self._shared_association(requested_handle) if requested_handle else None
        if assoc is None:
            if requested_handle:
                assertion.set("invalidate_handle", requested_handle)
            assoc = self._private_association()
        assertion.set("assoc_handle", assoc.handle)

        self._add_sreg(assertion, msg, account)
        signed = assoc.sign(assertion)
        return signed.to_url(msg["return_to"])

    @staticmethod
    def _add_sreg(assertion: Message, msg: Message, account: OpUserAccount) -> None:
        wanted: list[str] = []
        for source in ("sreg.required", "sreg.optional"):
            for name in msg.get(source, "").split(","):
                name = name.strip()
                if name and name in SREG_FIELDS and name not in wanted:
                    wanted.append(name)
        values = {name: account.sreg[name] for name in wanted if name in account.sreg}
        if values:
            assertion.set("ns.sreg", SREG_NS)
            for name, value in values.items():
                assertion.set(f"sreg.{name}", value)

    # -- page rendering ----------------------------------------------------

    def login_page(self, context: dict, error: str | None = None) -> str:
        error_html = f'<p class="error">{html.escape(error)}</p>\n' if error else ""
        return (
            "<html><head><title>Sign in</title></head><body>\n"
            "<h1>Sign in</h1>\n"
            f"<p>Verify <b>{html.escape(context['identity'])}</b> "
            f"for <b>{html.escape(context['realm'])}</b>?</p>\n"
            + error_html
            + f'<form method="post" action="{html.escape(self.endpoint_url, quote=True)}/decision">\n'
            f'<input type="hidden" name="request" value="{html.escape(context["query"], quote=True)}">\n'
            '<label>Username <input type="text" name="username"></label>\n'
            '<label>Password <input type="password" name="password"></label>\n'
            '<button type="submit" name="decision" value="allow">Sign in and allow</button>\n'
            '<button type="submit" name="decision" value="deny">Deny</button>\n'
            "</form>\n"
            "</body></html>\n"
        )


# -- http wiring -----------------------------------------------------------


def create_op_app(provider: Provider):
    """HTTP face of the provider.

    Form posts are parsed by hand from the urlencoded body, keeping the
    dependency surface down.
    """
    app = FastAPI(title="identity provider", docs_url=None, redoc_url=None)

    def _kv_response(message: Message, ok: bool) -> PlainTextResponse:
        return PlainTextResponse(
            message.to_kv(),
            status_code=200 if ok else 400,
            media_type="text/plain; charset=utf-8",
        )

    @app.get("/id/{username}")
    async def identity_page(username: str):
        if provider.accounts.get(username) is None:
            return PlainTextResponse("no such identity", status_code=404)
        return HTMLResponse(
            provider.identity_page(username),
            headers={"X-XRDS-Location": provider.xrds_url(username)},
        )

    @app.get("/xrds/{username}")
    async def xrds_document(username: str):
        if provider.accounts.get(username) is None:
            return PlainTextResponse("no such identity", status_code=404)
        return PlainTextResponse(
            provider.xrds_document(username), media_type="application/xrds+xml"
        )

    @app.post("/endpoint")
    async def direct_endpoint(request: Request):
        body = (await request.body()).decode("utf-8", errors="replace")
        message, ok = provider.handle_direct(body)
        return _kv_response(message, ok)

    @app.get("/endpoint")
    async def indirect_endpoint(request: Request):
        msg = Message.from_query_string(request.url.query)
        if msg.mode is None:
            return PlainTextResponse("identity provider endpoint")
        try:
            context = provider.checkid_context(msg)
        except OpError as exc:
            return PlainTextResponse(f"bad request: {exc}", status_code=400)
        return HTMLResponse(provider.login_page(context))

    @app.post("/endpoint/decision")
    async def decision(request: Request):
        body = (await request.body()).decode("utf-8", errors="replace")
        form = dict(parse_qsl(body, keep_blank_values=True))
        try:
            msg = Message.from_query_string(form.get("request", ""))
            result = provider.decide(
                msg,
                form.get("username", ""),
                form.get("password", ""),
                form.get("decision", "deny"),
            )
        except (OpError, MessageError) as exc:
            return PlainTextResponse(f"bad request: {exc}", status_code=400)
        if result.redirect_url is not None:
            return RedirectResponse(result.redirect_url, status_code=302)
        context = provider.checkid_context(msg)
        return HTMLResponse(provider.login_page(context, error=result.error), status_code=403)

    app.state.provider = provider
    return app
