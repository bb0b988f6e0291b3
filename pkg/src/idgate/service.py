"""The sign-on gateway: browser flow, session guard, and admin API.

Every route is listed in an access table that names either a privilege or
the explicit PUBLIC marker; creating the app fails if any route is
unlisted, so nothing ships unguarded by accident.

Sessions are sealed cookies holding a role snapshot.  The guard checks the
snapshot against the route's privilege, re-resolving roles from the engine
once the snapshot is older than the staleness bound.  A denial revokes the
session in the same response: the cookie is cleared, the session id is
blacklisted, and any copy of the old cookie stops authenticating.
"""

from __future__ import annotations

import html
import json
import logging
import threading
import time
from contextlib import contextmanager
from dataclasses import replace
from datetime import date, timedelta
from pathlib import Path
from urllib.parse import parse_qsl

from fastapi import FastAPI, Request, Response
from fastapi.responses import HTMLResponse, JSONResponse, RedirectResponse
from starlette.staticfiles import StaticFiles

from .config import ServiceConfig
from .discovery import DiscoveryError
from .fetch import Fetcher, HttpxFetcher
from .messages import decode_query
from .rbac import (
    SYSTEM_ACTOR,
    UNBOUNDED,
    DuplicateUserError,
    NotAuthorizedError,
    NotHolderError,
    OutsideValidityError,
    Privilege,
    RbacEngine,
    RbacError,
    RoleDescriptor,
    UnknownAssignmentError,
    UnknownPrivilegeError,
    UnknownRoleError,
    UnknownUserError,
    ValidationError,
    ValidityPeriod,
)
from .rp import AuthRequest, Consumer, ProtocolError
from .storage import Store
from .tokens import SessionClaims, mint_session, new_session_key, read_session, seal, unseal

logger = logging.getLogger(__name__)


class _Public:
    def __repr__(self) -> str:
        return "PUBLIC"


# Marker for routes that need no session.
PUBLIC = _Public()

# Roles granted automatically at first sign-on.
OPENID_ROLE_ID = "6"
OPENID_ROLE_NAME = "OPENID_ROLE"
VALID_OPENID_USER_ROLE_ID = "7"
VALID_OPENID_USER_ROLE_NAME = "VALID_OPENID_USER"

SYSTEM_USER_NAME = "system"

PRIV_PORTAL = "portal:access"
PRIV_ADMIN = "admin:manage"
PRIV_STUDENT_AFFAIRS = "student-affairs:full"
PRIV_ACADEMIC = "academic:write"

# Flow page wording; several of these are load-bearing for callers that
# scrape them, so they never change shape.
MSG_EXPECTED_URL = "Expected an OpenID URL."
MSG_AUTH_ERROR = "Authentication error."
MSG_CANCELLED = "Verification cancelled."
MSG_FAILED_PREFIX = "OpenID authentication failed: %s"
MSG_SUCCESS = 'You have successfully verified <a href="%s">%s</a> as your identity.'
MSG_EMAIL_SUFFIX = " You also returned '%s' as your email."
MSG_DENIED = "Access denied."


def clamp_warning(requested: ValidityPeriod, effective: ValidityPeriod) -> str | None:
    """Sentence shown whenever a delegation window was cut down; rendered
    verbatim by every surface, so the wording is part of the interface."""
    if (requested.valid_from, requested.valid_upto) == (
        effective.valid_from,
        effective.valid_upto,
    ):
        return None
    return (
        f"Requested validity {requested.valid_from.isoformat()}"
        f"..{requested.valid_upto.isoformat()} was clamped to "
        f"{effective.valid_from.isoformat()}..{effective.valid_upto.isoformat()}."
    )


def ensure_auth_fixtures(engine: RbacEngine) -> None:
    """Idempotently create the roles and privileges the gateway itself
    relies on, without touching anything already present."""
    system = engine.find_user(SYSTEM_USER_NAME)
    if system is None:
        system = engine.add_user(SYSTEM_USER_NAME)
    needed_roles = (
        ("0", "Administrator"),
        ("10", "Assistant Registrar (Student Affairs)"),
        ("20", "Assistant Registrar (Academic)"),
        (OPENID_ROLE_ID, OPENID_ROLE_NAME),
        (VALID_OPENID_USER_ROLE_ID, VALID_OPENID_USER_ROLE_NAME),
    )
    for role_id, name in needed_roles:
        try:
            engine.role(role_id)
        except UnknownRoleError:
            engine.register_role(
                SYSTEM_ACTOR, RoleDescriptor(role_id, name, system.user_id)
            )
    needed_privileges = (
        (PRIV_PORTAL, "use the signed-in portal", {OPENID_ROLE_ID}),
        (PRIV_ADMIN, "administer users, roles, and grants", {"0"}),
        (PRIV_STUDENT_AFFAIRS, "student-affairs records", {"10"}),
        (PRIV_ACADEMIC, "academic records", {"20"}),
    )
    for privilege_id, description, granted in needed_privileges:
        try:
            engine.privilege(privilege_id)
        except UnknownPrivilegeError:
            engine.register_privilege(
                SYSTEM_ACTOR, Privilege(privilege_id, description, frozenset(granted))
            )


class SessionRegistry:
    """Session ids put beyond use before their cookies expire."""

    def __init__(self) -> None:
        self._revoked: dict[str, float] = {}
        self._lock = threading.Lock()

    def revoke(self, session_id: str, expires_at: float) -> None:
        with self._lock:
            now = time.time()
            for sid, exp in list(self._revoked.items()):
                if exp < now:
                    del self._revoked[sid]
            self._revoked[session_id] = expires_at

    def is_revoked(self, session_id: str) -> bool:
        with self._lock:
            return session_id in self._revoked


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


_RBAC_ERROR_MAP: tuple[tuple[type, int, str], ...] = (
    (NotAuthorizedError, 403, "forbidden"),
    (NotHolderError, 403, "not-holder"),
    (OutsideValidityError, 400, "outside-validity"),
    (DuplicateUserError, 409, "conflict"),
    (UnknownUserError, 404, "not-found"),
    (UnknownRoleError, 404, "not-found"),
    (UnknownAssignmentError, 404, "not-found"),
    (UnknownPrivilegeError, 404, "not-found"),
    (ValidationError, 400, "invalid"),
)


@contextmanager
def _api_errors():
    try:
        yield
    except RbacError as exc:
        for kind, status, code in _RBAC_ERROR_MAP:
            if isinstance(exc, kind):
                raise ApiError(status, code, str(exc)) from exc
        raise ApiError(400, "invalid", str(exc)) from exc


def _page(title: str, body: str) -> str:
    return (
        "<!doctype html>\n<html><head>"
        f"<meta charset=\"utf-8\"><title>{html.escape(title)}</title>"
        "</head><body>\n"
        f"{body}\n"
        "</body></html>\n"
    )


def _parse_iso_date(raw, name: str) -> date:
    if not isinstance(raw, str):
        raise ApiError(400, "invalid", f"{name} must be an ISO date string")
    try:
        return date.fromisoformat(raw)
    except ValueError:
        raise ApiError(400, "invalid", f"{name} is not a valid date: {raw!r}") from None


def create_service_app(
    config: ServiceConfig,
    *,
    fetcher: Fetcher | None = None,
    store: Store | None = None,
    today=date.today,
    clock=time.time,
) -> FastAPI:
    """Build the gateway app.  ``fetcher``, ``store``, ``today``, and
    ``clock`` exist so tests can pin the outside world."""
    if store is None:
        store = Store(Path(config.data_dir)) if config.data_dir else Store(None)
    engine = RbacEngine(store, today=today)
    ensure_auth_fixtures(engine)
    consumer = Consumer(fetcher or HttpxFetcher(), clock=clock)
    key = config.session_key() or new_session_key()
    registry = SessionRegistry()
    base_url = config.base_url.rstrip("/")
    return_to = base_url + "/login/callback"

    app = FastAPI(title="sign-on gateway", docs_url=None, redoc_url=None)
    app.state.engine = engine
    app.state.store = store
    app.state.consumer = consumer
    app.state.registry = registry
    app.state.config = config

    # ---- session plumbing ------------------------------------------------

    def set_session_cookie(response: Response, token: str) -> None:
        response.set_cookie(
            config.cookie_name,
            token,
            max_age=config.session_lifetime,
            httponly=True,
            samesite="lax",
            secure=config.cookie_secure,
            path="/",
        )

    def clear_session_cookie(response: Response) -> None:
        response.delete_cookie(config.cookie_name, path="/")

    def current_claims(request: Request) -> SessionClaims | None:
        token = request.cookies.get(config.cookie_name, "")
        claims = read_session(key, token, now=clock())
        if claims is not None and registry.is_revoked(claims.session_id):
            return None
        return claims

    def provision(identity: str):
        """First sign-on creates the user and grants the automatic roles;
        later ones just pick the account back up."""
        user = engine.find_user(identity)
        if user is None:
            try:
                user = engine.add_user(identity)
            except DuplicateUserError:
                user = engine.find_user(identity)
        on = today()
        held = engine.resolve_roles(user.user_id, on)
        window = ValidityPeriod(on, on + timedelta(days=config.auto_role_days))
        for role_id in (OPENID_ROLE_ID, VALID_OPENID_USER_ROLE_ID):
            if role_id not in held:
                engine.assign_owner_role(SYSTEM_ACTOR, user.user_id, role_id, window)
        return user, engine.resolve_roles(user.user_id, on)

    # ---- access table ----------------------------------------------------

    table: dict[tuple[str, str], object] = {
        ("GET", "/"): PUBLIC,
        ("GET", "/login"): PUBLIC,
        ("POST", "/login"): PUBLIC,
        ("GET", "/login/callback"): PUBLIC,
        ("GET", "/logout"): PUBLIC,
        ("GET", "/me"): PRIV_PORTAL,
        ("GET", "/admin"): PRIV_ADMIN,
        ("GET", "/api/me"): PRIV_PORTAL,
        ("GET", "/api/roles"): PRIV_PORTAL,
        ("GET", "/api/my/assignments"): PRIV_PORTAL,
        ("GET", "/api/my/validity"): PRIV_PORTAL,
        ("POST", "/api/assignments"): PRIV_PORTAL,
        ("POST", "/api/delegations"): PRIV_PORTAL,
        ("POST", "/api/revoke"): PRIV_PORTAL,
        ("GET", "/api/users"): PRIV_ADMIN,
        ("POST", "/api/users"): PRIV_ADMIN,
        ("POST", "/api/roles"): PRIV_ADMIN,
        ("GET", "/api/assignments"): PRIV_ADMIN,
        ("GET", "/api/resolve"): PRIV_ADMIN,
        ("GET", "/api/holder"): PRIV_ADMIN,
    }
    app.state.route_table = table

    def deny_response(request: Request, claims: SessionClaims | None) -> Response:
        if request.url.path.startswith("/api/"):
            response: Response = JSONResponse(
                {"error": {"code": "forbidden", "message": MSG_DENIED}}, status_code=403
            )
        else:
            response = HTMLResponse(
                _page("Denied", f"<p>{MSG_DENIED}</p>"), status_code=403
            )
        if claims is not None:
            registry.revoke(claims.session_id, claims.expires_at)
        clear_session_cookie(response)
        return response

    def unauthenticated_response(request: Request) -> Response:
        if request.url.path.startswith("/api/"):
            return JSONResponse(
                {"error": {"code": "unauthenticated", "message": "sign in first"}},
                status_code=401,
            )
        return RedirectResponse("/login", status_code=302)

    @app.middleware("http")
    async def guard(request: Request, call_next):
        entry = table.get((request.method, request.url.path))
        if entry is None or entry is PUBLIC:
            return await call_next(request)
        claims = current_claims(request)
        if claims is None:
            return unauthenticated_response(request)
        refreshed = False
        if clock() - claims.roles_refreshed_at > config.role_staleness:
            try:
                live = engine.resolve_roles(claims.user_id, today())
            except UnknownUserError:
                return deny_response(request, claims)
            claims = replace(
                claims, roles=tuple(sorted(live)), roles_refreshed_at=clock()
            )
            refreshed = True
        try:
            privilege = engine.privilege(str(entry))
        except UnknownPrivilegeError:
            logger.error("route %s names unknown privilege %r", request.url.path, entry)
            return deny_response(request, claims)
        if not set(claims.roles) & privilege.granted_to:
            return deny_response(request, claims)
        request.state.session = claims
        response = await call_next(request)
        if refreshed:
            set_session_cookie(response, mint_session(key, claims))
        return response

    @app.middleware("http")
    async def request_log(request: Request, call_next):
        started = time.monotonic()
        response = await call_next(request)
        logger.info(
            "%s %s -> %d (%.1f ms)",
            request.method,
            request.url.path,
            response.status_code,
            (time.monotonic() - started) * 1000,
        )
        return response

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(
            {"error": {"code": exc.code, "message": exc.message}}, status_code=exc.status
        )

    # ---- pages -----------------------------------------------------------

    login_form = (
        '<form method="post" action="/login">'
        '<label>Identity URL <input type="text" name="openid_identifier"></label>'
        '<button type="submit">Sign in</button>'
        "</form>"
    )

    @app.get("/")
    async def home(request: Request):
        claims = current_claims(request)
        if claims is None:
            body = '<p>Welcome. <a href="/login">Sign in</a> to continue.</p>'
        else:
            body = (
                f"<p>Signed in as {html.escape(claims.user_name)}.</p>"
                f'<p><a href="/me">Your page</a> | <a href="/logout">Sign out</a></p>'
            )
        return HTMLResponse(_page("Portal", body))

    @app.get("/login")
    async def login_page():
        return HTMLResponse(_page("Sign in", login_form))

    @app.post("/login")
    async def login_submit(request: Request):
        body = (await request.body()).decode("utf-8", errors="replace")
        form = dict(parse_qsl(body, keep_blank_values=True))
        identifier = form.get("openid_identifier", "").strip()
        if not identifier:
            return HTMLResponse(
                _page("Sign in", f"<p>{MSG_EXPECTED_URL}</p>{login_form}")
            )
        try:
            auth_request = consumer.begin(identifier)
            auth_request.add_sreg(required=("email",), optional=("nickname", "fullname"))
            url = auth_request.redirect_url(config.effective_realm, return_to)
        except (DiscoveryError, ProtocolError) as exc:
            message = html.escape(MSG_FAILED_PREFIX % exc)
            return HTMLResponse(_page("Sign in", f"<p>{message}</p>{login_form}"))
        response = RedirectResponse(url, status_code=302)
        pending = seal(
            key,
            {"request": auth_request.to_payload(), "exp": clock() + config.pending_lifetime},
        )
        response.set_cookie(
            config.pending_cookie_name,
            pending,
            max_age=config.pending_lifetime,
            httponly=True,
            samesite="lax",
            secure=config.cookie_secure,
            path="/",
        )
        return response

    @app.get("/login/callback")
    async def login_callback(request: Request):
        pending_token = request.cookies.get(config.pending_cookie_name, "")
        pending = unseal(key, pending_token)
        if pending is None or pending.get("exp", 0) < clock():
            return HTMLResponse(_page("Sign in", f"<p>{MSG_AUTH_ERROR}</p>"), status_code=403)
        auth_request = AuthRequest.from_payload(pending["request"])
        pairs = decode_query(request.url.query)
        outcome = consumer.complete(pairs, str(request.url), auth_request)
        if outcome.status == "cancel":
            response = HTMLResponse(_page("Sign in", f"<p>{MSG_CANCELLED}</p>"))
        elif outcome.status != "success":
            message = html.escape(MSG_FAILED_PREFIX % outcome.message)
            response = HTMLResponse(_page("Sign in", f"<p>{message}</p>"), status_code=403)
        else:
            identity = outcome.identity
            email = outcome.sreg.get("email")
            user, roles = provision(identity)
            text = MSG_SUCCESS % (
                html.escape(identity, quote=True),
                html.escape(identity),
            )
            if email:
                text += MSG_EMAIL_SUFFIX % html.escape(email)
            response = HTMLResponse(
                _page("Signed in", f"<p>{text}</p>" + '<p><a href="/me">Continue</a></p>')
            )
            claims = SessionClaims.fresh(
                user.user_id,
                user.user_name,
                identity,
                tuple(sorted(roles)),
                lifetime=config.session_lifetime,
                now=clock(),
                email=email,
            )
            set_session_cookie(response, mint_session(key, claims))
        response.delete_cookie(config.pending_cookie_name, path="/")
        return response

    @app.get("/logout")
    async def logout(request: Request):
        claims = current_claims(request)
        if claims is not None:
            registry.revoke(claims.session_id, claims.expires_at)
        response = RedirectResponse("/", status_code=302)
        clear_session_cookie(response)
        return response

    @app.get("/me")
    async def me_page(request: Request):
        claims: SessionClaims = request.state.session
        roles = ", ".join(sorted(claims.roles)) or "none"
        email = html.escape(claims.email) if claims.email else "not provided"
        body = (
            f"<h1>{html.escape(claims.user_name)}</h1>"
            f"<p>Identity: {html.escape(claims.identity)}</p>"
            f"<p>Email: {email}</p>"
            f"<p>Roles today: {html.escape(roles)}</p>"
        )
        return HTMLResponse(_page("Your page", body))

    @app.get("/admin")
    async def admin_page(request: Request):
        body = "<h1>Administration</h1><p>Use the API under /api/ or the console.</p>"
        if config.console_dir:
            body += '<p><a href="/console/">Open console</a></p>'
        return HTMLResponse(_page("Administration", body))

    # ---- api -------------------------------------------------------------

    async def json_body(request: Request) -> dict:
        raw = await request.body()
        try:
            data = json.loads(raw.decode("utf-8")) if raw else {}
        except (ValueError, UnicodeDecodeError):
            raise ApiError(400, "invalid", "body is not valid JSON") from None
        if not isinstance(data, dict):
            raise ApiError(400, "invalid", "body must be a JSON object")
        return data

    def assignment_json(a) -> dict:
        return {
            "s_no": a.s_no,
            "user_id": a.user_id,
            "role_id": a.role_id,
            "valid_from": a.period.valid_from.isoformat(),
            "valid_upto": a.period.valid_upto.isoformat(),
            "assigner": a.assigner,
            "kind": a.kind,
            "revoked": a.revoked,
        }

    @app.get("/api/me")
    async def api_me(request: Request):
        claims: SessionClaims = request.state.session
        return {
            "user_id": claims.user_id,
            "user_name": claims.user_name,
            "identity": claims.identity,
            "email": claims.email,
            "roles": sorted(claims.roles),
            "date": today().isoformat(),
        }

    @app.get("/api/roles")
    async def api_roles():
        return {
            "roles": [
                {
                    "id": r.id,
                    "name": r.name,
                    "owner": r.owner,
                    "scope": r.scope.level,
                    "app_id": r.scope.app_id,
                }
                for r in engine.roles()
            ]
        }

    @app.post("/api/roles", status_code=201)
    async def api_add_role(request: Request):
        claims: SessionClaims = request.state.session
        data = await json_body(request)
        for field_name in ("id", "name", "owner"):
            if field_name not in data:
                raise ApiError(400, "invalid", f"missing field {field_name!r}")
        with _api_errors():
            desc = RoleDescriptor(str(data["id"]), str(data["name"]), int(data["owner"]))
            engine.register_role(claims.user_id, desc, replace=bool(data.get("replace")))
        return {"id": desc.id, "name": desc.name, "owner": desc.owner}

    @app.get("/api/users")
    async def api_users():
        return {
            "users": [
                {"user_id": u.user_id, "user_name": u.user_name} for u in engine.users()
            ]
        }

    @app.post("/api/users", status_code=201)
    async def api_add_user(request: Request):
        data = await json_body(request)
        name = data.get("user_name")
        if not isinstance(name, str) or not name:
            raise ApiError(400, "invalid", "user_name must be a non-empty string")
        with _api_errors():
            user = engine.add_user(name)
        return {"user_id": user.user_id, "user_name": user.user_name}

    @app.get("/api/assignments")
    async def api_assignments():
        return {"assignments": [assignment_json(a) for a in engine.assignments()]}

    @app.get("/api/my/assignments")
    async def api_my_assignments(request: Request):
        claims: SessionClaims = request.state.session
        mine = [a for a in engine.assignments() if a.user_id == claims.user_id]
        return {"assignments": [assignment_json(a) for a in mine]}

    @app.get("/api/my/validity")
    async def api_my_validity(request: Request):
        """How long the caller's hold on a role runs; delegation forms use
        this as the window's upper bound."""
        claims: SessionClaims = request.state.session
        params = dict(decode_query(request.url.query))
        role_id = params.get("role_id", "")
        on = today()
        with _api_errors():
            end = engine.effective_validity_end(claims.user_id, role_id, on)
        return {
            "role_id": role_id,
            "date": on.isoformat(),
            "holds": end is not None,
            "unbounded": end == UNBOUNDED,
            "effective_end": (
                end.isoformat() if end is not None and end != UNBOUNDED else None
            ),
        }

    @app.post("/api/assignments", status_code=201)
    async def api_assign(request: Request):
        claims: SessionClaims = request.state.session
        data = await json_body(request)
        with _api_errors():
            period = ValidityPeriod(
                _parse_iso_date(data.get("valid_from"), "valid_from"),
                _parse_iso_date(data.get("valid_upto"), "valid_upto"),
            )
            assignment = engine.assign_owner_role(
                claims.user_id,
                int(data.get("user_id", -1)),
                str(data.get("role_id", "")),
                period,
            )
        return assignment_json(assignment)

    @app.post("/api/delegations", status_code=201)
    async def api_delegate(request: Request):
        claims: SessionClaims = request.state.session
        data = await json_body(request)
        assignee = data.get("assignee_id")
        if assignee is None and isinstance(data.get("assignee"), str):
            found = engine.find_user(data["assignee"])
            if found is None:
                raise ApiError(404, "not-found", f"unknown user {data['assignee']!r}")
            assignee = found.user_id
        if assignee is None:
            raise ApiError(400, "invalid", "assignee_id or assignee is required")
        with _api_errors():
            requested = ValidityPeriod(
                _parse_iso_date(data.get("valid_from"), "valid_from"),
                _parse_iso_date(data.get("valid_upto"), "valid_upto"),
            )
            result = engine.delegate_role(
                claims.user_id, int(assignee), str(data.get("role_id", "")), requested
            )
        effective = result.effective
        return {
            "s_no": result.assignment.s_no,
            "role_id": result.assignment.role_id,
            "assignee_id": result.assignment.user_id,
            "requested": {
                "valid_from": result.requested.valid_from.isoformat(),
                "valid_upto": result.requested.valid_upto.isoformat(),
            },
            "effective": {
                "valid_from": effective.valid_from.isoformat(),
                "valid_upto": effective.valid_upto.isoformat(),
            },
            "clamped": result.clamped,
            "warning": clamp_warning(result.requested, effective),
        }

    @app.post("/api/revoke")
    async def api_revoke(request: Request):
        claims: SessionClaims = request.state.session
        data = await json_body(request)
        if "s_no" not in data:
            raise ApiError(400, "invalid", "s_no is required")
        with _api_errors():
            assignment = engine.revoke_assignment(claims.user_id, int(data["s_no"]))
        return assignment_json(assignment)

    @app.get("/api/resolve")
    async def api_resolve(request: Request):
        params = dict(decode_query(request.url.query))
        try:
            user_id = int(params.get("user_id", ""))
        except ValueError:
            raise ApiError(400, "invalid", "user_id must be an integer") from None
        on = _parse_iso_date(params.get("date", today().isoformat()), "date")
        with _api_errors():
            roles = engine.resolve_roles(user_id, on)
        return {"user_id": user_id, "date": on.isoformat(), "roles": sorted(roles)}

    @app.get("/api/holder")
    async def api_holder(request: Request):
        params = dict(decode_query(request.url.query))
        role_id = params.get("role_id", "")
        on = _parse_iso_date(params.get("date", today().isoformat()), "date")
        with _api_errors():
            holder = engine.effective_holder(role_id, on)
            user = engine.user(holder)
        return {
            "role_id": role_id,
            "date": on.isoformat(),
            "user_id": user.user_id,
            "user_name": user.user_name,
        }

    # ---- console ---------------------------------------------------------

    if config.console_dir:
        app.mount(
            "/console",
            StaticFiles(directory=config.console_dir, html=True),
            name="console",
        )
        table[("MOUNT", "/console")] = PUBLIC

    _assert_route_coverage(app, table)
    return app


def _assert_route_coverage(app: FastAPI, table: dict) -> None:
    """Every registered route must appear in the access table."""
    from fastapi.routing import APIRoute
    from starlette.routing import Mount

    missing = []
    for route in app.routes:
        if isinstance(route, APIRoute):
            for method in route.methods - {"HEAD", "OPTIONS"}:
                if (method, route.path) not in table:
                    missing.append(f"{method} {route.path}")
        elif isinstance(route, Mount):
            if ("MOUNT", route.path) not in table:
                missing.append(f"MOUNT {route.path}")
    if missing:
        raise RuntimeError(
            "routes missing from the access table: " + ", ".join(sorted(missing))
        )
