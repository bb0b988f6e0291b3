"""Command line front end.

Store-facing verbs open the data directory directly and act as the system
account unless told otherwise.  ``serve`` and ``op-serve`` run the two HTTP
faces; ``e2e-login`` starts both on loopback and walks a scripted browser
through a complete sign-on as a smoke check.

Exit codes: 0 success, 2 bad input, 3 not found, 4 not allowed,
5 connection or lock trouble.
"""

from __future__ import annotations

import json
import logging
import socket
import sys
import threading
import time
from contextlib import contextmanager
from datetime import date
from pathlib import Path
from urllib.parse import urlsplit

import click

from .config import ConfigError, ServiceConfig, load_config
from .op import AccountStore, OpError, Provider, create_op_app
from .rbac import (
    SYSTEM_ACTOR,
    NotAuthorizedError,
    NotHolderError,
    OutsideValidityError,
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
from .service import clamp_warning, create_service_app, ensure_auth_fixtures
from .storage import Store, StoreError, StoreLockedError, load_seed_fixture

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_FOUND = 3
EXIT_NOT_ALLOWED = 4
EXIT_CONNECTION = 5


def _fail(code: int, message: str) -> "SystemExit":
    click.echo(f"error: {message}", err=True)
    return SystemExit(code)


@contextmanager
def _mapped_errors():
    try:
        yield
    except (ValidationError, OutsideValidityError) as exc:
        raise _fail(EXIT_INVALID, str(exc)) from exc
    except (
        UnknownUserError,
        UnknownRoleError,
        UnknownAssignmentError,
        UnknownPrivilegeError,
    ) as exc:
        raise _fail(EXIT_NOT_FOUND, str(exc)) from exc
    except (NotAuthorizedError, NotHolderError) as exc:
        raise _fail(EXIT_NOT_ALLOWED, str(exc)) from exc
    except RbacError as exc:
        raise _fail(EXIT_INVALID, str(exc)) from exc
    except StoreLockedError as exc:
        raise _fail(EXIT_CONNECTION, str(exc)) from exc
    except ConfigError as exc:
        raise _fail(EXIT_INVALID, str(exc)) from exc


def _parse_date(text: str, name: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise _fail(EXIT_INVALID, f"{name} must be an ISO date, got {text!r}") from None


def _open_engine(data_dir: str | None) -> RbacEngine:
    try:
        store = Store(Path(data_dir)) if data_dir else Store(None)
    except StoreLockedError as exc:
        raise _fail(EXIT_CONNECTION, str(exc)) from exc
    # release the writer lock when the command winds down, even on failure
    ctx = click.get_current_context(silent=True)
    if ctx is not None:
        ctx.call_on_close(store.close)
    return RbacEngine(store)


def _user_ref(engine: RbacEngine, text: str) -> int:
    if text.isdigit():
        return int(text)
    user = engine.find_user(text)
    if user is None:
        raise _fail(EXIT_NOT_FOUND, f"unknown user {text!r}")
    return user.user_id


def _role_ref(engine: RbacEngine, text: str) -> str:
    if text.isdigit():
        return text
    role = engine.find_role_by_name(text)
    if role is None:
        raise _fail(EXIT_NOT_FOUND, f"unknown role {text!r}")
    return role.id


data_dir_option = click.option(
    "--data-dir",
    envvar="IDGATE_DATA_DIR",
    default=None,
    help="Directory holding the record logs (default: in-memory, empty).",
)
actor_option = click.option(
    "--actor",
    default=str(SYSTEM_ACTOR),
    show_default=True,
    help="Acting user id or name; 0 is the unrestricted system account.",
)
json_option = click.option(
    "--json", "as_json", is_flag=True, help="Machine-readable output."
)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log at debug level.")
def main(verbose: bool) -> None:
    """Single sign-on gateway and role administration."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


# ---- data management ----------------------------------------------------


@main.command()
@data_dir_option
def seed(data_dir: str | None) -> None:
    """Load the demonstration fixture into an empty data directory."""
    if not data_dir:
        raise _fail(EXIT_INVALID, "seed needs --data-dir; an in-memory store is lost on exit")
    with _mapped_errors():
        with Store(Path(data_dir)) as store:
            try:
                load_seed_fixture(store)
            except StoreLockedError:
                raise
            except StoreError as exc:
                raise _fail(EXIT_INVALID, str(exc)) from exc
            engine = RbacEngine(store)
            click.echo(
                f"seeded {len(engine.users())} users, {len(engine.roles())} roles, "
                f"{len(engine.assignments())} assignments"
            )


@main.group()
def user() -> None:
    """Accounts."""


@user.command("add")
@click.argument("name")
@data_dir_option
@json_option
def user_add(name: str, data_dir: str | None, as_json: bool) -> None:
    """Create an account."""
    engine = _open_engine(data_dir)
    with _mapped_errors():
        record = engine.add_user(name)
    if as_json:
        click.echo(json.dumps({"user_id": record.user_id, "user_name": record.user_name}))
    else:
        click.echo(f"user {record.user_id}: {record.user_name}")


@user.command("list")
@data_dir_option
@json_option
def user_list(data_dir: str | None, as_json: bool) -> None:
    """Show all accounts."""
    engine = _open_engine(data_dir)
    rows = [{"user_id": u.user_id, "user_name": u.user_name} for u in engine.users()]
    if as_json:
        click.echo(json.dumps({"users": rows}))
    else:
        for row in rows:
            click.echo(f"{row['user_id']}\t{row['user_name']}")


@main.group()
def role() -> None:
    """Role catalog."""


@role.command("add")
@click.argument("role_id")
@click.argument("name")
@click.option("--owner", required=True, help="Owning user id or name.")
@data_dir_option
@actor_option
@json_option
def role_add(
    role_id: str, name: str, owner: str, data_dir: str | None, actor: str, as_json: bool
) -> None:
    """Register a role; one digit is organization-wide, more digits tie it
    to the application named by the first digit."""
    engine = _open_engine(data_dir)
    with _mapped_errors():
        desc = RoleDescriptor(role_id, name, _user_ref(engine, owner))
        engine.register_role(_user_ref(engine, actor), desc)
    if as_json:
        click.echo(json.dumps({"id": desc.id, "name": desc.name, "owner": desc.owner}))
    else:
        click.echo(f"role {desc.id}: {desc.name} (owner {desc.owner})")


@role.command("list")
@data_dir_option
@json_option
def role_list(data_dir: str | None, as_json: bool) -> None:
    """Show the catalog."""
    engine = _open_engine(data_dir)
    rows = [
        {"id": r.id, "name": r.name, "owner": r.owner, "scope": r.scope.level}
        for r in engine.roles()
    ]
    if as_json:
        click.echo(json.dumps({"roles": rows}))
    else:
        for row in rows:
            click.echo(f"{row['id']}\t{row['scope']}\t{row['name']}")


@main.command()
@click.argument("user_ref")
@click.argument("role_ref")
@click.option("--valid-from", "valid_from", required=True, help="First valid day (ISO).")
@click.option("--valid-upto", "valid_upto", required=True, help="Last valid day (ISO).")
@data_dir_option
@actor_option
@json_option
def assign(
    user_ref: str,
    role_ref: str,
    valid_from: str,
    valid_upto: str,
    data_dir: str | None,
    actor: str,
    as_json: bool,
) -> None:
    """Grant a role for a date window (owner's grant, endpoints inclusive)."""
    engine = _open_engine(data_dir)
    with _mapped_errors():
        period = ValidityPeriod(
            _parse_date(valid_from, "--valid-from"), _parse_date(valid_upto, "--valid-upto")
        )
        record = engine.assign_owner_role(
            _user_ref(engine, actor),
            _user_ref(engine, user_ref),
            _role_ref(engine, role_ref),
            period,
        )
    if as_json:
        click.echo(
            json.dumps(
                {
                    "s_no": record.s_no,
                    "user_id": record.user_id,
                    "role_id": record.role_id,
                    "valid_from": record.period.valid_from.isoformat(),
                    "valid_upto": record.period.valid_upto.isoformat(),
                }
            )
        )
    else:
        click.echo(
            f"assignment {record.s_no}: user {record.user_id} holds role "
            f"{record.role_id} {record.period.valid_from}..{record.period.valid_upto}"
        )


@main.command()
@click.argument("assigner")
@click.argument("assignee")
@click.argument("role_ref")
@click.option("--valid-from", "valid_from", required=True, help="First valid day (ISO).")
@click.option("--valid-upto", "valid_upto", required=True, help="Last valid day (ISO).")
@data_dir_option
@json_option
def delegate(
    assigner: str,
    assignee: str,
    role_ref: str,
    valid_from: str,
    valid_upto: str,
    data_dir: str | None,
    as_json: bool,
) -> None:
    """Hand a held role to someone else for a bounded window; the window is
    clamped to the assigner's own validity."""
    engine = _open_engine(data_dir)
    with _mapped_errors():
        requested = ValidityPeriod(
            _parse_date(valid_from, "--valid-from"), _parse_date(valid_upto, "--valid-upto")
        )
        result = engine.delegate_role(
            _user_ref(engine, assigner),
            _user_ref(engine, assignee),
            _role_ref(engine, role_ref),
            requested,
        )
    effective = result.effective
    warning = clamp_warning(result.requested, effective)
    if as_json:
        click.echo(
            json.dumps(
                {
                    "s_no": result.assignment.s_no,
                    "role_id": result.assignment.role_id,
                    "assignee_id": result.assignment.user_id,
                    "effective": {
                        "valid_from": effective.valid_from.isoformat(),
                        "valid_upto": effective.valid_upto.isoformat(),
                    },
                    "clamped": result.clamped,
                    "warning": warning,
                }
            )
        )
    else:
        click.echo(
            f"delegation {result.assignment.s_no}: role {result.assignment.role_id} "
            f"to user {result.assignment.user_id} "
            f"{effective.valid_from}..{effective.valid_upto}"
        )
        if warning:
            click.echo(warning)


@main.command()
@click.argument("s_no", type=int)
@data_dir_option
@actor_option
@json_option
def revoke(s_no: int, data_dir: str | None, actor: str, as_json: bool) -> None:
    """Withdraw an assignment."""
    engine = _open_engine(data_dir)
    with _mapped_errors():
        record = engine.revoke_assignment(_user_ref(engine, actor), s_no)
    if as_json:
        click.echo(json.dumps({"s_no": record.s_no, "revoked": record.revoked}))
    else:
        click.echo(f"assignment {record.s_no} revoked")


@main.command()
@click.argument("user_ref")
@click.option("--date", "on", default=None, help="Resolution day (ISO, default today).")
@data_dir_option
@json_option
def resolve(user_ref: str, on: str | None, data_dir: str | None, as_json: bool) -> None:
    """Roles held on a date, space-separated and sorted."""
    engine = _open_engine(data_dir)
    at = _parse_date(on, "--date") if on else date.today()
    with _mapped_errors():
        roles = engine.resolve_roles(_user_ref(engine, user_ref), at)
    if as_json:
        click.echo(json.dumps({"date": at.isoformat(), "roles": sorted(roles)}))
    else:
        click.echo(" ".join(sorted(roles)))


@main.command()
@click.argument("role_ref")
@click.option("--date", "on", default=None, help="Resolution day (ISO, default today).")
@data_dir_option
@json_option
def holder(role_ref: str, on: str | None, data_dir: str | None, as_json: bool) -> None:
    """Who answers for a role on a date (latest live delegation, else owner)."""
    engine = _open_engine(data_dir)
    at = _parse_date(on, "--date") if on else date.today()
    with _mapped_errors():
        user_id = engine.effective_holder(_role_ref(engine, role_ref), at)
        record = engine.user(user_id)
    if as_json:
        click.echo(
            json.dumps(
                {
                    "date": at.isoformat(),
                    "user_id": record.user_id,
                    "user_name": record.user_name,
                }
            )
        )
    else:
        click.echo(record.user_name)


# ---- servers ------------------------------------------------------------


def _run_uvicorn(app, host: str, port: int) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@click.option("--config", "config_path", default=None, help="TOML settings file.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8400, show_default=True, type=int)
@data_dir_option
def serve(config_path: str | None, host: str, port: int, data_dir: str | None) -> None:
    """Run the sign-on gateway."""
    with _mapped_errors():
        config = load_config(config_path)
    if data_dir:
        from dataclasses import replace

        config = replace(config, data_dir=data_dir)
    app = create_service_app(config)
    click.echo(f"gateway listening on http://{host}:{port} for {config.base_url}")
    _run_uvicorn(app, host, port)


@main.command("op-serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8401, show_default=True, type=int)
@click.option("--base-url", default=None, help="Public URL (default http://HOST:PORT).")
@click.option(
    "--account",
    "account_specs",
    multiple=True,
    help="user:password[:email], repeatable.",
)
def op_serve(
    host: str, port: int, base_url: str | None, account_specs: tuple[str, ...]
) -> None:
    """Run the test identity provider."""
    accounts = AccountStore()
    for spec in account_specs:
        parts = spec.split(":", 2)
        if len(parts) < 2:
            raise _fail(EXIT_INVALID, f"--account needs user:password, got {spec!r}")
        sreg = {"email": parts[2]} if len(parts) == 3 else None
        try:
            accounts.add(parts[0], parts[1], sreg)
        except OpError as exc:
            raise _fail(EXIT_INVALID, str(exc)) from exc
    if not account_specs:
        accounts.add("demo", "demo-pass", {"email": "demo@example.org"})
        click.echo("no --account given; created demo / demo-pass")
    provider = Provider(base_url or f"http://{host}:{port}", accounts)
    app = create_op_app(provider)
    click.echo(f"identity provider listening on http://{host}:{port}")
    _run_uvicorn(app, host, port)


# ---- end-to-end smoke check ---------------------------------------------


def _free_port(host: str) -> int:
    with socket.socket() as sock:
        sock.bind((host, 0))
        return sock.getsockname()[1]


class _BackgroundServer:
    def __init__(self, app, host: str, port: int) -> None:
        import uvicorn

        self._config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def start(self, timeout: float = 10.0) -> None:
        self._thread.start()
        deadline = time.monotonic() + timeout
        while not self._server.started:
            if time.monotonic() > deadline or not self._thread.is_alive():
                raise _fail(EXIT_CONNECTION, "server failed to start")
            time.sleep(0.02)

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=5)


@main.command("e2e-login")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--username", default="demo", show_default=True)
@click.option("--password", default="demo-pass", show_default=True)
@click.option("--email", default="demo@example.org", show_default=True)
@json_option
def e2e_login(host: str, username: str, password: str, email: str, as_json: bool) -> None:
    """Start a gateway and a provider on loopback and run one sign-on."""
    import httpx

    gw_port = _free_port(host)
    op_port = _free_port(host)
    accounts = AccountStore()
    accounts.add(username, password, {"email": email})
    provider = Provider(f"http://{host}:{op_port}", accounts)
    op_server = _BackgroundServer(create_op_app(provider), host, op_port)

    gw_base = f"http://{host}:{gw_port}"
    config = ServiceConfig(base_url=gw_base)
    gw_app = create_service_app(config)
    gw_server = _BackgroundServer(gw_app, host, gw_port)

    op_server.start()
    gw_server.start()
    identity = provider.identity_url(username)
    try:
        with httpx.Client(timeout=10) as browser:
            step = browser.post(
                gw_base + "/login", data={"openid_identifier": identity}
            )
            if step.status_code != 302:
                raise _fail(EXIT_CONNECTION, f"login begin returned {step.status_code}")
            approval_url = step.headers["location"]
            query = urlsplit(approval_url).query
            step = browser.post(
                f"http://{host}:{op_port}/endpoint/decision",
                data={
                    "request": query,
                    "username": username,
                    "password": password,
                    "decision": "allow",
                },
            )
            if step.status_code != 302:
                raise _fail(EXIT_CONNECTION, f"approval returned {step.status_code}")
            step = browser.get(step.headers["location"])
            if "successfully verified" not in step.text:
                raise _fail(EXIT_CONNECTION, "sign-on did not complete")
            me = browser.get(gw_base + "/api/me")
            if me.status_code != 200:
                raise _fail(EXIT_CONNECTION, f"/api/me returned {me.status_code}")
            payload = me.json()
    except httpx.HTTPError as exc:
        raise _fail(EXIT_CONNECTION, f"request failed: {exc}") from exc
    finally:
        gw_server.stop()
        op_server.stop()
    if as_json:
        click.echo(json.dumps(payload))
    else:
        click.echo(f"signed in as {payload['user_name']}")
        click.echo(f"roles: {' '.join(payload['roles'])}")
        click.echo(f"email: {payload['email']}")


if __name__ == "__main__":
    main()
