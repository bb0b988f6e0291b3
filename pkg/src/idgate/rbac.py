"""Role catalog, time-windowed role assignments, ownership, and delegation.

Model in brief:

* Role ids are non-empty digit strings.  A single digit names an
  application-wide ("global") role; two or more digits name a role local to
  the application given by the first digit.
* Users hold roles through an append-only assignment log.  Each entry has an
  inclusive validity window (calendar dates).  A user's roles at a date are
  the union over live entries covering that date.
* Each role has an owner.  The current holder can hand the role to someone
  else for a bounded period; the grantee's window can never outrun the
  grantor's own validity, so chains of delegations only ever shrink.  When
  the last live delegation lapses the role falls back to its owner.
* Privileges are named capabilities granted to roles; an access check passes
  when the user's live roles intersect the privilege's grant set.

All mutating operations serialize through one lock and append to the store,
so readers never observe a half-applied change.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Iterable, Literal

from .storage import Store, assignment_key, user_key

# Actor id used by operator tooling and service bootstrap; it bypasses the
# administrator-role check but never appears in the user store.
SYSTEM_ACTOR = 0

ADMIN_ROLE_ID = "0"

# Local roles are mirrored into the global catalog under this key prefix.
LOCAL_CATALOG_PREFIX = "local:"

UNBOUNDED = date.max


class RbacError(Exception):
    """Base class for access-control errors."""


class ValidationError(RbacError):
    pass


class NotAuthorizedError(RbacError):
    pass


class UnknownUserError(RbacError):
    pass


class UnknownRoleError(RbacError):
    pass


class UnknownPrivilegeError(RbacError):
    pass


class UnknownAssignmentError(RbacError):
    pass


class DuplicateRoleError(RbacError):
    pass


class DuplicateUserError(RbacError):
    pass


class NotHolderError(RbacError):
    pass


class OutsideValidityError(RbacError):
    pass


# -- domain types ----------------------------------------------------------


def validate_role_id(role_id: str) -> str:
    if not role_id or not all("0" <= c <= "9" for c in role_id):
        raise ValidationError(f"role id must be a non-empty digit string, got {role_id!r}")
    return role_id


@dataclass(frozen=True)
class Scope:
    level: Literal["global", "local"]
    app_id: str | None = None
    code: str | None = None


def classify_role_id(role_id: str) -> Scope:
    """Scope of a role id: one digit is global, more digits are local to the
    application named by the first digit."""
    validate_role_id(role_id)
    if len(role_id) == 1:
        return Scope("global")
    return Scope("local", app_id=role_id[0], code=role_id[1:])


@dataclass(frozen=True)
class ValidityPeriod:
    """Inclusive date window; a single-day window has equal endpoints."""

    valid_from: date
    valid_upto: date

    def __post_init__(self) -> None:
        if self.valid_from > self.valid_upto:
            raise ValidationError(
                f"valid_from {self.valid_from} is after valid_upto {self.valid_upto}"
            )

    def contains(self, at: date) -> bool:
        return self.valid_from <= at <= self.valid_upto


@dataclass(frozen=True)
class UserRecord:
    user_id: int
    user_name: str


@dataclass(frozen=True)
class RoleDescriptor:
    id: str
    name: str
    owner: int

    def __post_init__(self) -> None:
        validate_role_id(self.id)

    @property
    def scope(self) -> Scope:
        return classify_role_id(self.id)


@dataclass(frozen=True)
class Privilege:
    id: str
    description: str
    granted_to: frozenset[str] = field(default_factory=frozenset)


AssignmentKind = Literal["owner", "delegated"]


@dataclass(frozen=True)
class RoleAssignment:
    s_no: int
    user_id: int
    role_id: str
    period: ValidityPeriod
    assigner: int
    kind: AssignmentKind
    revoked: bool = False

    def live_at(self, at: date) -> bool:
        return not self.revoked and self.period.contains(at)


@dataclass(frozen=True)
class DelegationResult:
    """Outcome of a delegation, reporting any clamping of the requested window."""

    assignment: RoleAssignment
    requested: ValidityPeriod
    clamped: bool

    @property
    def effective(self) -> ValidityPeriod:
        return self.assignment.period


@dataclass(frozen=True)
class AccessDecision:
    outcome: Literal["permit", "deny"]
    reason: Literal["ok", "no-role", "expired", "no-privilege"]

    def __post_init__(self) -> None:
        if self.outcome == "permit" and self.reason != "ok":
            raise ValidationError("permit decisions must carry reason 'ok'")

    @property
    def permitted(self) -> bool:
        return self.outcome == "permit"


# -- engine ----------------------------------------------------------------


class RbacEngine:
    """Access-control engine over a record store.

    The store is the durable source of truth; the engine mirrors it in
    memory.  All public methods take the engine lock, so instances are safe
    to share between threads.
    """

    def __init__(self, store: Store, *, today: Callable[[], date] = date.today) -> None:
        self._store = store
        self._today = today
        self._lock = threading.RLock()
        self._users: dict[int, UserRecord] = {}
        self._users_by_name: dict[str, int] = {}
        self._roles: dict[str, RoleDescriptor] = {}
        self._privileges: dict[str, Privilege] = {}
        self._assignments: dict[int, RoleAssignment] = {}
        self._global_catalog: dict[str, str] = {}
        self._load()

    def _load(self) -> None:
        for rec in self._store.scan("users"):
            user = UserRecord(int(rec.payload["user_id"]), rec.payload["user_name"])
            self._users[user.user_id] = user
            self._users_by_name[user.user_name] = user.user_id
        for rec in self._store.scan("roles"):
            role = RoleDescriptor(
                rec.payload["id"], rec.payload["name"], int(rec.payload["owner"])
            )
            self._roles[role.id] = role
            self.sync_global_catalog("add", role)
        for rec in self._store.scan("privileges"):
            self._privileges[rec.payload["id"]] = Privilege(
                rec.payload["id"],
                rec.payload.get("description", ""),
                frozenset(rec.payload.get("granted_to", ())),
            )
        for rec in self._store.scan("assignments"):
            a = _assignment_from_payload(rec.payload)
            self._assignments[a.s_no] = a

    # -- lookups -----------------------------------------------------------

    def user(self, user_id: int) -> UserRecord:
        with self._lock:
            try:
                return self._users[user_id]
            except KeyError:
                raise UnknownUserError(f"unknown user id {user_id}") from None

    def find_user(self, user_name: str) -> UserRecord | None:
        with self._lock:
            user_id = self._users_by_name.get(user_name)
            return self._users[user_id] if user_id is not None else None

    def users(self) -> list[UserRecord]:
        with self._lock:
            return [self._users[k] for k in sorted(self._users)]

    def role(self, role_id: str) -> RoleDescriptor:
        with self._lock:
            try:
                return self._roles[role_id]
            except KeyError:
                raise UnknownRoleError(f"unknown role id {role_id!r}") from None

    def find_role_by_name(self, name: str) -> RoleDescriptor | None:
        with self._lock:
            for role in self._roles.values():
                if role.name == name:
                    return role
            return None

    def roles(self) -> list[RoleDescriptor]:
        with self._lock:
            return [self._roles[k] for k in sorted(self._roles)]

    def privilege(self, privilege_id: str) -> Privilege:
        with self._lock:
            try:
                return self._privileges[privilege_id]
            except KeyError:
                raise UnknownPrivilegeError(f"unknown privilege {privilege_id!r}") from None

    def privileges(self) -> list[Privilege]:
        with self._lock:
            return [self._privileges[k] for k in sorted(self._privileges)]

    def assignments(self) -> list[RoleAssignment]:
        """The full assignment log in s_no order, revoked entries included."""
        with self._lock:
            return [self._assignments[k] for k in sorted(self._assignments)]

    def assignment(self, s_no: int) -> RoleAssignment:
        with self._lock:
            try:
                return self._assignments[s_no]
            except KeyError:
                raise UnknownAssignmentError(f"unknown assignment s_no {s_no}") from None

    def global_catalog(self) -> dict[str, str]:
        """Catalog keyed by role id for global roles and by the encoded
        ``local:<id>`` form for local ones."""
        with self._lock:
            return dict(self._global_catalog)

    # -- catalog sync ------------------------------------------------------

    def sync_global_catalog(self, change: str, role: RoleDescriptor) -> None:
        """Mirror a catalog change into the global table.

        Local roles appear under an encoded key; global roles under their id.
        Idempotent: replaying a change leaves a single entry per live role.
        """
        key = role.id if role.scope.level == "global" else LOCAL_CATALOG_PREFIX + role.id
        if change in ("add", "modify"):
            self._global_catalog[key] = role.name
        elif change == "delete":
            self._global_catalog.pop(key, None)
        else:
            raise ValidationError(f"unknown catalog change {change!r}")

    # -- authorization helpers --------------------------------------------

    def is_admin(self, actor: int, at: date | None = None) -> bool:
        with self._lock:
            if actor == SYSTEM_ACTOR:
                return True
            if actor not in self._users:
                return False
            at = at or self._today()
            return ADMIN_ROLE_ID in self._resolve(actor, at)

    def _require_admin(self, actor: int, at: date | None) -> None:
        if not self.is_admin(actor, at):
            raise NotAuthorizedError(f"actor {actor} lacks administrator authority")

    # -- mutations ---------------------------------------------------------

    def add_user(self, user_name: str) -> UserRecord:
        if not user_name:
            raise ValidationError("user name must be non-empty")
        with self._lock:
            if user_name in self._users_by_name:
                raise DuplicateUserError(f"user name {user_name!r} already taken")
            user_id = max(self._users, default=0) + 1
            user = UserRecord(user_id, user_name)
            self._store.put(
                "users", user_key(user_id), {"user_id": user_id, "user_name": user_name}
            )
            self._users[user_id] = user
            self._users_by_name[user_name] = user_id
            return user

    def register_role(
        self,
        actor: int,
        desc: RoleDescriptor,
        *,
        replace: bool = False,
        at: date | None = None,
    ) -> RoleDescriptor:
        """Add a role to the catalog (administrators only).

        ``replace=True`` overwrites an existing entry, which is also the only
        way a role's owner can be changed.
        """
        with self._lock:
            self._require_admin(actor, at)
            if desc.owner not in self._users:
                raise UnknownUserError(f"role owner {desc.owner} is not a known user")
            exists = desc.id in self._roles
            if exists and not replace:
                raise DuplicateRoleError(f"role id {desc.id!r} already registered")
            self._store.put(
                "roles", desc.id, {"id": desc.id, "name": desc.name, "owner": desc.owner}
            )
            self._roles[desc.id] = desc
            self.sync_global_catalog("modify" if exists else "add", desc)
            return desc

    def remove_role(self, actor: int, role_id: str, *, at: date | None = None) -> None:
        """Drop a role that has no live history; removes its catalog entry."""
        with self._lock:
            self._require_admin(actor, at)
            role = self.role(role_id)
            for a in self._assignments.values():
                if a.role_id == role_id and not a.revoked:
                    raise ValidationError(
                        f"role {role_id!r} still has unrevoked assignments"
                    )
            self._store.delete("roles", role_id)
            del self._roles[role_id]
            self.sync_global_catalog("delete", role)

    def register_privilege(
        self,
        actor: int,
        privilege: Privilege,
        *,
        at: date | None = None,
    ) -> Privilege:
        with self._lock:
            self._require_admin(actor, at)
            for role_id in privilege.granted_to:
                if role_id not in self._roles:
                    raise UnknownRoleError(
                        f"privilege {privilege.id!r} grants to unregistered role {role_id!r}"
                    )
            self._store.put(
                "privileges",
                privilege.id,
                {
                    "id": privilege.id,
                    "description": privilege.description,
                    "granted_to": sorted(privilege.granted_to),
                },
            )
            self._privileges[privilege.id] = privilege
            return privilege

    def _append_assignment(
        self,
        user_id: int,
        role_id: str,
        period: ValidityPeriod,
        assigner: int,
        kind: AssignmentKind,
    ) -> RoleAssignment:
        s_no = max(self._assignments, default=0) + 1
        a = RoleAssignment(s_no, user_id, role_id, period, assigner, kind)
        self._store.put("assignments", assignment_key(s_no), _assignment_payload(a))
        self._assignments[s_no] = a
        return a

    def assign_owner_role(
        self,
        actor: int,
        user_id: int,
        role_id: str,
        period: ValidityPeriod,
        *,
        at: date | None = None,
    ) -> RoleAssignment:
        """Grant a role directly for a window; only the role owner or an
        administrator may do this."""
        with self._lock:
            role = self.role(role_id)
            if user_id not in self._users:
                raise UnknownUserError(f"unknown user id {user_id}")
            if actor != role.owner:
                self._require_admin(actor, at)
            return self._append_assignment(user_id, role_id, period, actor, "owner")

    def effective_validity_end(
        self, user_id: int, role_id: str, at: date
    ) -> date | None:
        """Latest date through which the user holds the role, looking only at
        state live at ``at``; ``None`` when they do not hold it, ``UNBOUNDED``
        for the owner."""
        with self._lock:
            role = self.role(role_id)
            if role.owner == user_id:
                return UNBOUNDED
            ends = [
                a.period.valid_upto
                for a in self._assignments.values()
                if a.user_id == user_id and a.role_id == role_id and a.live_at(at)
            ]
            return max(ends) if ends else None

    def delegate_role(
        self,
        assigner: int,
        assignee: int,
        role_id: str,
        requested: ValidityPeriod,
        *,
        today: date | None = None,
    ) -> DelegationResult:
        """Hand a role to another user for a bounded window.

        The effective window starts no earlier than today and ends no later
        than the assigner's own validity for the role; over-long requests are
        clamped, not rejected, and the result reports the clamping.
        """
        with self._lock:
            today = today or self._today()
            self.role(role_id)
            if assigner not in self._users:
                raise UnknownUserError(f"unknown assigner id {assigner}")
            if assignee not in self._users:
                raise UnknownUserError(f"unknown assignee id {assignee}")
            own_end = self.effective_validity_end(assigner, role_id, today)
            if own_end is None:
                raise NotHolderError(
                    f"user {assigner} does not hold role {role_id!r} today"
                )
            effective_from = max(requested.valid_from, today)
            effective_upto = min(requested.valid_upto, own_end)
            if effective_from > effective_upto:
                raise OutsideValidityError(
                    "requested window lies entirely outside the assigner's validity"
                )
            effective = ValidityPeriod(effective_from, effective_upto)
            a = self._append_assignment(assignee, role_id, effective, assigner, "delegated")
            clamped = effective != requested
            return DelegationResult(a, requested, clamped)

    def revoke_assignment(
        self, actor: int, s_no: int, *, at: date | None = None
    ) -> RoleAssignment:
        """Mark an assignment revoked; only an administrator, the role owner,
        or the entry's assigner may revoke it.  Idempotent."""
        with self._lock:
            a = self.assignment(s_no)
            role = self._roles.get(a.role_id)
            allowed = (
                self.is_admin(actor, at)
                or (role is not None and actor == role.owner)
                or actor == a.assigner
            )
            if not allowed:
                raise NotAuthorizedError(
                    f"actor {actor} may not revoke assignment {s_no}"
                )
            if a.revoked:
                return a
            revoked = RoleAssignment(
                a.s_no, a.user_id, a.role_id, a.period, a.assigner, a.kind, revoked=True
            )
            self._store.put("assignments", assignment_key(s_no), _assignment_payload(revoked))
            self._assignments[s_no] = revoked
            return revoked

    # -- resolution --------------------------------------------------------

    def _resolve(self, user_id: int, at: date) -> frozenset[str]:
        return frozenset(
            a.role_id for a in self._assignments.values() if a.user_id == user_id and a.live_at(at)
        )

    def resolve_roles(self, user_id: int, at: date) -> frozenset[str]:
        """All roles the user holds on the given date (union over live
        assignments, endpoints inclusive)."""
        with self._lock:
            if user_id not in self._users:
                raise UnknownUserError(f"unknown user id {user_id}")
            return self._resolve(user_id, at)

    def effective_holder(self, role_id: str, at: date) -> int:
        """Who answers for the role on a date: the most recently created live
        delegation wins; with none, the role maps back to its owner."""
        with self._lock:
            role = self.role(role_id)
            live = [
                a
                for a in self._assignments.values()
                if a.role_id == role_id and a.kind == "delegated" and a.live_at(at)
            ]
            if live:
                return max(live, key=lambda a: a.s_no).user_id
            return role.owner

    def check_access(self, user_id: int, privilege_id: str, at: date) -> AccessDecision:
        with self._lock:
            privilege = self.privilege(privilege_id)
            roles = self.resolve_roles(user_id, at)
            if roles & privilege.granted_to:
                return AccessDecision("permit", "ok")
            if roles:
                return AccessDecision("deny", "no-privilege")
            has_any = any(
                a.user_id == user_id and not a.revoked for a in self._assignments.values()
            )
            return AccessDecision("deny", "expired" if has_any else "no-role")


# -- payload mapping -------------------------------------------------------


def _assignment_payload(a: RoleAssignment) -> dict:
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


def _assignment_from_payload(payload: dict) -> RoleAssignment:
    return RoleAssignment(
        int(payload["s_no"]),
        int(payload["user_id"]),
        payload["role_id"],
        ValidityPeriod(
            date.fromisoformat(payload["valid_from"]),
            date.fromisoformat(payload["valid_upto"]),
        ),
        int(payload["assigner"]),
        payload["kind"],
        bool(payload.get("revoked", False)),
    )
