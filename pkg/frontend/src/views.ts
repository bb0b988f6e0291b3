/**
 * HTML builders for the console views.  Pure string in, string out, so
 * the content is testable without a browser; app.ts mounts the results
 * and wires events.
 */

import type { AssignmentRow, Me, RoleRow } from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function navView(active: string): string {
  const links: Array<[string, string]> = [
    ["#/dashboard", "My roles"],
    ["#/delegate", "Delegate"],
    ["#/history", "History"],
  ];
  const items = links
    .map(([href, label]) => {
      const marker = href === active ? ' class="active"' : "";
      return `<a href="${href}"${marker}>${label}</a>`;
    })
    .join(" | ");
  return `<nav>${items} | <a href="/logout">Sign out</a></nav>`;
}

export function dashboardView(me: Me, roles: RoleRow[]): string {
  const names = new Map(roles.map((r) => [r.id, r.name]));
  const items = [...me.roles]
    .sort()
    .map((id) => {
      const label = names.get(id);
      const text = label ? `${id} ${label}` : id;
      return `<li>${escapeHtml(text)}</li>`;
    })
    .join("");
  const email = me.email ? escapeHtml(me.email) : "not provided";
  return [
    `<h1>${escapeHtml(me.user_name)}</h1>`,
    `<p>Identity: ${escapeHtml(me.identity)}</p>`,
    `<p>Email: ${email}</p>`,
    `<h2>Roles on ${escapeHtml(me.date)}</h2>`,
    `<ul class="roles">${items || "<li>none</li>"}</ul>`,
  ].join("\n");
}

export interface DelegationFormState {
  roles: string[];
  selectedRole: string | null;
  /** Upper bound for both pickers; null means no bound applies. */
  upperBound: string | null;
  today: string;
  /** Server sentence from the last submission, shown exactly as sent. */
  warning: string | null;
  /** Inline error from a refused call. */
  error: string | null;
  /** Confirmation for the last accepted delegation. */
  granted: string | null;
}

export function delegationFormView(state: DelegationFormState): string {
  const options = state.roles
    .map((id) => {
      const selected = id === state.selectedRole ? " selected" : "";
      return `<option value="${escapeHtml(id)}"${selected}>${escapeHtml(id)}</option>`;
    })
    .join("");
  const bound = state.upperBound !== null ? ` max="${escapeHtml(state.upperBound)}"` : "";
  const boundNote =
    state.upperBound !== null
      ? `<p class="bound">Your hold on this role ends ${escapeHtml(state.upperBound)}; later dates will be cut back.</p>`
      : "";
  const warning = state.warning !== null
    ? `<p class="warning">${escapeHtml(state.warning)}</p>`
    : "";
  const error = state.error !== null
    ? `<p class="error">${escapeHtml(state.error)}</p>`
    : "";
  const granted = state.granted !== null
    ? `<p class="granted">${escapeHtml(state.granted)}</p>`
    : "";
  return [
    "<h1>Delegate a role</h1>",
    error,
    granted,
    warning,
    '<form id="delegate-form">',
    `<label>Role <select name="role_id">${options}</select></label>`,
    '<label>To user <input type="text" name="assignee" required></label>',
    `<label>From <input type="date" name="valid_from" min="${escapeHtml(state.today)}"${bound} required></label>`,
    `<label>Until <input type="date" name="valid_upto" min="${escapeHtml(state.today)}"${bound} required></label>`,
    boundNote,
    '<button type="submit">Delegate</button>',
    "</form>",
  ].join("\n");
}

export function historyView(rows: AssignmentRow[]): string {
  const body = rows
    .map((row) => {
      const cls = row.revoked ? ' class="revoked"' : "";
      const action = row.revoked
        ? "revoked"
        : `<button data-revoke="${row.s_no}">Revoke</button>`;
      return (
        `<tr${cls}><td>${row.s_no}</td><td>${escapeHtml(row.role_id)}</td>` +
        `<td>${escapeHtml(row.valid_from)}..${escapeHtml(row.valid_upto)}</td>` +
        `<td>${escapeHtml(row.kind)}</td><td>${action}</td></tr>`
      );
    })
    .join("");
  return [
    "<h1>My assignments</h1>",
    "<table><thead><tr><th>#</th><th>Role</th><th>Window</th><th>Kind</th><th></th></tr></thead>",
    `<tbody>${body}</tbody></table>`,
  ].join("\n");
}

export function errorView(message: string): string {
  return `<p class="error">${escapeHtml(message)}</p>`;
}
