/**
 * Console entry point: a small hash router over the string views, with
 * one API call per mutation and a re-fetch afterwards.
 */

import { ApiClient, ApiFailure, Unauthenticated } from "./api.js";
import { pickerUpperBound, warningText } from "./clamp.js";
import {
  DelegationFormState,
  delegationFormView,
  dashboardView,
  errorView,
  historyView,
  navView,
} from "./views.js";

const client = new ApiClient();

function mount(): HTMLElement {
  const root = document.getElementById("app");
  if (root === null) {
    throw new Error("missing #app container");
  }
  return root;
}

function toLogin(): void {
  window.location.href = "/login";
}

async function guarded(render: () => Promise<void>): Promise<void> {
  try {
    await render();
  } catch (failure) {
    if (failure instanceof Unauthenticated) {
      toLogin();
      return;
    }
    const message =
      failure instanceof ApiFailure ? failure.message : String(failure);
    mount().innerHTML = navView("") + errorView(message);
  }
}

async function showDashboard(): Promise<void> {
  const [me, roles] = await Promise.all([client.me(), client.roles()]);
  mount().innerHTML = navView("#/dashboard") + dashboardView(me, roles);
}

async function showHistory(): Promise<void> {
  const rows = await client.myAssignments();
  mount().innerHTML = navView("#/history") + historyView(rows);
  mount().querySelectorAll<HTMLButtonElement>("button[data-revoke]").forEach(
    (button) => {
      button.addEventListener("click", () =>
        guarded(async () => {
          await client.revoke(Number(button.dataset.revoke));
          await showHistory();
        }),
      );
    },
  );
}

async function showDelegationForm(
  previous?: Partial<DelegationFormState>,
): Promise<void> {
  const me = await client.me();
  const state: DelegationFormState = {
    roles: [...me.roles].sort(),
    selectedRole: previous?.selectedRole ?? me.roles[0] ?? null,
    upperBound: null,
    today: me.date,
    warning: previous?.warning ?? null,
    error: previous?.error ?? null,
    granted: previous?.granted ?? null,
  };
  if (state.selectedRole !== null) {
    state.upperBound = pickerUpperBound(await client.myValidity(state.selectedRole));
  }
  mount().innerHTML = navView("#/delegate") + delegationFormView(state);
  const form = mount().querySelector<HTMLFormElement>("#delegate-form");
  if (form === null) {
    return;
  }
  const roleSelect = form.querySelector<HTMLSelectElement>('select[name="role_id"]');
  if (roleSelect !== null) {
    roleSelect.addEventListener("change", () =>
      guarded(() => showDelegationForm({ selectedRole: roleSelect.value })),
    );
  }
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const fields = new FormData(form);
    guarded(async () => {
      try {
        const granted = await client.delegate({
          role_id: String(fields.get("role_id") ?? ""),
          assignee: String(fields.get("assignee") ?? ""),
          valid_from: String(fields.get("valid_from") ?? ""),
          valid_upto: String(fields.get("valid_upto") ?? ""),
        });
        await showDelegationForm({
          selectedRole: granted.role_id,
          warning: warningText(granted),
          granted: `Delegated ${granted.role_id} to user ${granted.assignee_id} for ${granted.effective.valid_from}..${granted.effective.valid_upto}.`,
        });
      } catch (failure) {
        if (failure instanceof ApiFailure) {
          await showDelegationForm({
            selectedRole: String(fields.get("role_id") ?? "") || null,
            error: failure.message,
          });
          return;
        }
        throw failure;
      }
    });
  });
}

function route(): void {
  const hash = window.location.hash || "#/dashboard";
  if (hash.startsWith("#/delegate")) {
    void guarded(() => showDelegationForm());
  } else if (hash.startsWith("#/history")) {
    void guarded(() => showHistory());
  } else {
    void guarded(() => showDashboard());
  }
}

window.addEventListener("hashchange", route);
window.addEventListener("DOMContentLoaded", route);
