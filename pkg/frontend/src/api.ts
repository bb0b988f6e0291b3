/**
 * Typed client for the gateway's JSON API.
 *
 * Every mutation is a single call and the caller re-fetches afterwards;
 * nothing here decides what the user may do, the server answers that.
 */

export interface Me {
  user_id: number;
  user_name: string;
  identity: string;
  email: string | null;
  roles: string[];
  date: string;
}

export interface RoleRow {
  id: string;
  name: string;
  owner: number;
  scope: "global" | "local";
  app_id: string | null;
}

export interface AssignmentRow {
  s_no: number;
  user_id: number;
  role_id: string;
  valid_from: string;
  valid_upto: string;
  assigner: number;
  kind: "owner" | "delegated";
  revoked: boolean;
}

export interface DateWindow {
  valid_from: string;
  valid_upto: string;
}

export interface DelegationRequest {
  assignee?: string;
  assignee_id?: number;
  role_id: string;
  valid_from: string;
  valid_upto: string;
}

export interface DelegationResponse {
  s_no: number;
  role_id: string;
  assignee_id: number;
  requested: DateWindow;
  effective: DateWindow;
  clamped: boolean;
  /** Server-composed sentence; render it exactly as received. */
  warning: string | null;
}

export interface ValidityResponse {
  role_id: string;
  date: string;
  holds: boolean;
  unbounded: boolean;
  effective_end: string | null;
}

export interface UserRow {
  user_id: number;
  user_name: string;
}

/** The session is missing or no longer honoured; go back through login. */
export class Unauthenticated extends Error {
  constructor() {
    super("not signed in");
    this.name = "Unauthenticated";
  }
}

/** The server refused the call; code and message come from its error body. */
export class ApiFailure extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiFailure";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

interface ErrorEnvelope {
  error?: { code?: string; message?: string };
}

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(path, {
      credentials: "same-origin",
      ...init,
    });
    if (response.status === 401) {
      throw new Unauthenticated();
    }
    const text = await response.text();
    let body: unknown = null;
    if (text.length > 0) {
      try {
        body = JSON.parse(text);
      } catch {
        body = null;
      }
    }
    if (!response.ok) {
      const envelope = (body ?? {}) as ErrorEnvelope;
      throw new ApiFailure(
        response.status,
        envelope.error?.code ?? "error",
        envelope.error?.message ?? `request failed with status ${response.status}`,
      );
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  me(): Promise<Me> {
    return this.request("/api/me");
  }

  async roles(): Promise<RoleRow[]> {
    const body = await this.request<{ roles: RoleRow[] }>("/api/roles");
    return body.roles;
  }

  async myAssignments(): Promise<AssignmentRow[]> {
    const body = await this.request<{ assignments: AssignmentRow[] }>(
      "/api/my/assignments",
    );
    return body.assignments;
  }

  myValidity(roleId: string): Promise<ValidityResponse> {
    return this.request(`/api/my/validity?role_id=${encodeURIComponent(roleId)}`);
  }

  delegate(request: DelegationRequest): Promise<DelegationResponse> {
    return this.post("/api/delegations", request);
  }

  revoke(sNo: number): Promise<AssignmentRow> {
    return this.post("/api/revoke", { s_no: sNo });
  }

  async users(): Promise<UserRow[]> {
    const body = await this.request<{ users: UserRow[] }>("/api/users");
    return body.users;
  }
}
