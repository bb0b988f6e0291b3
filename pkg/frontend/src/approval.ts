/**
 * The identity provider's approval prompt: before anything is signed the
 * user sees which site is asking, named by its realm, and chooses.
 */

import { escapeHtml } from "./views.js";

export interface ApprovalRequest {
  realm: string;
  identity: string;
  returnTo: string;
  /** The raw query string, resubmitted with the decision. */
  query: string;
}

/** Read the sign-on request out of the provider page's query string. */
export function parseApprovalQuery(query: string): ApprovalRequest | null {
  const params = new URLSearchParams(query.startsWith("?") ? query.slice(1) : query);
  const returnTo = params.get("openid.return_to");
  const identity = params.get("openid.identity");
  if (returnTo === null || identity === null) {
    return null;
  }
  const realm =
    params.get("openid.realm") ?? params.get("openid.trust_root") ?? returnTo;
  return {
    realm,
    identity,
    returnTo,
    query: query.startsWith("?") ? query.slice(1) : query,
  };
}

export function approvalView(request: ApprovalRequest, action: string): string {
  return [
    "<h1>Sign-on request</h1>",
    `<p>The site <strong class="realm">${escapeHtml(request.realm)}</strong> asks you to confirm that you are</p>`,
    `<p class="identity">${escapeHtml(request.identity)}</p>`,
    `<form method="post" action="${escapeHtml(action)}">`,
    `<input type="hidden" name="request" value="${escapeHtml(request.query)}">`,
    '<label>Username <input type="text" name="username"></label>',
    '<label>Password <input type="password" name="password"></label>',
    '<button type="submit" name="decision" value="allow">Approve</button>',
    '<button type="submit" name="decision" value="deny">Deny</button>',
    "</form>",
  ].join("\n");
}
