/**
 * Delegation window helpers for the form.
 *
 * The form shows the clamp rule before submission: the picker's upper
 * bound is the assigner's own validity end as the API reports it.  The
 * preview here is a convenience; the server's answer is authoritative and
 * its warning sentence is displayed without rephrasing.
 */

import type { DateWindow, DelegationResponse, ValidityResponse } from "./api.js";

/** ISO date the picker may not exceed; null when the hold is unbounded. */
export function pickerUpperBound(validity: ValidityResponse): string | null {
  if (!validity.holds) {
    return validity.date;
  }
  return validity.unbounded ? null : validity.effective_end;
}

export function formatWindow(window: DateWindow): string {
  return `${window.valid_from}..${window.valid_upto}`;
}

export interface ClampPreview {
  valid_from: string;
  valid_upto: string;
  clamped: boolean;
}

/**
 * What the server will grant for a request, predicted client-side so the
 * form can hint before submitting: the start never lies in the past and
 * the end never passes the assigner's bound.
 */
export function previewClamp(
  requested: DateWindow,
  todayIso: string,
  upperBound: string | null,
): ClampPreview {
  let from = requested.valid_from;
  let upto = requested.valid_upto;
  if (from < todayIso) {
    from = todayIso;
  }
  if (upperBound !== null && upto > upperBound) {
    upto = upperBound;
  }
  return {
    valid_from: from,
    valid_upto: upto,
    clamped: from !== requested.valid_from || upto !== requested.valid_upto,
  };
}

/**
 * The sentence to show for a finished delegation.  This is a pass-through
 * on purpose: the server composes the wording and every surface shows the
 * same bytes.
 */
export function warningText(response: DelegationResponse): string | null {
  return response.warning;
}
