// Keyboard map. Every action in the interface is reachable from the keys
// documented here: Enter includes, digits exclude with the reason at that
// position in the taxonomy, u undoes the last label, r retries parked
// submissions after a reconnect.

import { EXCLUSION_REASONS, type ExclusionReason } from "./types.js";

export type KeyAction =
  | { kind: "include" }
  | { kind: "exclude"; reason: ExclusionReason }
  | { kind: "undo" }
  | { kind: "retry" };

export function actionForKey(key: string): KeyAction | null {
  if (key === "Enter") return { kind: "include" };
  if (key === "u") return { kind: "undo" };
  if (key === "r") return { kind: "retry" };
  if (/^[1-9]$/.test(key)) {
    const reason = EXCLUSION_REASONS[Number(key) - 1];
    if (reason !== undefined) return { kind: "exclude", reason };
  }
  return null;
}

/** Digit shown on the exclude button for a reason. */
export function keyForReason(reason: ExclusionReason): string {
  return String(EXCLUSION_REASONS.indexOf(reason) + 1);
}
