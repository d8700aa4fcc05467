/** Action-queue ordering: most urgent trigger first. */
import type { ActionItem, ActionTrigger } from "./types.js";

export const TRIGGER_PRIORITY: Record<ActionTrigger, number> = {
  RedFlag: 0,
  NonResponder: 1,
  OrangeFlag: 2,
  PatientInitiated: 3,
  DeliveryFailure: 4,
};

export function sortActions(actions: readonly ActionItem[]): ActionItem[] {
  return [...actions].sort((a, b) => {
    const byTrigger = TRIGGER_PRIORITY[a.trigger] - TRIGGER_PRIORITY[b.trigger];
    if (byTrigger !== 0) return byTrigger;
    if (a.created_at !== b.created_at) {
      return a.created_at < b.created_at ? -1 : 1;
    }
    return a.action_id < b.action_id ? -1 : 1;
  });
}
