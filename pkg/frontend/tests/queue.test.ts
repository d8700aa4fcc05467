import { describe, expect, it } from "vitest";

import { sortActions } from "../src/queue.js";
import { action } from "./helpers.js";

describe("sortActions", () => {
  it("orders RedFlag, NonResponder, OrangeFlag, PatientInitiated", () => {
    const sorted = sortActions([
      action({ action_id: "A1", trigger: "PatientInitiated" }),
      action({ action_id: "A2", trigger: "OrangeFlag" }),
      action({ action_id: "A3", trigger: "RedFlag" }),
      action({ action_id: "A4", trigger: "NonResponder" }),
    ]);
    expect(sorted.map((a) => a.trigger)).toEqual([
      "RedFlag",
      "NonResponder",
      "OrangeFlag",
      "PatientInitiated",
    ]);
  });

  it("breaks trigger ties by age, oldest first", () => {
    const sorted = sortActions([
      action({ action_id: "A2", created_at: "2026-01-05T10:00:00+00:00" }),
      action({ action_id: "A1", created_at: "2026-01-05T09:00:00+00:00" }),
    ]);
    expect(sorted.map((a) => a.action_id)).toEqual(["A1", "A2"]);
  });

  it("does not mutate its input", () => {
    const input = [
      action({ action_id: "A1", trigger: "PatientInitiated" }),
      action({ action_id: "A2", trigger: "RedFlag" }),
    ];
    sortActions(input);
    expect(input[0].action_id).toBe("A1");
  });
});
