import type {
  ActionItem,
  CentreStats,
  FeedItem,
  PatientRow,
} from "../src/types.js";

export function row(overrides: Partial<PatientRow> = {}): PatientRow {
  return {
    patient_id: "P000001",
    status: "Monitoring",
    category: "Green",
    overdue: false,
    last_report_at: "2026-01-05T09:00:00+00:00",
    key_symptoms: { temperature_c: 36.8, dyspnea: 0, pain: 0 },
    open_actions: 0,
    reports_per_day: 2,
    escalated: false,
    ...overrides,
  };
}

export function action(overrides: Partial<ActionItem> = {}): ActionItem {
  return {
    action_id: "A000001",
    patient_id: "P000001",
    trigger: "OrangeFlag",
    kind: "Review",
    status: "Open",
    created_at: "2026-01-05T09:00:00+00:00",
    note: null,
    ...overrides,
  };
}

export function stats(overrides: Partial<CentreStats> = {}): CentreStats {
  return {
    categories: { Green: 0, Yellow: 0, Orange: 0, Red: 0 },
    overdue: 0,
    open_actions: 0,
    monitoring: 0,
    enrolled_total: 0,
    ...overrides,
  };
}

export function feedItem(seq: number, kind = "report_received"): FeedItem {
  return { seq, at: "2026-01-05T09:00:00+00:00", patient_id: "P000001", kind, payload: {} };
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/** A Response whose body arrives in the given chunks (for NDJSON tests). */
export function chunkedResponse(chunks: string[], status = 200): Response {
  const encoder = new TextEncoder();
  const stream = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const chunk of chunks) controller.enqueue(encoder.encode(chunk));
      controller.close();
    },
  });
  return new Response(stream, { status });
}
