/** DOM construction for the three dashboard views.
 *
 * Pure functions from state to elements; no fetching here. Severity
 * colors are the category names themselves (CSS classes cat-green ...
 * cat-red); overdue is a badge, not a fifth color.
 */
import { sortActions } from "./queue.js";
import { canResolve } from "./store.js";
import type {
  ActionItem,
  Category,
  CentreStats,
  PatientDetail,
  PatientRow,
} from "./types.js";
import { CATEGORIES } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderStatsBar(stats: CentreStats | null): HTMLElement {
  const bar = el("div", "stats-bar");
  if (!stats) {
    bar.append(el("span", "stats-empty", "loading…"));
    return bar;
  }
  for (const category of CATEGORIES) {
    const chip = el(
      "span",
      `stat-chip cat-${category.toLowerCase()}`,
      `${category} ${stats.categories[category] ?? 0}`,
    );
    chip.dataset.category = category;
    bar.append(chip);
  }
  bar.append(el("span", "stat-chip overdue", `Overdue ${stats.overdue}`));
  bar.append(el("span", "stat-chip actions", `Actions ${stats.open_actions}`));
  return bar;
}

export function renderBoard(
  rows: readonly PatientRow[],
  onSelect: (patientId: string) => void,
): HTMLElement {
  const board = el("div", "board");
  if (rows.length === 0) {
    board.append(el("p", "empty-state", "No patients match."));
    return board;
  }
  for (const row of rows) {
    const card = el("div", `patient-row cat-${row.category.toLowerCase()}`);
    card.dataset.patientId = row.patient_id;
    card.dataset.category = row.category;
    card.append(el("span", "pid", row.patient_id));
    card.append(el("span", "category", row.category));
    if (row.overdue) card.append(el("span", "badge overdue-badge", "overdue"));
    if (row.escalated) card.append(el("span", "badge escalated", "escalated"));
    if (row.open_actions > 0) {
      card.append(el("span", "badge open-actions", `${row.open_actions} open`));
    }
    if (row.key_symptoms) {
      const parts = Object.entries(row.key_symptoms)
        .filter(([, v]) => v !== null && v !== undefined)
        .map(([k, v]) => `${k}=${v}`);
      card.append(el("span", "symptoms", parts.join(" ")));
    }
    card.addEventListener("click", () => onSelect(row.patient_id));
    board.append(card);
  }
  return board;
}

export function renderQueue(
  actions: readonly ActionItem[],
  handlers: {
    onAcknowledge: (actionId: string) => void;
    onResolve: (actionId: string, kind: string, note: string) => void;
  },
): HTMLElement {
  const queue = el("div", "action-queue");
  const open = sortActions(actions.filter((a) => a.status !== "Resolved"));
  if (open.length === 0) {
    queue.append(el("p", "empty-state", "No actions pending."));
    return queue;
  }
  for (const action of open) {
    const item = el("div", `action-item trigger-${action.trigger.toLowerCase()}`);
    item.dataset.actionId = action.action_id;
    item.dataset.trigger = action.trigger;
    item.append(el("span", "trigger", action.trigger));
    item.append(el("span", "pid", action.patient_id));
    item.append(el("span", "status", action.status));
    if (action.status === "Open") {
      const ack = el("button", "ack", "Acknowledge");
      ack.addEventListener("click", () => handlers.onAcknowledge(action.action_id));
      item.append(ack);
    } else {
      item.append(renderResolveForm(action, handlers.onResolve));
    }
    queue.append(item);
  }
  return queue;
}

function renderResolveForm(
  action: ActionItem,
  onResolve: (actionId: string, kind: string, note: string) => void,
): HTMLElement {
  const form = el("form", "resolve-form");
  const kind = el("select");
  for (const name of ["Call", "Review", "IntensifyMonitoring", "Hospitalize"]) {
    const option = el("option", undefined, name);
    option.value = name;
    kind.append(option);
  }
  const note = el("input");
  note.type = "text";
  note.placeholder = "resolution note (required)";
  const submit = el("button", "resolve", "Resolve");
  submit.type = "submit";
  submit.disabled = true;
  note.addEventListener("input", () => {
    submit.disabled = !canResolve(note.value);
  });
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (!canResolve(note.value)) return;
    onResolve(action.action_id, kind.value, note.value.trim());
  });
  form.append(kind, note, submit);
  return form;
}

export function renderPanel(detail: PatientDetail | null): HTMLElement {
  const panel = el("div", "patient-panel");
  if (!detail) {
    panel.append(el("p", "empty-state", "Select a patient."));
    return panel;
  }
  panel.append(el("h2", undefined, detail.patient.patient_id));
  panel.append(
    el("p", "panel-status",
       `${detail.patient.status} — ${detail.patient.category}` +
       (detail.patient.overdue ? " (overdue)" : "")),
  );
  const history = el("div", "category-history");
  for (const category of detail.recent_categories) {
    history.append(el("span", `dot cat-${category.toLowerCase()}`, category));
  }
  panel.append(history);
  const reports = detail.timeline.filter((t) => t.kind === "report_received");
  const chart = el("div", "timeline");
  chart.dataset.points = String(reports.length);
  for (const entry of reports) {
    const point = el("div", "timeline-point");
    point.dataset.seq = String(entry.seq);
    const payload = entry.payload as { category?: string };
    point.append(el("span", "at", entry.at));
    if (payload.category) {
      point.append(el("span", `cat-${payload.category.toLowerCase()}`, payload.category));
    }
    chart.append(point);
  }
  panel.append(chart);
  return panel;
}

export function renderStaleBanner(stale: boolean): HTMLElement | null {
  if (!stale) return null;
  return el(
    "div",
    "stale-banner",
    "Connection lost — data may be stale. Reconnecting…",
  );
}

export function categoryCounts(
  rows: readonly PatientRow[],
): Record<Category, number> {
  const counts: Record<Category, number> = {
    Green: 0,
    Yellow: 0,
    Orange: 0,
    Red: 0,
  };
  for (const row of rows) counts[row.category] += 1;
  return counts;
}
