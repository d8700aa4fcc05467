/** Shapes returned by the command-centre HTTP API. */

export type Category = "Green" | "Yellow" | "Orange" | "Red";

export const CATEGORIES: readonly Category[] = [
  "Red",
  "Orange",
  "Yellow",
  "Green",
];

export type ActionTrigger =
  | "RedFlag"
  | "OrangeFlag"
  | "NonResponder"
  | "PatientInitiated"
  | "DeliveryFailure";

export type ActionStatus = "Open" | "Acknowledged" | "Resolved";

export interface PatientRow {
  patient_id: string;
  status: string;
  category: Category;
  overdue: boolean;
  last_report_at: string | null;
  key_symptoms: Record<string, number | null> | null;
  open_actions: number;
  reports_per_day: number;
  escalated: boolean;
}

export interface PatientPage {
  rows: PatientRow[];
  total: number;
  next_cursor: string | null;
}

export interface ActionItem {
  action_id: string;
  patient_id: string;
  trigger: ActionTrigger;
  kind: string;
  status: ActionStatus;
  created_at: string;
  note: string | null;
}

export interface TimelineEntry {
  seq: number;
  at: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface PatientDetail {
  patient: PatientRow;
  recent_categories: Category[];
  actions: ActionItem[];
  timeline: TimelineEntry[];
}

export interface CentreStats {
  categories: Record<Category, number>;
  overdue: number;
  open_actions: number;
  monitoring: number;
  enrolled_total: number;
  [key: string]: unknown;
}

export interface FeedItem {
  seq: number;
  at: string;
  patient_id: string | null;
  kind: string;
  payload: Record<string, unknown>;
}

export interface ApiError {
  code: string;
  message: string;
}

export interface ListFilters {
  category?: Category;
  overdue?: boolean;
  needs_action?: boolean;
  search?: string;
  cursor?: string;
}
