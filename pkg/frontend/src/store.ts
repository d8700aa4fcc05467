/** Client-side state for the dashboard.
 *
 * The store never computes counts itself: every stream item triggers a
 * refetch of /stats and /patients, so what the screen shows is always a
 * value the API returned (no client-side recomputation drift). User
 * actions are optimistic with rollback on API error.
 */
import type { ApiClient } from "./api.js";
import type {
  ActionItem,
  CentreStats,
  FeedItem,
  ListFilters,
  PatientDetail,
  PatientRow,
} from "./types.js";

export interface StoreState {
  stats: CentreStats | null;
  rows: PatientRow[];
  total: number;
  nextCursor: string | null;
  detail: PatientDetail | null;
  openActions: ActionItem[];
  stale: boolean;
  lastError: string | null;
}

type Listener = (state: StoreState) => void;

export class Store {
  private state: StoreState = {
    stats: null,
    rows: [],
    total: 0,
    nextCursor: null,
    detail: null,
    openActions: [],
    stale: false,
    lastError: null,
  };
  private filters: ListFilters = {};
  private selectedPatient: string | null = null;
  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  getState(): StoreState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<StoreState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  async refresh(): Promise<void> {
    const [stats, page] = await Promise.all([
      this.api.stats(),
      this.api.listPatients(this.filters),
    ]);
    const detail = this.selectedPatient
      ? await this.api.patientDetail(this.selectedPatient)
      : null;
    this.update({
      stats,
      rows: page.rows,
      total: page.total,
      nextCursor: page.next_cursor,
      detail,
      openActions: this.collectOpenActions(detail),
      lastError: null,
    });
  }

  private collectOpenActions(detail: PatientDetail | null): ActionItem[] {
    // The queue is fed from rows with open actions; the detail panel
    // supplies the full items for the selected patient.
    const fromDetail = detail
      ? detail.actions.filter((a) => a.status !== "Resolved")
      : [];
    const known = new Map(this.state.openActions.map((a) => [a.action_id, a]));
    for (const a of fromDetail) known.set(a.action_id, a);
    return [...known.values()].filter((a) => a.status !== "Resolved");
  }

  /** Feed every stream item through here; counts come from the API. */
  async onFeedItem(_item: FeedItem): Promise<void> {
    await this.refresh();
  }

  setConnection(connected: boolean): void {
    this.update({ stale: !connected });
  }

  async setFilters(filters: ListFilters): Promise<void> {
    this.filters = filters;
    await this.refresh();
  }

  async selectPatient(patientId: string | null): Promise<void> {
    this.selectedPatient = patientId;
    await this.refresh();
  }

  /** Optimistic acknowledge: flip locally, roll back if the API refuses. */
  async acknowledge(actionId: string): Promise<void> {
    const before = this.state.openActions;
    this.update({
      openActions: before.map((a) =>
        a.action_id === actionId ? { ...a, status: "Acknowledged" } : a,
      ),
    });
    try {
      await this.api.acknowledge(actionId);
      await this.refresh();
    } catch (err) {
      this.update({ openActions: before, lastError: String(err) });
      throw err;
    }
  }

  async resolve(actionId: string, kind: string, note: string): Promise<void> {
    if (!canResolve(note)) {
      throw new Error("a resolution note is required");
    }
    await this.api.resolve(actionId, kind, note);
    await this.refresh();
  }
}

/** Client-side mirror of the server invariant: resolving needs a note. */
export function canResolve(note: string): boolean {
  return note.trim().length > 0;
}
