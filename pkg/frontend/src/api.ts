/** Thin typed client over the documented command-centre endpoints.
 *
 * The dashboard talks to the service exclusively through this module,
 * so the full API surface the UI depends on is visible in one place.
 */
import type {
  CentreStats,
  ListFilters,
  PatientDetail,
  PatientPage,
} from "./types.js";

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiRequestError";
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let code = "http_error";
      let message = `HTTP ${resp.status}`;
      try {
        const body = (await resp.json()) as { code?: string; message?: string };
        code = body.code ?? code;
        message = body.message ?? message;
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiRequestError(resp.status, code, message);
    }
    return (await resp.json()) as T;
  }

  listPatients(filters: ListFilters = {}): Promise<PatientPage> {
    const params = new URLSearchParams();
    if (filters.category) params.set("category", filters.category);
    if (filters.overdue !== undefined) params.set("overdue", String(filters.overdue));
    if (filters.needs_action !== undefined) {
      params.set("needs_action", String(filters.needs_action));
    }
    if (filters.search) params.set("search", filters.search);
    if (filters.cursor) params.set("cursor", filters.cursor);
    const query = params.toString();
    return this.request<PatientPage>(`/patients${query ? `?${query}` : ""}`);
  }

  patientDetail(patientId: string): Promise<PatientDetail> {
    return this.request<PatientDetail>(
      `/patients/${encodeURIComponent(patientId)}`,
    );
  }

  stats(): Promise<CentreStats> {
    return this.request<CentreStats>("/stats");
  }

  acknowledge(actionId: string): Promise<unknown> {
    return this.request(`/actions/${encodeURIComponent(actionId)}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ transition: "acknowledge" }),
    });
  }

  resolve(actionId: string, kind: string, note: string): Promise<unknown> {
    return this.request(`/actions/${encodeURIComponent(actionId)}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ transition: "resolve", kind, note }),
    });
  }
}
