import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiRequestError } from "../src/api.js";
import { jsonResponse, stats } from "./helpers.js";

describe("ApiClient", () => {
  it("queries /patients with the given filters only", async () => {
    const fetchFn = vi.fn(async () =>
      jsonResponse({ rows: [], total: 0, next_cursor: null }),
    );
    const api = new ApiClient("http://cc", fetchFn as unknown as typeof fetch);
    await api.listPatients({ category: "Red", search: "ext-1" });
    const url = fetchFn.mock.calls[0][0] as string;
    expect(url).toBe("http://cc/patients?category=Red&search=ext-1");
  });

  it("omits the query string with no filters", async () => {
    const fetchFn = vi.fn(async () =>
      jsonResponse({ rows: [], total: 0, next_cursor: null }),
    );
    const api = new ApiClient("", fetchFn as unknown as typeof fetch);
    await api.listPatients();
    expect(fetchFn.mock.calls[0][0]).toBe("/patients");
  });

  it("parses /stats", async () => {
    const fetchFn = vi.fn(async () => jsonResponse(stats({ overdue: 3 })));
    const api = new ApiClient("", fetchFn as unknown as typeof fetch);
    expect((await api.stats()).overdue).toBe(3);
  });

  it("posts documented transitions to /actions/{id}", async () => {
    const fetchFn = vi.fn(async () => jsonResponse({ status: "Acknowledged" }));
    const api = new ApiClient("", fetchFn as unknown as typeof fetch);
    await api.acknowledge("A000001");
    await api.resolve("A000001", "Call", "called, fine");
    const [, ackInit] = fetchFn.mock.calls[0];
    const [, resolveInit] = fetchFn.mock.calls[1];
    expect(JSON.parse((ackInit as RequestInit).body as string)).toEqual({
      transition: "acknowledge",
    });
    expect(JSON.parse((resolveInit as RequestInit).body as string)).toEqual({
      transition: "resolve",
      kind: "Call",
      note: "called, fine",
    });
  });

  it("surfaces the error envelope", async () => {
    const fetchFn = vi.fn(async () =>
      jsonResponse({ code: "illegal_transition", message: "nope" }, 409),
    );
    const api = new ApiClient("", fetchFn as unknown as typeof fetch);
    const err = await api.acknowledge("A000001").catch((e) => e);
    expect(err).toBeInstanceOf(ApiRequestError);
    expect(err.status).toBe(409);
    expect(err.code).toBe("illegal_transition");
    expect(err.message).toBe("nope");
  });

  it("copes with non-JSON error bodies", async () => {
    const fetchFn = vi.fn(async () => new Response("boom", { status: 502 }));
    const api = new ApiClient("", fetchFn as unknown as typeof fetch);
    const err = await api.stats().catch((e) => e);
    expect(err.code).toBe("http_error");
    expect(err.status).toBe(502);
  });
});
