import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("deep-freezes responses so no component can mutate them", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () =>
        jsonResponse(200, {
          answers: [{ text: "x", char_start: 0, char_end: 1, score: 1.0 }],
          model_id: "m",
          latency_ms: 2.0,
          context: "xy",
        }),
      ),
    );
    const response = await new ApiClient("http://svc").answer({
      question: "?",
      context: "xy",
    });
    expect(Object.isFrozen(response)).toBe(true);
    expect(Object.isFrozen(response.answers)).toBe(true);
    expect(Object.isFrozen(response.answers[0])).toBe(true);
    // modules are strict mode: writes to frozen objects throw
    expect(() => {
      (response as { model_id: string }).model_id = "tampered";
    }).toThrow(TypeError);
  });

  it("surfaces the service's error detail with the status code", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => jsonResponse(404, { error: "unknown context_id 'z'" })),
    );
    const client = new ApiClient("http://svc");
    await expect(client.answer({ question: "?", context_id: "z" })).rejects.toMatchObject({
      name: "ApiError",
      status: 404,
      message: "unknown context_id 'z'",
    });
  });

  it("falls back to the HTTP status when the error body is not JSON", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => new Response("boom", { status: 502 })));
    const client = new ApiClient("http://svc");
    const failure = await client.contexts().catch((e: unknown) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).message).toContain("502");
  });
});
