import type { AnswerRequest, AnswerResponse, ContextPreview } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

function deepFreeze<T>(value: T): T {
  if (value !== null && typeof value === "object") {
    for (const key of Object.keys(value as object)) {
      deepFreeze((value as Record<string, unknown>)[key]);
    }
    Object.freeze(value);
  }
  return value;
}

async function parseError(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string };
    if (body && typeof body.error === "string") {
      return body.error;
    }
  } catch {
    // fall through to the status line
  }
  return `service responded with HTTP ${response.status}`;
}

/** Thin typed client. Responses are deep-frozen: the console never mutates them. */
export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`);
    if (!response.ok) {
      throw new ApiError(response.status, await parseError(response));
    }
    return deepFreeze((await response.json()) as T);
  }

  async health(): Promise<{ status: string; model_id: string }> {
    return this.get("/health");
  }

  async contexts(): Promise<readonly ContextPreview[]> {
    const body = await this.get<{ contexts: ContextPreview[] }>("/v1/contexts");
    return body.contexts;
  }

  async answer(request: AnswerRequest): Promise<AnswerResponse> {
    const response = await fetch(`${this.baseUrl}/v1/answer`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await parseError(response));
    }
    return deepFreeze((await response.json()) as AnswerResponse);
  }
}
