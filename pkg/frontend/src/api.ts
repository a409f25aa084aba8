// Thin typed client over the screening service HTTP API. All network
// access in the app funnels through this module; fetch is injectable so
// tests can run against a stub or a live server alike.

import type { PredictionRow, Questionnaire } from "./state.js";

export interface Phrase {
  phrase_id: string;
  text: string;
  romanization: string;
  translation: string;
}

export interface CategoryAggregate {
  count: number;
  mean_probability: number;
}

export interface SessionReport {
  session_id: string;
  questionnaire: Record<string, unknown>;
  answered: number;
  categories: Record<string, CategoryAggregate>;
  phrases: PredictionRow[];
}

export interface ModelInfo {
  experiment: string;
  fold: number | null;
  classes: string[];
  input_shape: number[];
  parameters: number;
  hash: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: unknown) {
    super(`HTTP ${status}: ${typeof detail === "string" ? detail : JSON.stringify(detail)}`);
    this.name = "ApiError";
  }
}

async function errorDetail(res: Response): Promise<unknown> {
  try {
    const doc = await res.json();
    return (doc as { detail?: unknown }).detail ?? doc;
  } catch {
    return res.statusText;
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(questionnaire: Questionnaire): Promise<string> {
    const res = await this.fetchImpl(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(questionnaire),
    });
    if (res.status !== 201) {
      throw new ApiError(res.status, await errorDetail(res));
    }
    const doc = (await res.json()) as { session_id: string };
    return doc.session_id;
  }

  async phrases(): Promise<Phrase[]> {
    const res = await this.fetchImpl(this.url("/phrases"));
    if (!res.ok) {
      throw new ApiError(res.status, await errorDetail(res));
    }
    return (await res.json()) as Phrase[];
  }

  async uploadResponse(
    sessionId: string,
    phraseId: string,
    wav: Uint8Array,
  ): Promise<PredictionRow> {
    const res = await this.fetchImpl(
      this.url(`/sessions/${sessionId}/responses/${phraseId}`),
      // slice() detaches the payload from any larger backing buffer
      { method: "POST", headers: { "content-type": "audio/wav" }, body: wav.slice().buffer },
    );
    if (!res.ok) {
      throw new ApiError(res.status, await errorDetail(res));
    }
    return (await res.json()) as PredictionRow;
  }

  // Keeps the exact response text so an export can be byte-faithful.
  async report(sessionId: string): Promise<{ doc: SessionReport; text: string }> {
    const res = await this.fetchImpl(this.url(`/sessions/${sessionId}/report`));
    if (!res.ok) {
      throw new ApiError(res.status, await errorDetail(res));
    }
    const text = await res.text();
    return { doc: JSON.parse(text) as SessionReport, text };
  }

  async modelInfo(): Promise<ModelInfo> {
    const res = await this.fetchImpl(this.url("/model"));
    if (!res.ok) {
      throw new ApiError(res.status, await errorDetail(res));
    }
    return (await res.json()) as ModelInfo;
  }
}
