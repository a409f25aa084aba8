// Session orchestration shared by the browser views and the scripted
// tests: questionnaire -> per-phrase record/upload -> report. Holds no DOM
// references; views subscribe to the state it mutates.

import { ApiClient, ApiError, Phrase, SessionReport } from "./api.js";
import {
  PredictionRow,
  Questionnaire,
  SessionState,
} from "./state.js";
import { encodeWavPcm16, needsTrim, trimToLimit } from "./wav.js";

export interface DraftStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export interface TakeInfo {
  durationS: number;
  overLimit: boolean;
}

export interface CategoryRow {
  name: string;
  count: number;
  meanProbability: number;
}

export interface ReportView {
  raw: SessionReport;
  exportText: string;
  answered: number;
  categories: CategoryRow[];
  noIndications: boolean;
}

export interface UploadOutcome {
  ok: string[];
  failed: string[];
}

const DRAFT_KEY = "screening-draft";

interface Draft {
  sessionId: string;
  questionnaire: Questionnaire | null;
  currentIndex: number;
}

export class SessionController {
  state: SessionState = new SessionState([]);
  phraseTable: Phrase[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly storage: DraftStorage,
  ) {}

  async loadPhrases(): Promise<Phrase[]> {
    this.phraseTable = await this.api.phrases();
    this.state = new SessionState(this.phraseTable.map((p) => p.phrase_id));
    return this.phraseTable;
  }

  async start(questionnaire: Questionnaire): Promise<string> {
    const sessionId = await this.api.createSession(questionnaire);
    this.state.sessionId = sessionId;
    this.state.questionnaire = questionnaire;
    this.saveDraft();
    return sessionId;
  }

  recordTake(
    phraseId: string,
    samples: Float32Array,
    rateHz: number,
    opts: { trim?: boolean } = {},
  ): TakeInfo {
    let take = samples;
    const overLimit = needsTrim(take, rateHz);
    if (overLimit && opts.trim) {
      take = trimToLimit(take, rateHz);
    }
    this.state.advance(phraseId, "Recorded", {
      wav: encodeWavPcm16(take, rateHz),
    });
    return {
      durationS: take.length / rateHz,
      overLimit: needsTrim(take, rateHz),
    };
  }

  async uploadPhrase(phraseId: string): Promise<PredictionRow> {
    const entry = this.state.get(phraseId);
    if (!entry.wav) {
      throw new Error(`phrase ${phraseId} has no recorded take`);
    }
    const wav = entry.wav;
    this.state.advance(phraseId, "Uploaded");
    try {
      const row = await this.api.uploadResponse(this.state.sessionId, phraseId, wav);
      this.state.advance(phraseId, "Predicted", { prediction: row });
      return row;
    } catch (err) {
      const reason = err instanceof ApiError ? String(err.detail) : String(err);
      this.state.advance(phraseId, "Error", { reason });
      throw err;
    }
  }

  // Sequential upload of every recorded take; one failure never blocks the
  // others, and each failed phrase stays individually retryable.
  async uploadAll(onProgress?: (phraseId: string, done: number, total: number) => void): Promise<UploadOutcome> {
    const ready = this.state.phraseIds.filter(
      (id) => this.state.get(id).status === "Recorded",
    );
    const outcome: UploadOutcome = { ok: [], failed: [] };
    let done = 0;
    for (const phraseId of ready) {
      try {
        await this.uploadPhrase(phraseId);
        outcome.ok.push(phraseId);
      } catch {
        outcome.failed.push(phraseId);
      }
      done += 1;
      onProgress?.(phraseId, done, ready.length);
    }
    return outcome;
  }

  async reportView(): Promise<ReportView> {
    const { doc, text } = await this.api.report(this.state.sessionId);
    const categories = Object.entries(doc.categories).map(([name, agg]) => ({
      name,
      count: agg.count,
      meanProbability: agg.mean_probability,
    }));
    const flagged = categories.filter(
      (c) => c.name !== "correct" && c.count > 0,
    );
    return {
      raw: doc,
      exportText: text,
      answered: doc.answered,
      categories,
      noIndications: flagged.length === 0,
    };
  }

  saveDraft(): void {
    const draft: Draft = {
      sessionId: this.state.sessionId,
      questionnaire: this.state.questionnaire,
      currentIndex: this.state.currentIndex,
    };
    this.storage.setItem(DRAFT_KEY, JSON.stringify(draft));
  }

  clearDraft(): void {
    this.storage.removeItem(DRAFT_KEY);
  }

  // Refresh recovery: local draft supplies the session identity, the server
  // supplies every stored prediction. Unuploaded takes do not survive.
  async restore(): Promise<boolean> {
    const text = this.storage.getItem(DRAFT_KEY);
    if (!text) {
      return false;
    }
    const draft = JSON.parse(text) as Draft;
    await this.loadPhrases();
    this.state.sessionId = draft.sessionId;
    this.state.questionnaire = draft.questionnaire;
    if (draft.sessionId) {
      const { doc } = await this.api.report(draft.sessionId);
      for (const row of doc.phrases) {
        this.state.seedPredicted(row);
      }
    }
    if (this.state.phrases.size > 0) {
      this.state.setIndex(Math.min(draft.currentIndex, this.state.phrases.size - 1));
    }
    return true;
  }
}
