// Per-phrase screening state machine. Every runtime status change goes
// through advance(), which enforces the declared edges and records the
// step, so tests can audit that no undeclared transition ever happened.

export type PhraseStatus =
  | "Pending"
  | "Recorded"
  | "Uploaded"
  | "Predicted"
  | "Error";

export interface PredictionRow {
  phrase_id: string;
  audio_received: boolean;
  probabilities: Record<string, number>;
  label: string;
  latency_ms: number;
}

export interface Questionnaire {
  age: number;
  sex: string;
  vocal_organs_normal: boolean;
  consent: boolean;
  donate?: boolean;
}

export interface PhraseState {
  status: PhraseStatus;
  wav?: Uint8Array;
  prediction?: PredictionRow;
  reason?: string;
}

export interface TransitionRecord {
  phraseId: string;
  from: PhraseStatus;
  to: PhraseStatus;
}

// Forward flow plus: re-record returns to Recorded from anywhere, and any
// state may fail into Error. Error recovers only by re-recording.
export const TRANSITIONS: Record<PhraseStatus, readonly PhraseStatus[]> = {
  Pending: ["Recorded", "Error"],
  Recorded: ["Recorded", "Uploaded", "Error"],
  Uploaded: ["Recorded", "Predicted", "Error"],
  Predicted: ["Recorded", "Error"],
  Error: ["Recorded", "Error"],
};

export class TransitionError extends Error {
  constructor(from: PhraseStatus, to: PhraseStatus) {
    super(`undeclared transition ${from} -> ${to}`);
    this.name = "TransitionError";
  }
}

export function assertTransition(from: PhraseStatus, to: PhraseStatus): void {
  if (!TRANSITIONS[from].includes(to)) {
    throw new TransitionError(from, to);
  }
}

export class SessionState {
  sessionId = "";
  questionnaire: Questionnaire | null = null;
  currentIndex = 0;
  readonly phrases = new Map<string, PhraseState>();
  readonly audit: TransitionRecord[] = [];

  constructor(phraseIds: readonly string[]) {
    for (const id of phraseIds) {
      this.phrases.set(id, { status: "Pending" });
    }
  }

  get phraseIds(): string[] {
    return [...this.phrases.keys()];
  }

  get(phraseId: string): PhraseState {
    const entry = this.phrases.get(phraseId);
    if (!entry) {
      throw new Error(`unknown phrase ${phraseId}`);
    }
    return entry;
  }

  advance(phraseId: string, to: PhraseStatus, patch: Partial<PhraseState> = {}): void {
    const entry = this.get(phraseId);
    assertTransition(entry.status, to);
    this.audit.push({ phraseId, from: entry.status, to });
    entry.status = to;
    Object.assign(entry, patch);
    if (to === "Recorded") {
      entry.prediction = undefined;
      entry.reason = undefined;
    }
  }

  // Initial state from persisted server rows; not a runtime transition.
  seedPredicted(row: PredictionRow): void {
    const entry = this.get(row.phrase_id);
    entry.status = "Predicted";
    entry.prediction = row;
  }

  counts(): Record<PhraseStatus, number> {
    const out: Record<PhraseStatus, number> = {
      Pending: 0, Recorded: 0, Uploaded: 0, Predicted: 0, Error: 0,
    };
    for (const entry of this.phrases.values()) {
      out[entry.status] += 1;
    }
    return out;
  }

  allPredicted(): boolean {
    return this.counts().Predicted === this.phrases.size;
  }

  setIndex(index: number): void {
    if (index < 0 || index >= this.phrases.size) {
      throw new RangeError(`phrase index ${index} out of range`);
    }
    this.currentIndex = index;
  }
}
