// DOM rendering for the four screens: questionnaire, recording, upload
// progress, report. All state lives in the controller; this module only
// paints it and forwards user intent.

import { ApiError, Phrase } from "./api.js";
import { SessionController } from "./controller.js";
import { Recorder, Take } from "./recorder.js";
import { Questionnaire } from "./state.js";
import { MAX_TAKE_SECONDS, durationSeconds } from "./wav.js";

type Screen = "questionnaire" | "recording" | "progress" | "report";

const EDUCATION_LINKS: ReadonlyArray<{ label: string; href: string }> = [
  { label: "What is a speech sound disorder?", href: "#education-ssd" },
  { label: "How categories of pronunciation errors differ", href: "#education-categories" },
  { label: "When to consult a speech-language pathologist", href: "#education-slp" },
  { label: "Practicing target sounds at home", href: "#education-practice" },
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export class App {
  private root: HTMLElement;
  private screen: Screen = "questionnaire";
  private take: Take | null = null;
  private recording = false;
  private banner = "";

  constructor(
    root: HTMLElement,
    private readonly controller: SessionController,
    private readonly recorder: Recorder,
  ) {
    this.root = root;
  }

  async boot(): Promise<void> {
    try {
      const restored = await this.controller.restore();
      if (restored && this.controller.state.sessionId) {
        this.screen = "recording";
      } else if (!restored) {
        await this.controller.loadPhrases();
      }
    } catch {
      this.banner = "Could not reach the screening service. Retry when it is back.";
    }
    this.render();
  }

  private render(): void {
    this.root.replaceChildren();
    if (this.banner) {
      const retry = el("button", { class: "link" }, "Retry");
      retry.onclick = () => {
        this.banner = "";
        void this.boot();
      };
      this.root.append(el("div", { class: "banner" }, this.banner, retry));
    }
    switch (this.screen) {
      case "questionnaire":
        this.renderQuestionnaire();
        break;
      case "recording":
        this.renderRecording();
        break;
      case "progress":
        this.renderProgress();
        break;
      case "report":
        void this.renderReport();
        break;
    }
  }

  // -- screen 1: questionnaire ------------------------------------------

  private renderQuestionnaire(): void {
    const form = el("form", { class: "card" });
    const errors = el("ul", { class: "field-errors" });
    const age = el("input", { type: "number", min: "0", name: "age", required: "" });
    const sex = el("select", { name: "sex" },
      el("option", { value: "F" }, "Female"),
      el("option", { value: "M" }, "Male"));
    const organs = el("input", { type: "checkbox", name: "vocal_organs_normal" });
    const consent = el("input", { type: "checkbox", name: "consent" });
    const donate = el("input", { type: "checkbox", name: "donate" });
    const start = el("button", { type: "submit", disabled: "" }, "Start screening");
    consent.onchange = () => {
      if (consent.checked) {
        start.removeAttribute("disabled");
      } else {
        start.setAttribute("disabled", "");
      }
    };
    form.append(
      el("h2", {}, "Background questionnaire"),
      el("label", {}, "Child's age ", age),
      el("label", {}, "Sex ", sex),
      el("label", {}, organs, " Vocal organs examined normal"),
      el("label", {}, consent, " I consent to the recording and analysis"),
      el("label", {}, donate, " Donate recordings for research (optional)"),
      errors,
      start,
    );
    form.onsubmit = (event) => {
      event.preventDefault();
      const answers: Questionnaire = {
        age: Number(age.value),
        sex: sex.value,
        vocal_organs_normal: organs.checked,
        consent: consent.checked,
        donate: donate.checked,
      };
      void this.controller
        .start(answers)
        .then(() => {
          this.screen = "recording";
          this.render();
        })
        .catch((err) => {
          errors.replaceChildren();
          if (err instanceof ApiError && Array.isArray(err.detail)) {
            for (const problem of err.detail) {
              errors.append(el("li", {}, String(problem)));
            }
          } else {
            this.banner = "Could not reach the screening service. Retry when it is back.";
            this.render();
          }
        });
    };
    this.root.append(form);
  }

  // -- screen 2: guided recording ---------------------------------------

  private currentPhrase(): Phrase {
    return this.controller.phraseTable[this.controller.state.currentIndex];
  }

  private renderRecording(): void {
    const state = this.controller.state;
    const phrase = this.currentPhrase();
    const entry = state.get(phrase.phrase_id);
    const card = el("div", { class: "card" });
    card.append(
      el("h2", {}, `Phrase ${state.currentIndex + 1} of ${state.phrases.size}`),
      el("p", { class: "phrase-text" }, phrase.text),
      el("p", { class: "phrase-roman" }, phrase.romanization),
      el("p", { class: "phrase-gloss" }, phrase.translation),
      el("p", { class: `status status-${entry.status}` }, entry.status),
    );
    if (entry.reason) {
      card.append(el("p", { class: "error-reason" }, entry.reason));
    }

    const recordBtn = el("button", {}, this.recording ? "Stop" : entry.wav ? "Re-record" : "Record");
    recordBtn.onclick = () => void this.toggleRecording();
    card.append(recordBtn);

    if (this.take && needsTrimView(this.take)) {
      const warn = el("p", { class: "warning" },
        `Take is ${durationSeconds(this.take.samples, this.take.sampleRateHz).toFixed(1)} s; ` +
        `the analysis accepts under ${MAX_TAKE_SECONDS.toFixed(0)} s. `);
      const trimBtn = el("button", {}, "Trim to 3 s");
      trimBtn.onclick = () => {
        if (this.take) {
          this.controller.recordTake(phrase.phrase_id, this.take.samples,
            this.take.sampleRateHz, { trim: true });
          this.take = null;
          this.render();
        }
      };
      warn.append(trimBtn);
      card.append(warn);
    }

    if (entry.wav) {
      const blob = new Blob([entry.wav.buffer as ArrayBuffer], { type: "audio/wav" });
      card.append(el("audio", { controls: "", src: URL.createObjectURL(blob) }));
    }

    const nav = el("div", { class: "nav" });
    const prev = el("button", {}, "Previous");
    const next = el("button", {}, "Next");
    prev.onclick = () => this.step(-1);
    next.onclick = () => this.step(1);
    const toUpload = el("button", {}, "Go to upload");
    toUpload.onclick = () => {
      this.screen = "progress";
      this.render();
    };
    nav.append(prev, next, toUpload);
    card.append(nav);
    this.root.append(card);
  }

  private step(delta: number): void {
    const state = this.controller.state;
    const next = state.currentIndex + delta;
    if (next >= 0 && next < state.phrases.size) {
      state.setIndex(next);
      this.controller.saveDraft();
    }
    this.take = null;
    this.render();
  }

  private async toggleRecording(): Promise<void> {
    const phrase = this.currentPhrase();
    if (!this.recording) {
      try {
        await this.recorder.start();
        this.recording = true;
      } catch {
        this.controller.state.advance(phrase.phrase_id, "Error", {
          reason: "Microphone permission denied. Allow access and retry.",
        });
      }
      this.render();
      return;
    }
    const take = await this.recorder.stop();
    this.recording = false;
    this.take = take;
    if (!needsTrimView(take)) {
      this.controller.recordTake(phrase.phrase_id, take.samples, take.sampleRateHz);
      this.take = null;
    }
    this.render();
  }

  // -- screen 3: upload progress ----------------------------------------

  private renderProgress(): void {
    const state = this.controller.state;
    const card = el("div", { class: "card" });
    card.append(el("h2", {}, "Analysis"));
    const list = el("ul", { class: "progress-list" });
    for (const phrase of this.controller.phraseTable) {
      const entry = state.get(phrase.phrase_id);
      const item = el("li", {},
        el("span", { class: "pid" }, phrase.phrase_id),
        el("span", { class: `status status-${entry.status}` }, entry.status),
        el("span", { class: "label" }, entry.prediction ? entry.prediction.label : ""));
      if (entry.status === "Error") {
        item.append(el("span", { class: "error-reason" }, entry.reason ?? ""));
        if (entry.wav) {
          const retry = el("button", { class: "link" }, "Retry");
          retry.onclick = () => {
            // a stored take re-enters the flow exactly like a fresh one
            state.advance(phrase.phrase_id, "Recorded", { wav: entry.wav });
            void this.controller.uploadPhrase(phrase.phrase_id)
              .catch(() => undefined)
              .then(() => this.render());
          };
          item.append(retry);
        }
      }
      list.append(item);
    }
    card.append(list);

    const uploadBtn = el("button", {}, "Upload recorded phrases");
    uploadBtn.onclick = () => {
      uploadBtn.setAttribute("disabled", "");
      void this.controller
        .uploadAll(() => this.render())
        .then(() => this.render());
    };
    const reportBtn = el("button", {}, "View report");
    if (!state.allPredicted()) {
      reportBtn.setAttribute("disabled", "");
    }
    reportBtn.onclick = () => {
      this.screen = "report";
      this.render();
    };
    const back = el("button", {}, "Back to recording");
    back.onclick = () => {
      this.screen = "recording";
      this.render();
    };
    card.append(uploadBtn, reportBtn, back);
    this.root.append(card);
  }

  // -- screen 4: report --------------------------------------------------

  private async renderReport(): Promise<void> {
    const card = el("div", { class: "card" });
    card.append(el("h2", {}, "Screening report"));
    try {
      const view = await this.controller.reportView();
      if (view.noIndications) {
        card.append(el("p", { class: "all-clear" },
          "No indications: no phrase was flagged in any error category."));
      }
      const table = el("table", { class: "report" },
        el("thead", {}, el("tr", {},
          el("th", {}, "Category"),
          el("th", {}, "Flagged phrases"),
          el("th", {}, "Mean probability"))));
      const body = el("tbody", {});
      for (const row of view.categories) {
        body.append(el("tr", {},
          el("td", {}, row.name),
          el("td", {}, String(row.count)),
          el("td", {}, row.meanProbability.toFixed(3))));
      }
      table.append(body);
      card.append(table, el("p", {}, `Answered phrases: ${view.answered}`));

      const detail = el("details", {}, el("summary", {}, "Per-phrase results"));
      const rows = el("ul", { class: "drilldown" });
      for (const row of view.raw.phrases) {
        rows.append(el("li", {},
          `${row.phrase_id}: ${row.label} ` +
          `(${(Math.max(...Object.values(row.probabilities)) * 100).toFixed(1)}%)`));
      }
      detail.append(rows);
      card.append(detail);

      const links = el("div", { class: "education" },
        el("h3", {}, "Learn more"));
      for (const link of EDUCATION_LINKS) {
        links.append(el("a", { href: link.href }, link.label));
      }
      card.append(links);

      const printBtn = el("button", {}, "Print");
      printBtn.onclick = () => window.print();
      const exportBtn = el("button", {}, "Export JSON");
      exportBtn.onclick = () => {
        const blob = new Blob([view.exportText], { type: "application/json" });
        const anchor = el("a", {
          href: URL.createObjectURL(blob),
          download: `report-${view.raw.session_id}.json`,
        });
        anchor.click();
      };
      card.append(printBtn, exportBtn);
    } catch {
      card.append(el("p", { class: "error-reason" }, "Report is not available yet."));
    }
    this.root.append(card);
  }
}

function needsTrimView(take: Take): boolean {
  return durationSeconds(take.samples, take.sampleRateHz) >= MAX_TAKE_SECONDS;
}
