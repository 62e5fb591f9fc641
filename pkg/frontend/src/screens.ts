/** Screen controllers: A/B qualification, SAM rating, progress dashboard.
 *
 * Each controller renders into a root element and talks to the service
 * only through the ApiClient; failed submissions keep local selections so
 * the annotator can retry without re-entering anything.
 */

import { ApiClient, AbNext, NextChunk, Progress, SessionItem } from "./api.js";
import { Player, PlaybackState } from "./playback.js";
import {
  DIMENSIONS, Dimension, SamFormState, SCALE_ANCHORS, manikinFigures,
  samValueForKey,
} from "./sam.js";

type Attrs = Record<string, string>;

function el(tag: string, attrs: Attrs = {}, text = ""): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function errorBanner(message: string): HTMLElement {
  const banner = el("div", { class: "error-banner", role: "alert" }, message);
  return banner;
}

// ---------------------------------------------------------------------------
// rating screen
// ---------------------------------------------------------------------------

export class RatingScreen {
  item: NextChunk | null = null;
  finished = false;
  form = new SamFormState();
  playback: PlaybackState | null = null;
  error: string | null = null;

  constructor(readonly root: HTMLElement, readonly api: ApiClient,
              readonly annotatorId: string, readonly player: Player) {}

  async load(): Promise<void> {
    const next: SessionItem = await this.api.nextChunk(this.annotatorId);
    this.error = null;
    if (next.done) {
      this.item = null;
      this.finished = true;
    } else {
      this.item = next;
      this.finished = false;
      this.form.clear();
      this.playback = new PlaybackState(next.audio_url);
    }
    this.render();
  }

  get canSubmit(): boolean {
    return this.form.complete && this.playback !== null && this.playback.satisfied;
  }

  async play(): Promise<void> {
    if (!this.playback) return;
    await this.playback.playThrough(this.player);
    this.render();
  }

  select(dimension: Dimension, value: number): void {
    this.form.select(dimension, value);
    this.render();
  }

  async submit(): Promise<void> {
    if (!this.item || !this.canSubmit) return;
    const { valence, arousal, dominance } = this.form.values;
    try {
      await this.api.submitRating(this.annotatorId, this.item.chunk_id,
                                  valence, arousal, dominance);
    } catch (err) {
      // selections stay in place for retry; show the server message verbatim
      this.error = err instanceof Error ? err.message : String(err);
      this.render();
      return;
    }
    await this.load();
  }

  render(): void {
    this.root.textContent = "";
    if (this.finished) {
      const doneBox = el("section", { class: "session-done" });
      doneBox.append(el("h2", {}, "All chunks rated"),
                     el("p", { class: "completion" }, "100% complete"));
      this.root.append(doneBox);
      return;
    }
    if (!this.item) return;

    const header = el("header", {});
    header.append(el("h2", {}, "Rate this chunk"),
                  el("p", { class: "position" },
                     `chunk ${this.item.position + 1} of ${this.item.total}`));
    this.root.append(header);
    if (this.error) this.root.append(errorBanner(this.error));

    const playBtn = el("button", { class: "play", type: "button" },
                       this.playback && this.playback.satisfied
                         ? `replay audio (played ${this.playback.playCount}x)`
                         : "play audio");
    playBtn.addEventListener("click", () => void this.play());
    this.root.append(playBtn);

    if (this.item.transcript) {
      // hidden by default so the text does not bias the acoustic judgment
      const details = el("details", { class: "transcript" });
      details.append(el("summary", {}, "show transcript"),
                     el("p", {}, this.item.transcript));
      this.root.append(details);
    }

    for (const dimension of DIMENSIONS) this.root.append(this.scaleFieldset(dimension));

    const submit = el("button", { class: "submit", type: "button" }, "submit rating");
    if (!this.canSubmit) submit.setAttribute("disabled", "");
    submit.addEventListener("click", () => void this.submit());
    this.root.append(submit);
  }

  private scaleFieldset(dimension: Dimension): HTMLElement {
    const anchors = SCALE_ANCHORS[dimension];
    const box = el("fieldset", { class: "sam-scale", "data-dimension": dimension });
    box.append(el("legend", {}, `${dimension}: ${anchors.low} … ${anchors.high}`));
    const selected = this.form.scales[dimension].selected;
    for (const figure of manikinFigures(dimension)) {
      const btn = el("button", {
        type: "button",
        class: "sam-btn",
        "data-dimension": dimension,
        "data-value": String(figure.value),
        "aria-label": figure.alt,
        "aria-pressed": figure.value === selected ? "true" : "false",
      }, String(figure.value));
      btn.addEventListener("click", () => this.select(dimension, figure.value));
      btn.addEventListener("keydown", (event) => {
        const value = samValueForKey((event as KeyboardEvent).key);
        if (value !== null) this.select(dimension, value);
      });
      box.append(btn);
    }
    return box;
  }
}

// ---------------------------------------------------------------------------
// A/B qualification screen
// ---------------------------------------------------------------------------

export class AbTestScreen {
  item: AbNext | null = null;

  constructor(readonly root: HTMLElement, readonly api: ApiClient,
              readonly annotatorId: string, readonly player: Player) {}

  async load(): Promise<void> {
    this.item = await this.api.nextAbItem(this.annotatorId);
    this.render();
  }

  async playSide(side: "a" | "b"): Promise<void> {
    if (!this.item || this.item.done) return;
    await this.player.play(side === "a" ? this.item.a_url : this.item.b_url);
  }

  async choose(side: "a" | "b"): Promise<void> {
    if (!this.item || this.item.done) return;
    await this.api.submitAbChoice(this.annotatorId, this.item.pair_id, side);
    await this.load();
  }

  render(): void {
    this.root.textContent = "";
    if (!this.item) return;
    if (this.item.done) {
      const box = el("section", { class: "ab-done" });
      box.append(el("h2", {}, "Qualification result"),
                 el("p", { class: "ab-status" }, `status: ${this.item.status}`));
      const list = el("ul", { class: "ab-scores" });
      for (const dimension of DIMENSIONS) {
        const pct = this.item.scores ? this.item.scores[dimension] : undefined;
        const entry = el("li", {});
        entry.append(el("span", {}, `${dimension}: `),
                     el("span", { class: "ab-score", "data-dimension": dimension },
                        pct === undefined ? "–" : `${pct}%`));
        list.append(entry);
      }
      box.append(list);
      this.root.append(box);
      return;
    }

    const header = el("header", {});
    header.append(el("h2", {}, "A/B listening test"),
                  el("p", { class: "position" },
                     `pair ${this.item.position + 1} of ${this.item.total}`),
                  el("p", { class: "prompt" }, this.item.prompt));
    this.root.append(header);

    for (const side of ["a", "b"] as const) {
      const play = el("button", { class: `play-${side}`, type: "button" },
                      `play sample ${side.toUpperCase()}`);
      play.addEventListener("click", () => void this.playSide(side));
      this.root.append(play);
    }
    for (const side of ["a", "b"] as const) {
      const pick = el("button", { class: `choose-${side}`, type: "button" },
                      `choose ${side.toUpperCase()}`);
      pick.addEventListener("click", () => void this.choose(side));
      this.root.append(pick);
    }
  }
}

// ---------------------------------------------------------------------------
// progress dashboard
// ---------------------------------------------------------------------------

export class ProgressScreen {
  constructor(readonly root: HTMLElement, readonly api: ApiClient) {}

  async load(): Promise<void> {
    let progress: Progress;
    try {
      progress = await this.api.progress();
    } catch (err) {
      // no stale data: clear everything and show the failure
      this.root.textContent = "";
      const message = err instanceof Error ? err.message : String(err);
      this.root.append(errorBanner(`service unreachable: ${message}`));
      return;
    }
    this.render(progress);
  }

  render(progress: Progress): void {
    this.root.textContent = "";
    this.root.append(el("h2", {}, "Annotation progress"));
    for (const [annotator, stats] of Object.entries(progress.annotators)) {
      const pct = stats.total > 0
        ? Math.round((100 * stats.rated) / stats.total) : 0;
      const row = el("div", { class: "progress-row", "data-annotator": annotator });
      row.append(el("span", { class: "annotator" }, annotator));
      const track = el("div", { class: "bar-track" });
      const bar = el("div", { class: "bar", style: `width: ${pct}%` }, `${pct}%`);
      track.append(bar);
      row.append(track,
                 el("span", { class: "counts" }, `${stats.rated} / ${stats.total}`),
                 el("span", { class: "qualification" }, stats.qualification));
      this.root.append(row);
    }
  }
}
