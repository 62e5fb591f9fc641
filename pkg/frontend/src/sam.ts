/** Self-Assessment-Manikin widget state: three 9-point pictorial scales.
 *
 * Displayed values map 1:1 onto wire values; no rescaling happens in the
 * client.  Submission stays disabled until every dimension has a selection.
 */

export const DIMENSIONS = ["valence", "arousal", "dominance"] as const;
export type Dimension = (typeof DIMENSIONS)[number];

export const SAM_MIN = 1;
export const SAM_MAX = 9;

/** Anchor captions shown at the scale ends. */
export const SCALE_ANCHORS: Record<Dimension, { low: string; high: string }> = {
  valence: { low: "very negative", high: "very positive" },
  arousal: { low: "very calm", high: "very excited" },
  dominance: { low: "very weak", high: "very strong" },
};

export interface ManikinFigure {
  value: number;
  /** short textual stand-in for the manikin drawing, used as alt text */
  alt: string;
}

/** Nine manikin figures per dimension, low anchor to high anchor. */
export function manikinFigures(dimension: Dimension): ManikinFigure[] {
  const anchors = SCALE_ANCHORS[dimension];
  const figures: ManikinFigure[] = [];
  for (let value = SAM_MIN; value <= SAM_MAX; value++) {
    const side = value < 5 ? anchors.low : value > 5 ? anchors.high : "neutral";
    figures.push({ value, alt: `${dimension} ${value} of 9 (${side})` });
  }
  return figures;
}

export class SamScaleState {
  selected: number | null = null;

  constructor(readonly dimension: Dimension) {}

  select(value: number): void {
    if (!Number.isInteger(value) || value < SAM_MIN || value > SAM_MAX) {
      throw new RangeError(`SAM value ${value} outside ${SAM_MIN}..${SAM_MAX}`);
    }
    this.selected = value;
  }

  clear(): void {
    this.selected = null;
  }
}

export class SamFormState {
  readonly scales: Record<Dimension, SamScaleState>;

  constructor() {
    this.scales = {
      valence: new SamScaleState("valence"),
      arousal: new SamScaleState("arousal"),
      dominance: new SamScaleState("dominance"),
    };
  }

  select(dimension: Dimension, value: number): void {
    this.scales[dimension].select(value);
  }

  /** True once all three dimensions have a selection. */
  get complete(): boolean {
    return DIMENSIONS.every((d) => this.scales[d].selected !== null);
  }

  get values(): { valence: number; arousal: number; dominance: number } {
    if (!this.complete) throw new Error("SAM form incomplete");
    return {
      valence: this.scales.valence.selected as number,
      arousal: this.scales.arousal.selected as number,
      dominance: this.scales.dominance.selected as number,
    };
  }

  clear(): void {
    for (const d of DIMENSIONS) this.scales[d].clear();
  }
}

/** Digit keys 1..9 select on the scale that currently has keyboard focus. */
export function samValueForKey(key: string): number | null {
  if (key.length === 1 && key >= "1" && key <= "9") return Number(key);
  return null;
}
