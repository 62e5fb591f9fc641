/** Audio playback with a mandatory at-least-one-playback gate.
 *
 * A rating cannot be submitted for a chunk the annotator has not listened
 * to at least once; replays are unlimited.
 */

export interface Player {
  /** Resolves when playback of the given URL has started. */
  play(url: string): Promise<void>;
}

/** Real browser player; tests substitute a fake. */
export class HtmlAudioPlayer implements Player {
  async play(url: string): Promise<void> {
    const audio = new Audio(url);
    await audio.play();
  }
}

export class PlaybackState {
  playCount = 0;

  constructor(readonly url: string) {}

  async playThrough(player: Player): Promise<void> {
    await player.play(this.url);
    this.playCount += 1;
  }

  /** The playback gate: ratings require at least one listen. */
  get satisfied(): boolean {
    return this.playCount >= 1;
  }
}
