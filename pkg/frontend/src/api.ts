/** Typed client for the annotation-service HTTP API.
 *
 * The UI never computes or mutates labels; every value shown on screen is
 * either entered by the annotator or returned verbatim by these endpoints.
 */

export interface SamScaleMeta {
  min: number;
  max: number;
}

export interface NextChunk {
  done: false;
  chunk_id: string;
  audio_url: string;
  duration: number;
  transcript: string | null;
  position: number;
  total: number;
  sam_scale: SamScaleMeta;
}

export interface SessionDone {
  done: true;
  rated: number;
  total: number;
}

export type SessionItem = NextChunk | SessionDone;

export interface AbItem {
  done: false;
  pair_id: string;
  dimension: string;
  prompt: string;
  a_url: string;
  b_url: string;
  position: number;
  total: number;
}

export interface AbDone {
  done: true;
  scores: Record<string, number> | null;
  status: string;
}

export type AbNext = AbItem | AbDone;

export interface AbSubmitResult {
  ok: boolean;
  done: boolean;
  status?: string;
  scores?: Record<string, number>;
  answered?: number;
  total?: number;
}

export interface RatingSubmitResult {
  ok: boolean;
  rated: number;
  total: number;
}

export interface AnnotatorProgress {
  rated: number;
  total: number;
  qualification: string;
  ab_scores: Record<string, number> | null;
}

export interface Progress {
  annotators: Record<string, AnnotatorProgress>;
  n_chunks: number;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") message = body.error;
    else if (body && body.detail) message = JSON.stringify(body.detail);
  } catch {
    /* non-JSON error body; keep the status line */
  }
  throw new ApiError(message, response.status);
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.base + path);
    await raiseForStatus(response);
    return response.json() as Promise<T>;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    await raiseForStatus(response);
    return response.json() as Promise<T>;
  }

  nextChunk(annotatorId: string): Promise<SessionItem> {
    return this.getJson(`/api/session/${encodeURIComponent(annotatorId)}/next`);
  }

  submitRating(annotatorId: string, chunkId: string,
               valence: number, arousal: number,
               dominance: number): Promise<RatingSubmitResult> {
    return this.postJson("/api/ratings", {
      annotator_id: annotatorId,
      chunk_id: chunkId,
      valence,
      arousal,
      dominance,
    });
  }

  nextAbItem(annotatorId: string): Promise<AbNext> {
    return this.getJson(`/api/abtest/${encodeURIComponent(annotatorId)}/next`);
  }

  submitAbChoice(annotatorId: string, pairId: string,
                 chosen: "a" | "b"): Promise<AbSubmitResult> {
    return this.postJson("/api/abtest/response", {
      annotator_id: annotatorId,
      pair_id: pairId,
      chosen,
    });
  }

  progress(): Promise<Progress> {
    return this.getJson("/api/progress");
  }

  async exportCsv(): Promise<string> {
    const response = await fetch(this.base + "/api/export");
    await raiseForStatus(response);
    return response.text();
  }
}
