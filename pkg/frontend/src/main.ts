/** Entry point: annotator token form, then route by qualification status. */

import { ApiClient, ApiError } from "./api.js";
import { HtmlAudioPlayer } from "./playback.js";
import { AbTestScreen, ProgressScreen, RatingScreen } from "./screens.js";

const TOKEN_KEY = "emobench-annotator-id";

async function route(root: HTMLElement, api: ApiClient, annotatorId: string): Promise<void> {
  const player = new HtmlAudioPlayer();
  try {
    await api.nextChunk(annotatorId);
    await new RatingScreen(root, api, annotatorId, player).load();
  } catch (err) {
    if (err instanceof ApiError && err.status === 403) {
      await new AbTestScreen(root, api, annotatorId, player).load();
    } else {
      throw err;
    }
  }
}

export async function boot(root: HTMLElement, api = new ApiClient()): Promise<void> {
  const nav = document.createElement("nav");
  const progressLink = document.createElement("button");
  progressLink.textContent = "progress dashboard";
  progressLink.addEventListener("click", () => {
    void new ProgressScreen(screenRoot, api).load();
  });
  nav.append(progressLink);

  const screenRoot = document.createElement("main");
  root.append(nav, screenRoot);

  const saved = window.localStorage.getItem(TOKEN_KEY);
  if (saved) {
    await route(screenRoot, api, saved);
    return;
  }
  const form = document.createElement("form");
  const input = document.createElement("input");
  input.setAttribute("aria-label", "annotator token");
  input.placeholder = "annotator token";
  const go = document.createElement("button");
  go.type = "submit";
  go.textContent = "start session";
  form.append(input, go);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const token = input.value.trim();
    if (!token) return;
    window.localStorage.setItem(TOKEN_KEY, token);
    form.remove();
    void route(screenRoot, api, token);
  });
  screenRoot.append(form);
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void boot(document.getElementById("app") as HTMLElement);
}
