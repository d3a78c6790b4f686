/** Browser bootstrap: wires the session to the DOM and the keyboard. */

import { ApiClient } from "./api.js";
import { AnnotationSession } from "./state.js";
import { renderDone, renderError, renderProgress, renderTask } from "./render.js";

const app = document.getElementById("app");
if (!app) throw new Error("missing #app mount point");

function resolveAnnotatorId(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("annotator");
  if (fromQuery) {
    localStorage.setItem("annotator", fromQuery);
    return fromQuery;
  }
  const saved = localStorage.getItem("annotator");
  if (saved) return saved;
  const typed = window.prompt("Annotator id:")?.trim() || `anon-${Date.now()}`;
  localStorage.setItem("annotator", typed);
  return typed;
}

const api = new ApiClient("", (url, init) => fetch(url, init));
const session = new AnnotationSession(api, resolveAnnotatorId(), localStorage);

let lastMissing: string[] = [];

async function redraw(): Promise<void> {
  if (session.phase === "done" || !session.task || !session.draft) {
    let progressHtml = "";
    try {
      progressHtml = renderProgress(await api.progress());
    } catch {
      // progress is decoration; the done screen stands alone
    }
    app!.innerHTML = renderDone() + progressHtml;
    return;
  }
  app!.innerHTML = renderTask(session.task, session.draft, session.phase === "reveal" ? "reveal" : "blind", session.reveal, {
    missing: lastMissing,
    queued: session.queuedCount(),
  });
  bindTaskEvents();
}

function bindTaskEvents(): void {
  for (const box of app!.querySelectorAll<HTMLInputElement>("input[data-necessity]")) {
    box.addEventListener("change", () => {
      session.toggleNecessity(box.dataset.necessity!);
    });
  }
  const answer = app!.querySelector<HTMLInputElement>("#answer-input");
  answer?.addEventListener("input", () => session.setAnswer(answer.value));
  answer?.addEventListener("keydown", (event) => {
    if (event.key === "Enter") void submit();
  });
  for (const input of app!.querySelectorAll<HTMLInputElement>('input[name="connectivity"]')) {
    input.addEventListener("change", () => session.setConnectivity(input.value === "yes"));
  }
  for (const input of app!.querySelectorAll<HTMLInputElement>('input[name="transform"]')) {
    input.addEventListener("change", () => session.setTransformAccuracy(input.value === "yes"));
  }
  app!.querySelector("#submit-button")?.addEventListener("click", () => void submit());
  app!.querySelector("#equivalent-yes")?.addEventListener("click", () => void finish(true));
  app!.querySelector("#equivalent-no")?.addEventListener("click", () => void finish(false));
  app!.querySelector("#equivalent-skip")?.addEventListener("click", () => {
    void session.skipEquivalence().then(redraw).catch(showError);
  });
}

async function submit(): Promise<void> {
  try {
    const outcome = await session.submit();
    lastMissing = "invalid" in outcome ? outcome.invalid : [];
    await redraw();
  } catch (error) {
    showError(error);
  }
}

async function finish(confirmed: boolean): Promise<void> {
  try {
    await session.confirmEquivalence(confirmed);
    lastMissing = [];
    await redraw();
  } catch (error) {
    showError(error);
  }
}

function showError(error: unknown): void {
  const message = error instanceof Error ? error.message : String(error);
  app!.innerHTML = renderError(message);
  app!.querySelector("#retry-button")?.addEventListener("click", () => void boot());
}

function isTypingTarget(target: EventTarget | null): boolean {
  return target instanceof HTMLInputElement || target instanceof HTMLTextAreaElement;
}

document.addEventListener("keydown", (event) => {
  if (session.phase !== "blind" || isTypingTarget(event.target)) return;
  if (event.key >= "1" && event.key <= "9") {
    session.toggleNecessityAt(Number(event.key) - 1);
    void redraw();
  } else if (event.key === "Enter") {
    void submit();
  }
});

window.addEventListener("online", () => {
  void session.flushQueue().then(redraw).catch(showError);
});

async function boot(): Promise<void> {
  try {
    await session.flushQueue();
    await session.loadNext();
    lastMissing = [];
    await redraw();
  } catch (error) {
    showError(error);
  }
}

void boot();
