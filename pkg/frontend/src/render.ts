/** HTML renderers. Pure string builders so they test without a DOM.
 *
 * The blind screen never receives the model short answer; it only exists in
 * the RevealView passed to the reveal screen, so the renderer cannot leak it
 * by construction.
 */

import {
  ChainView,
  Citation,
  ProgressResponse,
  TaskPayload,
} from "./api.js";
import { Draft, RevealView } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function citationMarks(citations: Citation[]): string {
  return citations
    .map((citation) => {
      const sentences = citation.sentence_ids
        .filter((id) => id !== 0)
        .map((id) => `<S${id}>`)
        .join("");
      return escapeHtml(`[${citation.doc_id}]${sentences}`);
    })
    .join(" ");
}

function renderDocuments(task: TaskPayload): string {
  const docs = task.documents
    .map((doc) => {
      const title = doc.title === null ? `document ${doc.doc_id}` : doc.title;
      const sentences = doc.sentences
        .map((s, i) => `<li value="${i + 1}">${escapeHtml(s)}</li>`)
        .join("");
      return `<article class="document"><h4>[${doc.doc_id}] ${escapeHtml(title)}</h4><ol>${sentences}</ol></article>`;
    })
    .join("");
  return `<details class="documents"><summary>Documents (${task.documents.length})</summary>${docs}</details>`;
}

function renderStatements(task: TaskPayload): string {
  const items = task.statements
    .map(
      (statement) =>
        `<li>${escapeHtml(statement.text)} <span class="cite">${citationMarks(statement.citations)}</span></li>`,
    )
    .join("");
  return `<section class="statements"><h3>Long-form answer</h3><ol>${items}</ol></section>`;
}

function renderPropositions(task: TaskPayload, draft: Draft): string {
  const items = task.propositions
    .map((prop, index) => {
      const checked = draft.necessity[prop.label] ? " checked" : "";
      return (
        `<li><label><input type="checkbox" data-necessity="${escapeHtml(prop.label)}"${checked}>` +
        ` <kbd>${index + 1}</kbd> <b>${escapeHtml(prop.label)}</b>: ${escapeHtml(prop.text)}` +
        ` <span class="cite">${citationMarks(prop.citations)}</span></label></li>`
      );
    })
    .join("");
  const horn = task.horn_expression.map(escapeHtml).join(" ∧ ");
  return (
    `<section class="propositions"><h3>Propositions</h3>` +
    `<p class="horn">${horn}</p><ol>${items}</ol>` +
    `<p class="hint">number keys toggle necessity, Enter submits</p></section>`
  );
}

export function renderTrace(chain: ChainView): string {
  const header = `<h3>Chain trace</h3>`;
  if (chain.trace.length === 0) {
    return `<section class="trace">${header}<p class="empty">no chain constructed</p></section>`;
  }
  const starts = chain.start_candidates.map(escapeHtml).join(", ");
  const items: string[] = [];
  let previous: string | null = null;
  for (const [label, viaKey] of chain.trace) {
    const hop =
      previous === null
        ? `<b>${escapeHtml(label)}</b> start via “${escapeHtml(viaKey)}”`
        : `${escapeHtml(previous)} → <b>${escapeHtml(label)}</b> via “${escapeHtml(viaKey)}”`;
    items.push(`<li>${hop}</li>`);
    previous = label;
  }
  return (
    `<section class="trace">${header}` +
    `<p class="starts">start candidates: ${starts}</p>` +
    `<ol>${items.join("")}</ol></section>`
  );
}

function radio(name: string, value: string, label: string, selected: boolean): string {
  const checked = selected ? " checked" : "";
  return `<label><input type="radio" name="${name}" value="${value}"${checked}> ${label}</label>`;
}

function renderBlindControls(draft: Draft, missing: string[]): string {
  const flag = (field: string) => (missing.includes(field) ? " missing" : "");
  return (
    `<section class="controls">` +
    `<div class="field${flag("annotator_answer")}"><label>Your short answer ` +
    `<input id="answer-input" type="text" value="${escapeHtml(draft.answer)}" ` +
    `placeholder="answer from the evidence alone"></label></div>` +
    `<div class="field${flag("connectivity")}"><span>Do the propositions connect the question to the answer?</span> ` +
    radio("connectivity", "yes", "yes", draft.connectivity === true) +
    radio("connectivity", "no", "no", draft.connectivity === false) +
    `</div>` +
    `<div class="field${flag("transform_accuracy")}"><span>Do the propositions restate the answer faithfully?</span> ` +
    radio("transform", "yes", "yes", draft.transformAccuracy === true) +
    radio("transform", "no", "no", draft.transformAccuracy === false) +
    `</div>` +
    `<button id="submit-button">Submit and reveal</button>` +
    `</section>`
  );
}

function renderRevealPanel(reveal: RevealView): string {
  return (
    `<section class="reveal"><h3>Compare answers</h3><div class="pair">` +
    `<div><h4>Your answer</h4><p>${escapeHtml(reveal.annotatorAnswer)}</p></div>` +
    `<div><h4>Model short answer</h4><p id="model-short-answer">${escapeHtml(reveal.modelShortAnswer)}</p></div>` +
    `</div>` +
    `<div class="equivalence">` +
    `<button id="equivalent-yes">Same answer</button>` +
    `<button id="equivalent-no">Different answer</button>` +
    `<button id="equivalent-skip">Skip</button>` +
    `</div></section>`
  );
}

export interface TaskScreenOptions {
  missing?: string[];
  queued?: number;
}

export function renderTask(
  task: TaskPayload,
  draft: Draft,
  phase: "blind" | "reveal",
  reveal: RevealView | null = null,
  options: TaskScreenOptions = {},
): string {
  const missing = options.missing ?? [];
  const queuedNote =
    options.queued && options.queued > 0
      ? `<p class="queued">${options.queued} submission(s) waiting for the network</p>`
      : "";
  const tail =
    phase === "reveal" && reveal !== null
      ? renderRevealPanel(reveal)
      : renderBlindControls(draft, missing);
  return (
    `<main class="task" data-task-id="${escapeHtml(task.task_id)}">` +
    `<header><h2>${escapeHtml(task.question)}</h2></header>` +
    queuedNote +
    renderDocuments(task) +
    renderStatements(task) +
    renderPropositions(task, draft) +
    renderTrace(task.chain) +
    tail +
    `</main>`
  );
}

export function renderProgress(progress: ProgressResponse): string {
  const names = Object.keys(progress.annotators).sort();
  const rows = names
    .map((name) => {
      const entry = progress.annotators[name];
      const percent =
        progress.total > 0 ? Math.round((entry.completed / progress.total) * 100) : 0;
      return (
        `<div class="annotator-row"><span class="who">${escapeHtml(name)}</span>` +
        `<div class="bar"><div class="fill" style="width: ${percent}%"></div></div>` +
        `<span class="count">${entry.completed} of ${progress.total} (${percent}%)</span></div>`
      );
    })
    .join("");
  return `<section class="progress"><h3>Progress</h3>${rows}</section>`;
}

export function renderError(message: string): string {
  return (
    `<div class="error" role="alert"><p>${escapeHtml(message)}</p>` +
    `<button id="retry-button">Retry</button></div>`
  );
}

export function renderDone(): string {
  return `<main class="done"><h2>All tasks annotated</h2><p>Nothing left in the queue.</p></main>`;
}
