/** Annotation session state: one task at a time, blind then reveal.
 *
 * Drafts persist to storage on every edit and are dropped once the server
 * has the record, so a reload never loses work but never resurrects a
 * submitted task either. Submissions carry a per-draft client token; the
 * server treats a repeated token as the same record, which makes double
 * clicks and offline retries safe.
 */

import {
  AnnotationSubmission,
  ApiClient,
  TaskPayload,
  isNetworkError,
} from "./api.js";

export type Phase = "blind" | "reveal" | "done";

export interface Draft {
  necessity: Record<string, boolean>;
  connectivity: boolean | null;
  transformAccuracy: boolean | null;
  answer: string;
  clientToken: string;
}

export interface RevealView {
  modelShortAnswer: string;
  annotatorAnswer: string;
}

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

/** Map-backed StorageLike for tests and non-browser hosts. */
export class MemoryStorage implements StorageLike {
  private readonly entries = new Map<string, string>();

  getItem(key: string): string | null {
    return this.entries.has(key) ? this.entries.get(key)! : null;
  }

  setItem(key: string, value: string): void {
    this.entries.set(key, value);
  }

  removeItem(key: string): void {
    this.entries.delete(key);
  }
}

export function randomToken(): string {
  const uuid = globalThis.crypto?.randomUUID?.();
  if (uuid) return uuid;
  return Math.random().toString(36).slice(2) + Date.now().toString(36);
}

export type SubmitOutcome = { ok: true } | { queued: true } | { invalid: string[] };

interface QueuedSubmission {
  taskId: string;
  body: AnnotationSubmission;
}

export class AnnotationSession {
  task: TaskPayload | null = null;
  draft: Draft | null = null;
  phase: Phase = "blind";
  reveal: RevealView | null = null;
  remaining = 0;

  constructor(
    private readonly api: ApiClient,
    readonly annotatorId: string,
    private readonly storage: StorageLike,
    private readonly newToken: () => string = randomToken,
  ) {}

  private draftKey(taskId: string): string {
    return `draft:${this.annotatorId}:${taskId}`;
  }

  private queueKey(): string {
    return `queue:${this.annotatorId}`;
  }

  async loadNext(): Promise<void> {
    const response = await this.api.nextTask(this.annotatorId);
    this.reveal = null;
    if (!response.task) {
      this.task = null;
      this.draft = null;
      this.remaining = 0;
      this.phase = "done";
      return;
    }
    this.task = response.task;
    this.remaining = response.remaining;
    this.phase = "blind";
    this.draft = this.restoreDraft(response.task);
  }

  private freshDraft(task: TaskPayload): Draft {
    const necessity: Record<string, boolean> = {};
    for (const prop of task.propositions) necessity[prop.label] = false;
    return {
      necessity,
      connectivity: null,
      transformAccuracy: null,
      answer: "",
      clientToken: this.newToken(),
    };
  }

  private restoreDraft(task: TaskPayload): Draft {
    const raw = this.storage.getItem(this.draftKey(task.task_id));
    if (raw !== null) {
      try {
        const saved = JSON.parse(raw) as Partial<Draft>;
        return { ...this.freshDraft(task), ...saved };
      } catch {
        // fall through to a fresh draft on corrupt storage
      }
    }
    return this.freshDraft(task);
  }

  private persistDraft(): void {
    if (this.task && this.draft) {
      this.storage.setItem(this.draftKey(this.task.task_id), JSON.stringify(this.draft));
    }
  }

  toggleNecessity(label: string): void {
    if (!this.draft || !(label in this.draft.necessity)) return;
    this.draft.necessity[label] = !this.draft.necessity[label];
    this.persistDraft();
  }

  /** Toggle by checklist position, for number-key input. Index is 0-based. */
  toggleNecessityAt(index: number): void {
    const prop = this.task?.propositions[index];
    if (prop) this.toggleNecessity(prop.label);
  }

  setConnectivity(value: boolean): void {
    if (!this.draft) return;
    this.draft.connectivity = value;
    this.persistDraft();
  }

  setTransformAccuracy(value: boolean): void {
    if (!this.draft) return;
    this.draft.transformAccuracy = value;
    this.persistDraft();
  }

  setAnswer(text: string): void {
    if (!this.draft) return;
    this.draft.answer = text;
    this.persistDraft();
  }

  /** Names of criteria still unanswered; empty means ready to submit. */
  missingFields(): string[] {
    if (!this.task || !this.draft) return ["task"];
    const missing: string[] = [];
    if (!this.draft.answer.trim()) missing.push("annotator_answer");
    if (this.draft.connectivity === null) missing.push("connectivity");
    if (this.draft.transformAccuracy === null) missing.push("transform_accuracy");
    return missing;
  }

  private buildSubmission(): AnnotationSubmission {
    const draft = this.draft!;
    return {
      annotator_id: this.annotatorId,
      necessity: { ...draft.necessity },
      connectivity: draft.connectivity!,
      annotator_answer: draft.answer,
      transform_accuracy: draft.transformAccuracy!,
      client_token: draft.clientToken,
    };
  }

  /** Submit the blind annotation, then advance to the reveal phase.
   *
   * Network failure queues the submission instead; `flushQueue` retries it
   * later under the same client token, so at most one record is stored.
   */
  async submit(): Promise<SubmitOutcome> {
    if (this.phase !== "blind") return { ok: true };
    const missing = this.missingFields();
    if (missing.length > 0) return { invalid: missing };
    const task = this.task!;
    const body = this.buildSubmission();
    try {
      await this.api.submitAnnotation(task.task_id, body);
    } catch (error) {
      if (isNetworkError(error)) {
        this.enqueue({ taskId: task.task_id, body });
        return { queued: true };
      }
      throw error;
    }
    this.storage.removeItem(this.draftKey(task.task_id));
    const revealed = await this.api.reveal(task.task_id, this.annotatorId);
    this.reveal = {
      modelShortAnswer: revealed.model_short_answer,
      annotatorAnswer: revealed.annotator_answer,
    };
    this.phase = "reveal";
    return { ok: true };
  }

  /** Record the post-reveal equivalence verdict, then move to the next task.
   *
   * This supersedes the blind record under a fresh token; the export keeps
   * only the latest record per task and annotator.
   */
  async confirmEquivalence(confirmed: boolean): Promise<void> {
    if (this.phase !== "reveal" || !this.task || !this.draft) {
      throw new Error("equivalence is decided after reveal");
    }
    const body: AnnotationSubmission = {
      ...this.buildSubmission(),
      equivalence_confirmed: confirmed,
      client_token: this.newToken(),
    };
    await this.api.submitAnnotation(this.task.task_id, body);
    await this.loadNext();
  }

  /** Leave equivalence undecided and move on. */
  async skipEquivalence(): Promise<void> {
    if (this.phase !== "reveal") throw new Error("nothing to skip");
    await this.loadNext();
  }

  private readQueue(): QueuedSubmission[] {
    const raw = this.storage.getItem(this.queueKey());
    if (raw === null) return [];
    try {
      return JSON.parse(raw) as QueuedSubmission[];
    } catch {
      return [];
    }
  }

  private writeQueue(queue: QueuedSubmission[]): void {
    if (queue.length === 0) this.storage.removeItem(this.queueKey());
    else this.storage.setItem(this.queueKey(), JSON.stringify(queue));
  }

  private enqueue(item: QueuedSubmission): void {
    this.writeQueue([...this.readQueue(), item]);
  }

  queuedCount(): number {
    return this.readQueue().length;
  }

  /** Drain queued submissions in order. Returns how many were delivered.
   *
   * Stops at the first network failure (still offline); a definitive server
   * rejection drops the entry, since retrying it can never succeed.
   */
  async flushQueue(): Promise<number> {
    const queue = this.readQueue();
    let delivered = 0;
    while (queue.length > 0) {
      const { taskId, body } = queue[0];
      try {
        await this.api.submitAnnotation(taskId, body);
      } catch (error) {
        if (isNetworkError(error)) break;
        queue.shift();
        this.writeQueue(queue);
        throw error;
      }
      queue.shift();
      this.writeQueue(queue);
      this.storage.removeItem(this.draftKey(taskId));
      delivered += 1;
    }
    return delivered;
  }
}
