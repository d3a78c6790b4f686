/** Shared fixtures for the unit suites: a representative task payload and an
 * in-memory stand-in for the annotation service with idempotent submission.
 */

import type { AnnotationSubmission, FetchLike, TaskPayload } from "../src/api.js";

export function sampleTask(): TaskPayload {
  return {
    task_id: "musique:demo-1",
    question: "What label released the debut album of the band founded in Arden?",
    documents: [
      {
        doc_id: 1,
        title: "Arden (band)",
        sentences: [
          "Arden is a rock band formed in 1998.",
          "Their debut album appeared two years later.",
        ],
      },
      {
        doc_id: 2,
        title: null,
        sentences: ["Warner Bros Records released the album."],
      },
    ],
    statements: [
      {
        text: "The band Arden formed in 1998.",
        citations: [{ doc_id: 1, sentence_ids: [1] }],
      },
      {
        text: "Warner Bros Records released their debut album.",
        citations: [{ doc_id: 2, sentence_ids: [1] }],
      },
    ],
    propositions: [
      { text: "Arden is a rock band.", label: "P1", citations: [{ doc_id: 1, sentence_ids: [1] }] },
      { text: "Arden formed in 1998.", label: "P2", citations: [{ doc_id: 1, sentence_ids: [1] }] },
      { text: "The debut album appeared in 2000.", label: "P3", citations: [{ doc_id: 1, sentence_ids: [2] }] },
      { text: "Warner Bros Records released it.", label: "P4", citations: [{ doc_id: 2, sentence_ids: [1] }] },
    ],
    horn_expression: ["P1 ∧ P2 → P3", "P3 → P4"],
    chain: {
      trace: [
        ["P4", "warner bros records"],
        ["P3", "debut album"],
      ],
      start_candidates: ["P4"],
    },
  };
}

export interface FakeServiceOptions {
  /** Simulate a dropped connection for every request. */
  offline?: boolean;
  /** Store the annotation, then fail the response (client sees a network error). */
  flakyAfterStore?: boolean;
}

export interface FakeService {
  fetchImpl: FetchLike;
  records: Array<AnnotationSubmission & { task_id: string }>;
  options: FakeServiceOptions;
}

/** A minimal double for the HTTP service. Deduplicates submissions on
 * client_token the way the real store does, so retry behaviour is testable.
 */
export function fakeService(task: TaskPayload, options: FakeServiceOptions = {}): FakeService {
  const records: Array<AnnotationSubmission & { task_id: string }> = [];
  const seenTokens = new Set<string>();
  let recordCounter = 0;

  function json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  }

  const fetchImpl: FetchLike = async (url, init) => {
    if (options.offline) {
      throw new TypeError("fetch failed");
    }
    const method = init?.method ?? "GET";
    const path = String(url);

    if (method === "GET" && path.startsWith("/api/tasks/next")) {
      return json({ task, remaining: 1 });
    }
    if (method === "POST" && /\/api\/tasks\/[^/]+\/annotation$/.test(path)) {
      const body = JSON.parse(String(init?.body)) as AnnotationSubmission;
      const token = body.client_token ?? null;
      if (token === null || !seenTokens.has(token)) {
        if (token !== null) seenTokens.add(token);
        records.push({ ...body, task_id: task.task_id });
      }
      recordCounter += 1;
      if (options.flakyAfterStore) {
        throw new TypeError("socket hang up");
      }
      return json({ record_id: recordCounter });
    }
    if (method === "POST" && /\/api\/tasks\/[^/]+\/reveal$/.test(path)) {
      const last = records[records.length - 1];
      return json({
        model_short_answer: "model says",
        annotator_answer: last ? last.annotator_answer : "",
      });
    }
    if (method === "GET" && /\/api\/tasks\/[^/]+/.test(path)) {
      return json({ task });
    }
    return json({ detail: `unhandled ${method} ${path}` }, 404);
  };

  return { fetchImpl, records, options };
}
