/** In-memory stand-in for the annotation service, mirroring its semantics:
 * task order, per-annotator completion, idempotent decision storage. */

import type { FetchLike, Task } from "../src/api.js";

export interface BundleSpec {
  pair_id: string;
  source_idx: number;
  candidates: { target_idx: number; provenance?: string[] }[];
}

export interface MockService {
  fetch: FetchLike;
  decisionPosts: number;
  failNextDecisions: number;
  decisions: Map<string, { annotator: string; accepted: boolean }>;
}

const SOURCE_SENTENCES = [
  "The opening sentence frames the entire story.",
  "A second sentence adds supporting detail.",
  "The third sentence questions the official account.",
];

const TARGET_SENTENCES = [
  "Officials released a statement early on Monday.",
  "The statement addressed the disputed figures directly.",
  "Independent reviewers have not confirmed the numbers.",
  "Previous coverage focused on procedural questions.",
  "A follow-up report is expected later this month.",
  "Community reaction has so far been muted.",
];

export function makeTask(
  candidates: { target_idx: number; provenance?: string[] }[],
  progress = { completed: 0, total: 3 },
): Task {
  return {
    pair_id: "pair-demo",
    source_idx: 1,
    candidates,
    source_doc: { doc_id: "demo-src", sentences: SOURCE_SENTENCES },
    target_doc: { doc_id: "demo-tgt", sentences: TARGET_SENTENCES },
    progress,
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function mockService(bundles: BundleSpec[]): MockService {
  const service: MockService = {
    decisionPosts: 0,
    failNextDecisions: 0,
    decisions: new Map(),
    fetch: async () => json({}, 500),
  };

  const decided = (annotator: string, b: BundleSpec) =>
    b.candidates.every((c) =>
      service.decisions.has(`${annotator}:${b.pair_id}:${b.source_idx}:${c.target_idx}`));

  service.fetch = async (url: string, init?: RequestInit) => {
    const parsed = new URL(url, "http://mock");
    if (parsed.pathname === "/tasks/next") {
      const annotator = parsed.searchParams.get("annotator") ?? "";
      const completed = bundles.filter((b) => decided(annotator, b)).length;
      const next = bundles.find((b) => !decided(annotator, b));
      if (!next) {
        return json({ done: true, progress: { completed, total: bundles.length } });
      }
      return json({
        done: false,
        task: {
          ...makeTask(next.candidates, { completed, total: bundles.length }),
          pair_id: next.pair_id,
          source_idx: next.source_idx,
        },
      });
    }
    if (parsed.pathname === "/decisions" && init?.method === "POST") {
      service.decisionPosts += 1;
      if (service.failNextDecisions > 0) {
        service.failNextDecisions -= 1;
        return json({ detail: "injected failure" }, 503);
      }
      const body = JSON.parse(String(init.body));
      const key = `${body.annotator}:${body.pair_id}:${body.source_idx}:${body.target_idx}`;
      service.decisions.set(key, { annotator: body.annotator, accepted: body.accepted });
      return json({ ok: true, changed: true });
    }
    if (parsed.pathname === "/export") {
      const lines = [...service.decisions.entries()].map(([key, value]) => {
        const [annotator, pairId, sourceIdx, targetIdx] = key.split(":");
        return JSON.stringify({
          pair_id: pairId,
          source_idx: Number(sourceIdx),
          target_idx: Number(targetIdx),
          decisions: { [annotator]: value.accepted },
        });
      });
      return new Response(lines.join("\n"), { status: 200 });
    }
    return json({ detail: "not found" }, 404);
  };
  return service;
}
