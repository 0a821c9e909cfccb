/** Task view state machine: selections, submit gating, re-queue on failure. */

import type { ApiClient, Task } from "./api.js";

export type Selection = "accept" | "reject" | "undecided";

export interface TaskView {
  task: Task;
  /** Keyed exactly by the bundle's candidate target indices. */
  selections: Map<number, Selection>;
  /** Candidates whose decisions the server has already acknowledged. */
  acknowledged: Set<number>;
}

export function createView(task: Task): TaskView {
  return {
    task,
    selections: new Map(task.candidates.map((c) => [c.target_idx, "undecided"])),
    acknowledged: new Set(),
  };
}

export function toggleCandidate(
  view: TaskView,
  targetIdx: number,
  state: "accept" | "reject",
): TaskView {
  if (!view.selections.has(targetIdx)) {
    console.warn(`ignoring toggle for unknown candidate ${targetIdx}`);
    return view;
  }
  const selections = new Map(view.selections);
  selections.set(targetIdx, state);
  return { ...view, selections };
}

export function allDecided(view: TaskView): boolean {
  for (const state of view.selections.values()) {
    if (state === "undecided") return false;
  }
  return true;
}

export interface SubmitResult {
  ok: boolean;
  acknowledged: number[];
  failed: number[];
}

/**
 * Post one decision per candidate. Already-acknowledged candidates are
 * skipped, so a retry after partial failure only re-sends what is missing.
 */
export async function submitBundle(
  client: ApiClient,
  annotator: string,
  view: TaskView,
): Promise<SubmitResult> {
  if (!allDecided(view)) {
    throw new Error("submit requires a decision for every candidate");
  }
  const acknowledged: number[] = [];
  const failed: number[] = [];
  for (const [targetIdx, state] of view.selections) {
    if (view.acknowledged.has(targetIdx)) continue;
    try {
      await client.submitDecision(
        annotator,
        view.task.pair_id,
        view.task.source_idx,
        targetIdx,
        state === "accept",
      );
      view.acknowledged.add(targetIdx);
      acknowledged.push(targetIdx);
    } catch (err) {
      console.error(`decision for candidate ${targetIdx} not acknowledged`, err);
      failed.push(targetIdx);
    }
  }
  return { ok: failed.length === 0, acknowledged, failed };
}
