/** DOM rendering: side-by-side documents, highlights, arrows, progress.
 *
 * Candidates are rendered strictly in document order and carry no trace of
 * which suggestion method produced them: the renderer only ever reads a
 * candidate's target index.
 */

import type { Progress } from "./api.js";
import type { Selection, TaskView } from "./state.js";

export interface RenderHandlers {
  onToggle(targetIdx: number, state: "accept" | "reject"): void;
  onSubmit(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderSourceColumn(doc: Document, view: TaskView): HTMLElement {
  const column = el(doc, "section", "doc-column doc-source");
  column.appendChild(el(doc, "h2", "doc-title", view.task.source_doc.doc_id));
  const list = el(doc, "ol", "sentences");
  view.task.source_doc.sentences.forEach((text, idx) => {
    const cls = idx === view.task.source_idx ? "sent sent-source-active" : "sent";
    const item = el(doc, "li", cls, text);
    item.dataset.idx = String(idx);
    if (idx === view.task.source_idx) item.id = "active-source";
    list.appendChild(item);
  });
  column.appendChild(list);
  return column;
}

function renderCandidateControls(
  doc: Document,
  targetIdx: number,
  state: Selection,
  handlers: RenderHandlers,
): HTMLElement {
  const controls = el(doc, "span", "controls");
  for (const action of ["accept", "reject"] as const) {
    const button = el(doc, "button", `btn btn-${action}`,
                      action === "accept" ? "link" : "no link");
    button.dataset.action = action;
    if (state === action) button.classList.add("selected");
    button.addEventListener("click", () => handlers.onToggle(targetIdx, action));
    controls.appendChild(button);
  }
  return controls;
}

function renderTargetColumn(
  doc: Document,
  view: TaskView,
  handlers: RenderHandlers,
): HTMLElement {
  const column = el(doc, "section", "doc-column doc-target");
  column.appendChild(el(doc, "h2", "doc-title", view.task.target_doc.doc_id));
  const list = el(doc, "ol", "sentences");
  // iterate the document, not the candidate list: candidates appear in the
  // order they occur in the document, indistinguishable from each other
  view.task.target_doc.sentences.forEach((text, idx) => {
    const isCandidate = view.selections.has(idx);
    const state = view.selections.get(idx) ?? "undecided";
    const cls = isCandidate ? `sent sent-candidate state-${state}` : "sent";
    const item = el(doc, "li", cls, text);
    item.dataset.idx = String(idx);
    if (isCandidate) {
      item.appendChild(renderCandidateControls(doc, idx, state, handlers));
    }
    list.appendChild(item);
  });
  column.appendChild(list);
  return column;
}

export function renderTask(
  container: HTMLElement,
  view: TaskView,
  handlers: RenderHandlers,
): void {
  const doc = container.ownerDocument;
  container.textContent = "";

  const header = el(doc, "header", "task-header");
  const progress = view.task.progress;
  header.appendChild(el(doc, "span", "progress",
                        `Task ${progress.completed + 1} of ${progress.total}`));
  header.appendChild(el(doc, "span", "pair-label",
                        `${view.task.pair_id} / sentence ${view.task.source_idx}`));
  container.appendChild(header);

  const columns = el(doc, "div", "columns");
  columns.appendChild(renderSourceColumn(doc, view));
  columns.appendChild(renderTargetColumn(doc, view, handlers));
  container.appendChild(columns);

  const arrows = doc.createElementNS("http://www.w3.org/2000/svg", "svg");
  arrows.setAttribute("class", "arrows");
  container.appendChild(arrows as unknown as Node);

  const footer = el(doc, "footer", "task-footer");
  const submit = el(doc, "button", "btn btn-submit", "Submit and continue");
  submit.id = "submit";
  submit.disabled = [...view.selections.values()].some((s) => s === "undecided");
  submit.addEventListener("click", () => handlers.onSubmit());
  footer.appendChild(submit);
  container.appendChild(footer);

  drawArrows(container, view);
}

/** Arrow per candidate, from the active source sentence to the candidate. */
export function drawArrows(container: HTMLElement, view: TaskView): void {
  const svg = container.querySelector("svg.arrows");
  const source = container.querySelector("#active-source");
  if (!svg || !source) return;
  const origin = (source as HTMLElement).getBoundingClientRect();
  const doc = container.ownerDocument;
  for (const idx of view.selections.keys()) {
    const target = container.querySelector(
      `.doc-target li[data-idx="${idx}"]`,
    ) as HTMLElement | null;
    if (!target) continue;
    const rect = target.getBoundingClientRect();
    const line = doc.createElementNS("http://www.w3.org/2000/svg", "line");
    line.setAttribute("x1", String(origin.right));
    line.setAttribute("y1", String(origin.top + origin.height / 2));
    line.setAttribute("x2", String(rect.left));
    line.setAttribute("y2", String(rect.top + rect.height / 2));
    line.setAttribute("class", "arrow");
    svg.appendChild(line);
  }
}

export function renderDone(container: HTMLElement, progress?: Progress): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  const panel = el(doc, "div", "done-screen");
  panel.appendChild(el(doc, "h2", undefined, "All tasks complete"));
  if (progress) {
    panel.appendChild(el(doc, "p", "progress",
                         `${progress.completed} of ${progress.total} bundles decided.`));
  }
  panel.appendChild(el(doc, "p", undefined, "Thank you! You can close this window."));
  container.appendChild(panel);
}

export function renderError(container: HTMLElement, message: string,
                            onRetry: () => void): void {
  const doc = container.ownerDocument;
  const banner = el(doc, "div", "error-banner");
  banner.appendChild(el(doc, "span", undefined, message));
  const retry = el(doc, "button", "btn btn-retry", "Retry");
  retry.addEventListener("click", () => {
    banner.remove();
    onRetry();
  });
  banner.appendChild(retry);
  container.prepend(banner);
}
