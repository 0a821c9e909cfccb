/** Application bootstrap: session loop and keyboard shortcuts. */

import { ApiClient } from "./api.js";
import { renderDone, renderError, renderTask } from "./render.js";
import { allDecided, createView, submitBundle, toggleCandidate, TaskView } from "./state.js";

export class App {
  private view: TaskView | null = null;
  private focused = 0; // position within the candidate list (document order)

  constructor(
    private readonly container: HTMLElement,
    private readonly client: ApiClient,
    private readonly annotator: string,
  ) {}

  async loadNext(): Promise<void> {
    let response;
    try {
      response = await this.client.nextTask(this.annotator);
    } catch (err) {
      renderError(this.container, `Could not reach the service: ${err}`, () =>
        void this.loadNext());
      return;
    }
    if (response.done || !response.task) {
      this.view = null;
      renderDone(this.container, response.progress);
      return;
    }
    this.view = createView(response.task);
    this.focused = 0;
    this.redraw();
  }

  private redraw(): void {
    if (!this.view) return;
    renderTask(this.container, this.view, {
      onToggle: (idx, state) => this.toggle(idx, state),
      onSubmit: () => void this.submit(),
    });
  }

  private candidateIds(): number[] {
    if (!this.view) return [];
    return [...this.view.selections.keys()].sort((a, b) => a - b);
  }

  toggle(targetIdx: number, state: "accept" | "reject"): void {
    if (!this.view) return;
    this.view = toggleCandidate(this.view, targetIdx, state);
    this.redraw();
  }

  async submit(): Promise<void> {
    if (!this.view || !allDecided(this.view)) return;
    const result = await submitBundle(this.client, this.annotator, this.view);
    if (!result.ok) {
      // keep the view: acknowledged decisions are tracked, a retry only
      // re-sends the rest
      renderError(this.container,
                  `${result.failed.length} decision(s) not acknowledged.`,
                  () => void this.submit());
      return;
    }
    await this.loadNext();
  }

  handleKey(key: string): void {
    if (!this.view) return;
    const ids = this.candidateIds();
    if (ids.length === 0) return;
    if (key === "j" || key === "ArrowDown") {
      this.focused = Math.min(this.focused + 1, ids.length - 1);
    } else if (key === "k" || key === "ArrowUp") {
      this.focused = Math.max(this.focused - 1, 0);
    } else if (key === "a") {
      this.toggle(ids[this.focused], "accept");
    } else if (key === "r") {
      this.toggle(ids[this.focused], "reject");
    } else if (key === "Enter") {
      void this.submit();
    }
  }
}

export function bootstrap(doc: Document): void {
  const container = doc.getElementById("app");
  if (!container) throw new Error("missing #app container");
  const params = new URLSearchParams(doc.defaultView?.location.search ?? "");
  const annotator = params.get("annotator") ||
    doc.defaultView?.localStorage.getItem("annotator") ||
    doc.defaultView?.prompt("Annotator token:") || "";
  doc.defaultView?.localStorage.setItem("annotator", annotator);
  const app = new App(container, new ApiClient(""), annotator);
  doc.addEventListener("keydown", (event) => app.handleKey(event.key));
  void app.loadNext();
}
