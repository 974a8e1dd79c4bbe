// Instructor surfaces: the escalation queue (claim/resolve, package viewer)
// and the engagement dashboard. Both poll on a timer; row actions update the
// DOM in place, no reload.

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import { clear, el } from "./dom.js";
import type { DashboardSummary, EscalationSummary } from "./types.js";

export const REFRESH_INTERVAL_MS = 30_000;

export class InstructorQueue {
  readonly root: HTMLElement;
  pending: Promise<void> = Promise.resolve();
  private tbody: HTMLElement;
  private viewer: HTMLElement;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private api: ApiClient, private onAuthError: () => void) {
    this.tbody = el("tbody", { "data-testid": "queue-body" });
    this.viewer = el("div", { class: "package-viewer hidden", "data-testid": "package-viewer" });
    const table = el("table", { class: "queue" }, [
      el("thead", {}, [
        el("tr", {}, [
          el("th", {}, ["Opened"]),
          el("th", {}, ["Student"]),
          el("th", {}, ["Note"]),
          el("th", {}, ["Status"]),
          el("th", {}, ["Actions"]),
        ]),
      ]),
      this.tbody,
    ]);
    this.root = el("section", { class: "instructor-queue" }, [
      el("h2", {}, ["Escalations"]),
      table,
      this.viewer,
    ]);
  }

  startPolling(): void {
    this.timer = setInterval(() => void this.refresh(), REFRESH_INTERVAL_MS);
  }

  stopPolling(): void {
    if (this.timer !== null) clearInterval(this.timer);
  }

  async refresh(): Promise<void> {
    try {
      const { escalations } = await this.api.escalations();
      clear(this.tbody);
      for (const esc of escalations) {
        this.tbody.append(this.row(esc));
      }
      if (escalations.length === 0) {
        this.tbody.append(
          el("tr", {}, [el("td", { colspan: "5" }, ["Queue is empty."])]),
        );
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 403) {
        this.onAuthError();
        return;
      }
      throw err;
    }
  }

  private row(esc: EscalationSummary): HTMLElement {
    const status = el("span", { class: `status status-${esc.status}` }, [
      esc.status === "claimed" && esc.claimed_by
        ? `claimed`
        : esc.status,
    ]);
    const actions = el("td", {});
    const tr = el("tr", { "data-testid": `escalation-${esc.id}` }, [
      el("td", {}, [new Date(esc.opened_at).toISOString()]),
      el("td", {}, [esc.student_handle]),
      el("td", {}, [esc.student_note || "—"]),
      el("td", {}, [status]),
      actions,
    ]);

    const viewBtn = el("button", { type: "button", "data-testid": "view" }, ["view"]);
    viewBtn.addEventListener("click", () => {
      this.pending = this.showPackage(esc.id);
    });
    actions.append(viewBtn);

    if (esc.status === "open") {
      const claimBtn = el("button", { type: "button", "data-testid": "claim" }, ["claim"]);
      claimBtn.addEventListener("click", () => {
        this.pending = this.claim(esc.id, tr, status, actions, claimBtn);
      });
      actions.append(claimBtn);
    } else if (esc.status === "claimed") {
      actions.append(this.resolveButton(esc.id, status, actions));
    }
    return tr;
  }

  private resolveButton(id: string, status: HTMLElement, actions: HTMLElement): HTMLElement {
    const resolveBtn = el("button", { type: "button", "data-testid": "resolve" }, [
      "resolve",
    ]);
    resolveBtn.addEventListener("click", () => {
      this.pending = (async () => {
        const updated = await this.api.resolve(id);
        status.textContent = updated.status;
        status.className = `status status-${updated.status}`;
        resolveBtn.remove();
      })();
    });
    return resolveBtn;
  }

  private async claim(
    id: string,
    tr: HTMLElement,
    status: HTMLElement,
    actions: HTMLElement,
    claimBtn: HTMLElement,
  ): Promise<void> {
    try {
      const updated = await this.api.claim(id);
      status.textContent = updated.status;
      status.className = `status status-${updated.status}`;
      claimBtn.remove();
      actions.append(this.resolveButton(id, status, actions));
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // lost the claim race: reflect the winner without a reload
        status.textContent = "claimed by someone else";
        claimBtn.remove();
        return;
      }
      throw err;
    }
  }

  private async showPackage(id: string): Promise<void> {
    const detail = await this.api.escalationDetail(id);
    clear(this.viewer);
    this.viewer.classList.remove("hidden");
    this.viewer.append(el("h3", {}, [`Conversation ${detail.conversation_id}`]));
    for (const turn of detail.package.turns) {
      this.viewer.append(
        el("div", { class: `turn turn-${turn.author}` }, [
          el("span", { class: "author" }, [turn.author]),
          el("p", {}, [turn.text]),
        ]),
      );
    }
    const reflection = detail.package.reflection;
    this.viewer.append(
      el("div", { class: "package-reflection" }, [
        el("h4", {}, ["Reflection"]),
        el("p", {}, [`Learned: ${reflection.learned}`]),
        el("p", {}, [`Unclear: ${reflection.unclear}`]),
        el("p", {}, [`Next: ${reflection.next_steps}`]),
      ]),
    );
    if (detail.package.citations.length > 0) {
      const list = el("ul", {});
      for (const c of detail.package.citations) list.append(el("li", {}, [c.doc_title]));
      this.viewer.append(el("h4", {}, ["Citations"]), list);
    }
  }
}

export class Dashboard {
  readonly root: HTMLElement;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private api: ApiClient, private onAuthError: () => void) {
    this.root = el("section", { class: "dashboard", "data-testid": "dashboard" }, [
      el("p", {}, ["Loading…"]),
    ]);
  }

  startPolling(): void {
    this.timer = setInterval(() => void this.refresh(), REFRESH_INTERVAL_MS);
  }

  stopPolling(): void {
    if (this.timer !== null) clearInterval(this.timer);
  }

  async refresh(): Promise<void> {
    let summary: DashboardSummary;
    try {
      summary = await this.api.dashboard();
    } catch (err) {
      if (err instanceof ApiError && err.status === 403) {
        this.onAuthError();
        return;
      }
      throw err;
    }
    clear(this.root);
    const rate = Math.round(summary.substantive_reflection_rate * 100);
    const cards = el("div", { class: "cards" }, [
      this.card("Substantive reflections", `${rate}%`, "substantive-rate"),
      this.card(
        "Queries answered",
        String(summary.queries_by_outcome["pass"] ?? 0),
        "queries-pass",
      ),
      this.card(
        "Gate rejections",
        String(summary.queries_by_outcome["reject"] ?? 0),
        "queries-reject",
      ),
      this.card(
        "Open escalations",
        String(summary.escalations_by_status["open"] ?? 0),
        "escalations-open",
      ),
    ]);

    const tagCloud = el("div", { class: "tag-cloud", "data-testid": "tag-cloud" });
    const maxCount = Math.max(1, ...summary.top_tags.map((t) => t.count));
    for (const { tag, count } of summary.top_tags) {
      const size = 0.8 + (count / maxCount) * 1.2;
      tagCloud.append(
        el("span", { class: "tag", style: `font-size:${size.toFixed(2)}em` }, [
          `${tag} (${count})`,
        ]),
      );
    }

    const histogram = el("div", { class: "histogram", "data-testid": "quota-histogram" });
    const buckets = Object.entries(summary.quota_utilization).sort(
      (a, b) => Number(a[0]) - Number(b[0]),
    );
    const maxStudents = Math.max(1, ...buckets.map(([, n]) => n));
    for (const [consumed, students] of buckets) {
      histogram.append(
        el("div", { class: "bar-row" }, [
          el("span", { class: "bar-label" }, [`${consumed} used`]),
          el("span", {
            class: "bar",
            style: `width:${(students / maxStudents) * 100}%`,
          }),
          el("span", { class: "bar-count" }, [`${students}`]),
        ]),
      );
    }

    this.root.append(
      el("h2", {}, ["Engagement"]),
      cards,
      el("h3", {}, ["Feedback tags"]),
      tagCloud,
      el("h3", {}, ["Quota utilization (students by queries used today)"]),
      histogram,
    );
  }

  private card(label: string, value: string, testId: string): HTMLElement {
    return el("div", { class: "card", "data-testid": `card-${testId}` }, [
      el("div", { class: "card-value" }, [value]),
      el("div", { class: "card-label" }, [label]),
    ]);
  }
}
