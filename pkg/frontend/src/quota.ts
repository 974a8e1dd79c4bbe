// Quota badge: "N of 8 remaining". Only successful query responses and the
// quota endpoint move it; a rejected query must leave it untouched.

import { el } from "./dom.js";

export class QuotaBadge {
  readonly root: HTMLElement;
  private label: HTMLElement;
  private retryBtn: HTMLButtonElement;
  private remaining: number | null = null;
  private limit = 8;

  constructor(private fetchQuota: () => Promise<{ remaining: number; limit: number }>) {
    this.label = el("span", { class: "quota-label" }, ["…"]);
    this.retryBtn = el("button", { class: "quota-retry hidden", type: "button" }, [
      "retry",
    ]);
    this.retryBtn.addEventListener("click", () => void this.refresh());
    this.root = el("div", { class: "quota-badge", "data-testid": "quota-badge" }, [
      this.label,
      this.retryBtn,
    ]);
  }

  async refresh(): Promise<void> {
    try {
      const status = await this.fetchQuota();
      this.set(status.remaining, status.limit);
    } catch {
      this.markStale();
    }
  }

  set(remaining: number, limit?: number): void {
    this.remaining = remaining;
    if (limit !== undefined) this.limit = limit;
    this.label.textContent = `${remaining} of ${this.limit} remaining`;
    this.root.classList.toggle("quota-warning", remaining <= 2);
    this.root.classList.remove("quota-stale");
    this.retryBtn.classList.add("hidden");
  }

  markStale(): void {
    this.root.classList.add("quota-stale");
    this.label.textContent =
      this.remaining === null
        ? "quota unavailable"
        : `${this.remaining} of ${this.limit} remaining (stale)`;
    this.retryBtn.classList.remove("hidden");
  }

  get value(): number | null {
    return this.remaining;
  }
}
