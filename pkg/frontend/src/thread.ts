// Feedback thread: transcript, ask-the-tutor control, follow-up composer.
// The quota badge moves only on 200 query responses; a 422 leaves it alone
// and surfaces the gate's reason codes inline with all text preserved.

import type { ApiClient, QueryBody } from "./api.js";
import { ApiError } from "./api.js";
import { clear, el } from "./dom.js";
import type { QuotaBadge } from "./quota.js";
import type { ConversationSnapshot } from "./types.js";

export class FeedbackThread {
  readonly root: HTMLElement;
  pending: Promise<void> = Promise.resolve();
  private conversation: ConversationSnapshot;
  private transcript: HTMLElement;
  private errorBox: HTMLElement;
  private followUp: { approach: HTMLTextAreaElement; attempts: HTMLTextAreaElement; concept: HTMLTextAreaElement };

  constructor(
    private api: ApiClient,
    conversation: ConversationSnapshot,
    private quotaBadge: QuotaBadge,
    private onReflectionTime: (conv: ConversationSnapshot) => void,
  ) {
    this.conversation = conversation;
    this.transcript = el("div", { class: "transcript", "data-testid": "transcript" });
    this.errorBox = el("div", { class: "error-banner hidden", "data-testid": "query-error" });
    this.followUp = {
      approach: el("textarea", { rows: "3", "data-testid": "followup-approach" }),
      attempts: el("textarea", { rows: "3", "data-testid": "followup-attempts" }),
      concept: el("textarea", { rows: "3", "data-testid": "followup-concept" }),
    };
    this.root = el("section", { class: "thread", "data-testid": "feedback-thread" });
    this.render();
  }

  private render(): void {
    clear(this.root);
    this.renderTranscript();
    this.root.append(el("h2", {}, ["Tutor feedback"]), this.transcript, this.errorBox);

    if (this.conversation.stage !== "feedback") {
      return; // no submit controls for stages the server would refuse
    }

    const hasTutorTurn = this.conversation.turns.some((t) => t.author === "tutor");
    if (!hasTutorTurn) {
      const askBtn = el(
        "button",
        { class: "primary", type: "button", "data-testid": "ask-tutor" },
        ["Ask the tutor"],
      );
      askBtn.addEventListener("click", () => {
        this.pending = this.runQuery({});
      });
      this.root.append(
        el("p", { class: "hint" }, [
          "Your three intake answers form the question. One query uses one of today's quota.",
        ]),
        askBtn,
      );
      return;
    }

    const composer = el("div", { class: "composer" }, [
      el("h3", {}, ["Follow-up question"]),
      el("label", {}, ["Current approach and confusion"]),
      this.followUp.approach,
      el("label", {}, ["What you tried since"]),
      this.followUp.attempts,
      el("label", {}, ["Concept to clarify"]),
      this.followUp.concept,
    ]);
    const sendBtn = el(
      "button",
      { class: "primary", type: "button", "data-testid": "send-followup" },
      ["Send follow-up"],
    );
    sendBtn.addEventListener("click", () => {
      this.pending = this.runQuery({
        approach: this.followUp.approach.value,
        attempts: this.followUp.attempts.value,
        concept: this.followUp.concept.value,
      });
    });
    const reflectBtn = el(
      "button",
      { type: "button", "data-testid": "go-reflect" },
      ["I'm done — reflect"],
    );
    reflectBtn.addEventListener("click", () => this.onReflectionTime(this.conversation));
    this.root.append(composer, sendBtn, reflectBtn);
  }

  private renderTranscript(): void {
    clear(this.transcript);
    for (const turn of this.conversation.turns) {
      this.transcript.append(
        el("div", { class: `turn turn-${turn.author}` }, [
          el("span", { class: "author" }, [turn.author]),
          el("p", {}, [turn.text]),
        ]),
      );
    }
    if (this.conversation.citations.length > 0) {
      const list = el("ul", { class: "citations", "data-testid": "citations" });
      for (const citation of this.conversation.citations) {
        list.append(el("li", {}, [citation.doc_title]));
      }
      this.transcript.append(el("div", {}, [el("h4", {}, ["Course materials cited"]), list]));
    }
  }

  private async runQuery(body: QueryBody): Promise<void> {
    this.errorBox.classList.add("hidden");
    try {
      const result = await this.api.query(this.conversation.id, body);
      this.quotaBadge.set(result.remaining_quota); // only a 200 moves the badge
      this.conversation = await this.api.getConversation(this.conversation.id);
      this.render();
    } catch (err) {
      if (err instanceof ApiError) {
        const quotaNote =
          err.remainingQuota !== undefined ? ` (quota left: ${err.remainingQuota})` : "";
        this.errorBox.textContent =
          err.reasons.length > 0
            ? `Rejected: ${err.reasons.join(", ")}${quotaNote}`
            : `${err.code}${quotaNote}`;
        this.errorBox.classList.remove("hidden");
        return; // composer text is preserved; badge untouched
      }
      throw err;
    }
  }

  get snapshot(): ConversationSnapshot {
    return this.conversation;
  }
}
