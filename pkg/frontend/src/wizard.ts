// Three-pane intake wizard. Panes render strictly in the order the server's
// state machine expects; Next stays disabled until the local length check
// passes, and server rejections surface inline without losing entered text.

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import { clear, el } from "./dom.js";
import type { ConversationSnapshot, Stage } from "./types.js";
import { checkIntakeField } from "./validation.js";

const PANES: { stage: Stage; title: string; hint: string }[] = [
  {
    stage: "intake_approach",
    title: "Step 1 · Your approach",
    hint: "Describe your current approach and where exactly you are confused.",
  },
  {
    stage: "intake_attempts",
    title: "Step 2 · What you tried",
    hint: "Explain the attempts you already made and what happened.",
  },
  {
    stage: "intake_concept",
    title: "Step 3 · The concept",
    hint: "Name the concept or implementation detail you need clarified.",
  },
];

export class IntakeWizard {
  readonly root: HTMLElement;
  pending: Promise<void> = Promise.resolve();
  private conversation: ConversationSnapshot;
  private drafts = new Map<Stage, string>();

  constructor(
    private api: ApiClient,
    conversation: ConversationSnapshot,
    private onComplete: (conv: ConversationSnapshot) => void,
  ) {
    this.conversation = conversation;
    this.root = el("section", { class: "wizard", "data-testid": "intake-wizard" });
    this.render();
  }

  private paneIndex(): number {
    return PANES.findIndex((p) => p.stage === this.conversation.stage);
  }

  render(): void {
    clear(this.root);
    const index = this.paneIndex();
    if (index < 0) {
      // the server has moved past intake; never render a stale submit control
      this.onComplete(this.conversation);
      return;
    }
    const pane = PANES[index];
    const progress = el("ol", { class: "wizard-progress" });
    PANES.forEach((p, i) => {
      const cls = i < index ? "done" : i === index ? "active" : "todo";
      progress.append(el("li", { class: cls }, [p.title]));
    });

    const textarea = el("textarea", {
      class: "wizard-input",
      rows: "6",
      "data-testid": `intake-${pane.stage}`,
      placeholder: pane.hint,
    });
    textarea.value = this.drafts.get(pane.stage) ?? "";

    const counter = el("div", { class: "counter", "data-testid": "intake-counter" });
    const errorBox = el("div", { class: "error-banner hidden", "data-testid": "intake-error" });
    const nextBtn = el(
      "button",
      { class: "primary", type: "button", "data-testid": "intake-next" },
      [index === PANES.length - 1 ? "Finish intake" : "Next"],
    );

    const sync = () => {
      this.drafts.set(pane.stage, textarea.value);
      const check = checkIntakeField(textarea.value);
      counter.textContent = check.message;
      counter.classList.toggle("counter-bad", !check.ok);
      nextBtn.disabled = !check.ok;
    };
    textarea.addEventListener("input", sync);
    sync();

    nextBtn.addEventListener("click", () => {
      this.pending = this.submitCurrent(textarea.value, errorBox);
    });

    this.root.append(
      progress,
      el("h2", {}, [pane.title]),
      el("p", { class: "hint" }, [pane.hint]),
      textarea,
      counter,
      errorBox,
      nextBtn,
    );
  }

  private async submitCurrent(text: string, errorBox: HTMLElement): Promise<void> {
    errorBox.classList.add("hidden");
    try {
      await this.api.submitIntake(this.conversation.id, text);
      this.conversation = await this.api.getConversation(this.conversation.id);
      this.render();
    } catch (err) {
      if (err instanceof ApiError) {
        errorBox.textContent =
          err.reasons.length > 0 ? `Rejected: ${err.reasons.join(", ")}` : err.code;
        errorBox.classList.remove("hidden");
        return; // entered text stays in the textarea
      }
      throw err;
    }
  }
}
