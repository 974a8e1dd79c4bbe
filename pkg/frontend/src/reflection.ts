// Reflection form: the three prompts come from the server verbatim (never
// hard-coded here) and an empty submission is stopped locally before any
// request is made. After scoring, the escalate affordance appears.

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import { clear, el } from "./dom.js";
import type { ConversationSnapshot } from "./types.js";

export class ReflectionForm {
  readonly root: HTMLElement;
  pending: Promise<void> = Promise.resolve();
  private fields: HTMLTextAreaElement[] = [];
  private errorBox: HTMLElement;
  private resultBox: HTMLElement;

  constructor(
    private api: ApiClient,
    private conversationId: string,
    private onDone: (conv: ConversationSnapshot) => void,
  ) {
    this.errorBox = el("div", { class: "error-banner hidden", "data-testid": "reflection-error" });
    this.resultBox = el("div", { class: "result-box hidden", "data-testid": "reflection-result" });
    this.root = el("section", { class: "reflection", "data-testid": "reflection-form" });
    this.root.append(el("p", {}, ["Loading prompts…"]));
  }

  async load(): Promise<void> {
    const { prompts } = await this.api.reflectionPrompts(this.conversationId);
    clear(this.root);
    this.fields = [];
    this.root.append(el("h2", {}, ["Before you go: reflect"]));
    for (const prompt of prompts) {
      const area = el("textarea", { rows: "3", "data-testid": "reflection-field" });
      this.fields.push(area);
      this.root.append(el("label", { class: "prompt" }, [prompt]), area);
    }
    const submitBtn = el(
      "button",
      { class: "primary", type: "button", "data-testid": "reflection-submit" },
      ["Submit reflection"],
    );
    submitBtn.addEventListener("click", () => {
      this.pending = this.submit();
    });
    this.root.append(this.errorBox, submitBtn, this.resultBox);
  }

  private async submit(): Promise<void> {
    this.errorBox.classList.add("hidden");
    const [learned, unclear, nextSteps] = this.fields.map((f) => f.value);
    if (![learned, unclear, nextSteps].some((v) => v.trim() !== "")) {
      this.errorBox.textContent = "Fill in at least one field before submitting.";
      this.errorBox.classList.remove("hidden");
      return; // no request leaves the client for an empty form
    }
    try {
      const result = await this.api.submitReflection(
        this.conversationId,
        learned,
        unclear,
        nextSteps,
      );
      clear(this.resultBox);
      this.resultBox.classList.remove("hidden");
      if (result.substantive) {
        this.resultBox.append(
          el("p", { class: "substantive-yes" }, [
            "Nice reflection — it names specifics and looks ahead.",
          ]),
        );
      } else {
        this.resultBox.append(
          el("p", { class: "substantive-no" }, [
            "That reflection is quite thin. A sentence on what you learned and what you'll try next helps it stick — you can escalate to an instructor either way.",
          ]),
        );
      }
      const escalateBtn = el(
        "button",
        { type: "button", "data-testid": "escalate" },
        ["Still stuck? Escalate to an instructor"],
      );
      const noteArea = el("textarea", {
        rows: "2",
        "data-testid": "escalate-note",
        placeholder: "What is still unresolved?",
      });
      escalateBtn.addEventListener("click", () => {
        this.pending = this.escalate(noteArea.value);
      });
      this.resultBox.append(noteArea, escalateBtn);
    } catch (err) {
      if (err instanceof ApiError) {
        this.errorBox.textContent = `Could not save: ${err.code}`;
        this.errorBox.classList.remove("hidden");
        return;
      }
      throw err;
    }
  }

  private async escalate(note: string): Promise<void> {
    try {
      await this.api.escalate(this.conversationId, note);
      const conv = await this.api.getConversation(this.conversationId);
      clear(this.resultBox);
      this.resultBox.append(
        el("p", { class: "escalated", "data-testid": "escalated-note" }, [
          "An instructor will pick this up with your full conversation attached.",
        ]),
      );
      this.onDone(conv);
    } catch (err) {
      if (err instanceof ApiError) {
        this.errorBox.textContent = `Escalation failed: ${err.code}`;
        this.errorBox.classList.remove("hidden");
        return;
      }
      throw err;
    }
  }
}
