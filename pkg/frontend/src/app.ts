// Application shell: login view, student wizard flow, instructor tabs.

import { ApiClient, ApiError } from "./api.js";
import { clear, el } from "./dom.js";
import { Dashboard, InstructorQueue } from "./instructor.js";
import { QuotaBadge } from "./quota.js";
import { ReflectionForm } from "./reflection.js";
import { ClientSession } from "./session.js";
import { FeedbackThread } from "./thread.js";
import type { ConversationSnapshot, Role } from "./types.js";
import { IntakeWizard } from "./wizard.js";

export class App {
  readonly api: ApiClient;
  readonly session: ClientSession;
  private main: HTMLElement;
  private header: HTMLElement;

  constructor(private root: HTMLElement, baseUrl = "") {
    this.api = new ApiClient(baseUrl);
    this.session = new ClientSession(this.api);
    this.header = el("header", { class: "top" }, [el("h1", {}, ["Course tutor"])]);
    this.main = el("main", {});
    root.append(this.header, this.main);
  }

  async start(): Promise<void> {
    if (this.session.restore() && this.session.role) {
      await this.routeByRole(this.session.role);
    } else {
      this.showLogin();
    }
  }

  showLogin(message = ""): void {
    clear(this.main);
    const handle = el("input", { type: "text", placeholder: "handle", "data-testid": "login-handle" });
    const password = el("input", { type: "password", placeholder: "password", "data-testid": "login-password" });
    const error = el("div", { class: "error-banner" + (message ? "" : " hidden") }, [message]);
    const loginBtn = el("button", { class: "primary", type: "button" }, ["Sign in"]);
    const registerBtn = el("button", { type: "button" }, ["New student account"]);

    loginBtn.addEventListener("click", () => {
      void this.login(handle.value, password.value, error);
    });
    registerBtn.addEventListener("click", () => {
      void this.register(handle.value, password.value, error);
    });
    this.main.append(
      el("section", { class: "login" }, [
        el("h2", {}, ["Sign in"]),
        handle,
        password,
        error,
        loginBtn,
        registerBtn,
      ]),
    );
  }

  private async login(handle: string, password: string, errorBox: HTMLElement): Promise<void> {
    try {
      await this.api.login(handle, password);
    } catch (err) {
      errorBox.textContent = err instanceof ApiError ? err.code : "login failed";
      errorBox.classList.remove("hidden");
      return;
    }
    // role discovery: try the instructor surface, fall back to student
    let role: Role = "student";
    try {
      await this.api.escalations();
      role = "instructor";
    } catch {
      role = "student";
    }
    this.session.begin(this.api.token ?? "", role, handle);
    await this.routeByRole(role);
  }

  private async register(handle: string, password: string, errorBox: HTMLElement): Promise<void> {
    try {
      await this.api.register(handle, password);
      await this.login(handle, password, errorBox);
    } catch (err) {
      errorBox.textContent = err instanceof ApiError ? err.code : "registration failed";
      errorBox.classList.remove("hidden");
    }
  }

  private async routeByRole(role: Role): Promise<void> {
    if (role === "instructor" || role === "admin") {
      await this.showInstructor();
    } else {
      await this.showStudent();
    }
  }

  async showStudent(): Promise<void> {
    clear(this.main);
    const badge = new QuotaBadge(() => this.api.quota());
    await badge.refresh();
    const container = el("div", { class: "student-view" });
    this.main.append(badge.root, container);

    const conv = await this.api.startConversation();
    this.mountWizard(container, badge, conv);
  }

  private mountWizard(container: HTMLElement, badge: QuotaBadge, conv: ConversationSnapshot): void {
    clear(container);
    const wizard = new IntakeWizard(this.api, conv, (ready) => {
      this.mountThread(container, badge, ready);
    });
    container.append(wizard.root);
  }

  private mountThread(container: HTMLElement, badge: QuotaBadge, conv: ConversationSnapshot): void {
    clear(container);
    const thread = new FeedbackThread(this.api, conv, badge, (done) => {
      this.mountReflection(container, done);
    });
    container.append(thread.root);
  }

  private mountReflection(container: HTMLElement, conv: ConversationSnapshot): void {
    clear(container);
    const form = new ReflectionForm(this.api, conv.id, () => {
      const again = el("button", { class: "primary", type: "button" }, [
        "Start a new question",
      ]);
      again.addEventListener("click", () => void this.showStudent());
      container.append(again);
    });
    container.append(form.root);
    void form.load();
  }

  async showInstructor(): Promise<void> {
    clear(this.main);
    const onAuthError = () => this.showLogin("session expired — sign in again");
    const queue = new InstructorQueue(this.api, onAuthError);
    const dashboard = new Dashboard(this.api, onAuthError);
    const tabs = el("nav", { class: "tabs" });
    const queueTab = el("button", { type: "button", class: "tab active" }, ["Queue"]);
    const dashTab = el("button", { type: "button", class: "tab" }, ["Dashboard"]);
    tabs.append(queueTab, dashTab);

    const panel = el("div", { class: "panel" });
    const showQueue = () => {
      clear(panel);
      panel.append(queue.root);
      queueTab.classList.add("active");
      dashTab.classList.remove("active");
    };
    const showDash = () => {
      clear(panel);
      panel.append(dashboard.root);
      dashTab.classList.add("active");
      queueTab.classList.remove("active");
    };
    queueTab.addEventListener("click", showQueue);
    dashTab.addEventListener("click", showDash);

    this.main.append(tabs, panel);
    showQueue();
    await queue.refresh();
    await dashboard.refresh();
    queue.startPolling();
    dashboard.startPolling();
  }
}

export function boot(): void {
  const root = document.getElementById("app");
  if (root) {
    void new App(root).start();
  }
}

declare global {
  interface Window {
    __SOC_NO_AUTOBOOT__?: boolean;
  }
}

if (typeof window !== "undefined" && !window.__SOC_NO_AUTOBOOT__) {
  boot();
}
