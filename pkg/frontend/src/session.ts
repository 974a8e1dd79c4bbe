// Client session: token kept in memory, mirrored to sessionStorage only (it
// dies with the tab; nothing secret ever reaches localStorage or a URL).

import { ApiClient } from "./api.js";
import type { Role } from "./types.js";

const TOKEN_KEY = "soc.token";
const ROLE_KEY = "soc.role";
const HANDLE_KEY = "soc.handle";

function storage(): Storage | null {
  try {
    return typeof sessionStorage === "undefined" ? null : sessionStorage;
  } catch {
    return null;
  }
}

export class ClientSession {
  role: Role | null = null;
  handle: string | null = null;
  remainingQuota: number | null = null;
  quotaLimit = 8;

  constructor(public api: ApiClient) {}

  restore(): boolean {
    const store = storage();
    if (!store) return false;
    const token = store.getItem(TOKEN_KEY);
    if (!token) return false;
    this.api.token = token;
    this.role = (store.getItem(ROLE_KEY) as Role) ?? null;
    this.handle = store.getItem(HANDLE_KEY);
    return true;
  }

  begin(token: string, role: Role, handle: string): void {
    this.api.token = token;
    this.role = role;
    this.handle = handle;
    const store = storage();
    if (store) {
      store.setItem(TOKEN_KEY, token);
      store.setItem(ROLE_KEY, role);
      store.setItem(HANDLE_KEY, handle);
    }
  }

  end(): void {
    this.api.token = null;
    this.role = null;
    this.handle = null;
    this.remainingQuota = null;
    const store = storage();
    if (store) {
      store.removeItem(TOKEN_KEY);
      store.removeItem(ROLE_KEY);
      store.removeItem(HANDLE_KEY);
    }
  }

  async refreshQuota(): Promise<void> {
    const status = await this.api.quota();
    this.remainingQuota = status.remaining;
    this.quotaLimit = status.limit;
  }
}
