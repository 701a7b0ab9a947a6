import { PlayServiceClient, ServiceError } from "./api";
import { buildBanditViewModel, renderBandit, SubmitGuard } from "./banditView";
import { buildBlocksViewModel, renderBlocks } from "./blocksView";
import type { BanditState, BlocksState, SessionState } from "./types";

const SESSION_KEY = "coopconv.session";

interface StoredSession {
  sessionId: string;
  env: "bandit" | "blocks";
}

export function storedSession(storage: Storage): StoredSession | null {
  const raw = storage.getItem(SESSION_KEY);
  if (!raw) return null;
  try {
    const parsed = JSON.parse(raw) as StoredSession;
    return parsed.sessionId ? parsed : null;
  } catch {
    return null;
  }
}

export function rememberSession(storage: Storage, session: StoredSession): void {
  storage.setItem(SESSION_KEY, JSON.stringify(session));
}

export function forgetSession(storage: Storage): void {
  storage.removeItem(SESSION_KEY);
}

export class App {
  private readonly guard = new SubmitGuard();
  private state: SessionState | null = null;
  private sessionId = "";
  private pollTimer: number | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: PlayServiceClient,
    private readonly storage: Storage,
  ) {}

  async start(): Promise<void> {
    const previous = storedSession(this.storage);
    if (previous) {
      try {
        this.sessionId = previous.sessionId;
        this.state = await this.client.getState(previous.sessionId);
        this.render();
        return;
      } catch (err) {
        if (!(err instanceof ServiceError && err.status === 404)) throw err;
        forgetSession(this.storage);
      }
    }
    this.renderLobby();
  }

  async newSession(env: "bandit" | "blocks", options: Record<string, unknown>): Promise<void> {
    const created = await this.client.createSession({ env, ...options } as never);
    this.sessionId = created.session_id;
    this.state = created.state;
    rememberSession(this.storage, { sessionId: this.sessionId, env });
    this.render();
  }

  async submit(action: number): Promise<void> {
    if (!this.guard.tryAcquire()) return;     // block double submits client-side
    try {
      const outcome = await this.client.submitAction(this.sessionId, action);
      this.state = outcome.state;
    } finally {
      this.guard.release();
    }
    this.render();
  }

  private renderLobby(): void {
    this.root.innerHTML = [
      `<section class="lobby">`,
      `<h1>Play with a trained partner</h1>`,
      `<button id="start-study">Start study protocol (bandit)</button>`,
      `<button id="start-blocks">Start block placing (you are P2)</button>`,
      `</section>`,
    ].join("");
    this.root.querySelector("#start-study")?.addEventListener("click", () => {
      void this.newSession("bandit", { protocol: "study", scripted_partner: "bandit-fixed-0" });
    });
    this.root.querySelector("#start-blocks")?.addEventListener("click", () => {
      void this.newSession("blocks", { scripted_partner: "blocks-perm-0", human_seat: 1 });
    });
  }

  private render(): void {
    if (!this.state) return;
    if (this.state.env === "bandit") {
      const vm = buildBanditViewModel(this.state as BanditState);
      this.root.innerHTML = renderBandit(vm);
      this.root.querySelectorAll<HTMLButtonElement>("button.arm").forEach((btn) => {
        btn.addEventListener("click", () => void this.submit(Number(btn.dataset.arm)));
      });
    } else {
      const vm = buildBlocksViewModel(this.state as BlocksState);
      this.root.innerHTML = renderBlocks(vm);
      this.root.querySelectorAll<HTMLButtonElement>("button.palette").forEach((btn) => {
        btn.addEventListener("click", () => void this.submit(Number(btn.dataset.action)));
      });
      this.scheduleAgentPoll(vm.awaiting === "partner is moving");
    }
    if (this.state.done) forgetSession(this.storage);
  }

  private scheduleAgentPoll(agentMoving: boolean): void {
    if (this.pollTimer !== null) {
      clearTimeout(this.pollTimer);
      this.pollTimer = null;
    }
    if (!agentMoving) return;
    this.pollTimer = setTimeout(() => {
      void this.client.getState(this.sessionId).then((state) => {
        this.state = state;
        this.render();
      });
    }, 400) as unknown as number;
  }
}

export function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const app = new App(root, new PlayServiceClient(""), window.localStorage);
  void app.start();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot();
}
