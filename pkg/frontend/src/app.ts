/**
 * Single-page oracle console.
 *
 * Shows the target image and description for the active session, surfaces
 * the pending question, and posts the human's answers back to the bridge.
 * One active session per tab; transport is polling only.
 */

import { BridgeClient, ConflictError, normalizeAnswer, SessionState } from "./api.js";
import { Poller, startPolling } from "./poller.js";

export interface AppOptions {
  baseUrl: string;
  token?: string;
  pollIntervalMs?: number;
}

const WAITING_TEXT = "Waiting for the next question…";

export class ConsoleApp {
  readonly client: BridgeClient;
  private readonly root: HTMLElement;
  private poller?: Poller;
  private sessionId?: string;
  private submitting = false;

  private banner!: HTMLElement;
  private status!: HTMLElement;
  private description!: HTMLElement;
  private target!: HTMLImageElement;
  private progress!: HTMLElement;
  private transcript!: HTMLUListElement;
  private question!: HTMLElement;
  private form!: HTMLFormElement;
  private input!: HTMLTextAreaElement;
  private submitButton!: HTMLButtonElement;
  private inputError!: HTMLElement;

  constructor(root: HTMLElement, options: AppOptions) {
    this.root = root;
    this.client = new BridgeClient(options.baseUrl, options.token);
    this.render();
    this.poller = startPolling(() => this.tick(), {
      intervalMs: options.pollIntervalMs ?? 1000,
      onError: (_error, nextDelayMs) => {
        this.status.textContent =
          `Connection lost — retrying in ${Math.round(nextDelayMs / 1000)}s`;
      },
    });
  }

  stop(): void {
    this.poller?.stop();
  }

  private render(): void {
    this.root.innerHTML = `
      <div class="console">
        <div class="banner" hidden></div>
        <div class="status"></div>
        <section class="task">
          <img class="target" alt="target object" hidden>
          <p class="description"></p>
          <p class="progress"></p>
        </section>
        <ul class="transcript"></ul>
        <p class="question">${WAITING_TEXT}</p>
        <form class="answer-form">
          <textarea class="answer-input" rows="2"
            placeholder="Type your answer" disabled></textarea>
          <button type="submit" class="submit-btn" disabled>Send answer</button>
        </form>
        <div class="input-error" hidden></div>
      </div>`;
    this.banner = this.root.querySelector(".banner")!;
    this.status = this.root.querySelector(".status")!;
    this.description = this.root.querySelector(".description")!;
    this.target = this.root.querySelector(".target")!;
    this.progress = this.root.querySelector(".progress")!;
    this.transcript = this.root.querySelector(".transcript")!;
    this.question = this.root.querySelector(".question")!;
    this.form = this.root.querySelector(".answer-form")!;
    this.input = this.root.querySelector(".answer-input")!;
    this.submitButton = this.root.querySelector(".submit-btn")!;
    this.inputError = this.root.querySelector(".input-error")!;
    this.form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit();
    });
  }

  /** One poll: find the active session and mirror its state into the DOM. */
  private async tick(): Promise<void> {
    const sessions = await this.client.listSessions();
    const active =
      sessions.find((s) => s.state === "awaiting_answer") ??
      sessions.filter((s) => s.state !== "done").pop() ??
      sessions[sessions.length - 1];
    this.status.textContent = "";
    if (!active) {
      this.question.textContent = "No active session.";
      this.setInputEnabled(false);
      return;
    }
    const state = await this.client.getSession(active.id);
    this.applyState(state);
  }

  private applyState(state: SessionState): void {
    if (state.id !== this.sessionId) {
      this.sessionId = state.id;
      this.target.src = this.client.targetUrl(state.id);
      this.target.hidden = false;
      this.clearBanner();
    }
    this.description.textContent = state.description;
    this.progress.textContent = state.progress ?? "";
    this.transcript.innerHTML = "";
    for (const [q, a] of state.transcript) {
      const item = document.createElement("li");
      item.textContent = `${q} — ${a}`;
      this.transcript.appendChild(item);
    }
    if (state.pending_question && !this.submitting) {
      this.question.textContent = state.pending_question;
      this.setInputEnabled(true);
    } else if (state.state === "done") {
      this.question.textContent = "Session finished. Thank you!";
      this.setInputEnabled(false);
    } else if (!this.submitting) {
      this.question.textContent = WAITING_TEXT;
      this.setInputEnabled(false);
    }
  }

  private setInputEnabled(enabled: boolean): void {
    this.input.disabled = !enabled;
    this.submitButton.disabled = !enabled;
  }

  private showInputError(message: string): void {
    this.inputError.textContent = message;
    this.inputError.hidden = false;
  }

  private showBanner(message: string): void {
    this.banner.textContent = message;
    this.banner.hidden = false;
  }

  private clearBanner(): void {
    this.banner.textContent = "";
    this.banner.hidden = true;
    this.inputError.hidden = true;
  }

  private async submit(): Promise<void> {
    if (!this.sessionId || this.submitting) return;
    const answer = normalizeAnswer(this.input.value);
    if (!answer) {
      // never let an empty answer reach the bridge
      this.showInputError("Answer cannot be empty.");
      return;
    }
    this.clearBanner();
    this.submitting = true;
    this.setInputEnabled(false);
    try {
      await this.client.submitAnswer(this.sessionId, answer);
      this.input.value = "";
      this.question.textContent = WAITING_TEXT;
    } catch (error) {
      if (error instanceof ConflictError) {
        // stale question: keep the typed text so nothing is lost
        this.showBanner("That question is no longer pending — refreshing.");
        this.setInputEnabled(true);
      } else {
        this.showBanner(`Could not send the answer: ${String(error)}`);
        this.setInputEnabled(true);
      }
    } finally {
      this.submitting = false;
    }
  }
}

export function mountConsole(root: HTMLElement, options: AppOptions): ConsoleApp {
  return new ConsoleApp(root, options);
}
