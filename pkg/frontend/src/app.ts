import { ApiClient, ApiError } from "./api.js";
import { readHighlight, renderHighlightedContext, renderPlainContext } from "./highlight.js";
import { hashText, SessionHistory } from "./history.js";
import type { ContextPreview } from "./types.js";

type ActiveContext =
  | { kind: "id"; id: string; text: string }
  | { kind: "pasted"; text: string };

const SKELETON = `
  <div class="banner" hidden>
    <span class="banner-message"></span>
    <button type="button" class="banner-retry">Retry</button>
  </div>
  <section class="picker">
    <h2>Contexts</h2>
    <p class="picker-empty" hidden>No dataset contexts available; paste your own text below.</p>
    <ul class="context-list"></ul>
    <textarea class="paste-area" rows="4" placeholder="...or paste a context here"></textarea>
    <button type="button" class="use-paste">Use pasted text</button>
  </section>
  <section class="reading">
    <h2>Context</h2>
    <div class="context-view" lang="bn"></div>
    <p class="answer-meta" hidden></p>
  </section>
  <section class="asking">
    <input class="question-input" type="text" lang="bn" placeholder="Ask a question" />
    <button type="button" class="ask-button">Ask</button>
    <p class="validation" role="alert" hidden></p>
    <p class="error" role="alert" hidden></p>
  </section>
  <section class="past">
    <h2>History</h2>
    <ol class="history-list"></ol>
  </section>
`;

export interface ConsoleApp {
  refreshContexts(): Promise<void>;
  selectContext(id: string): void;
  usePastedText(): void;
  ask(): Promise<void>;
  readonly history: SessionHistory;
}

export function createConsole(mount: HTMLElement, client: ApiClient): ConsoleApp {
  mount.innerHTML = SKELETON; // static skeleton; all data goes in via text nodes
  const el = {
    banner: mount.querySelector<HTMLElement>(".banner")!,
    bannerMessage: mount.querySelector<HTMLElement>(".banner-message")!,
    bannerRetry: mount.querySelector<HTMLButtonElement>(".banner-retry")!,
    pickerEmpty: mount.querySelector<HTMLElement>(".picker-empty")!,
    contextList: mount.querySelector<HTMLElement>(".context-list")!,
    pasteArea: mount.querySelector<HTMLTextAreaElement>(".paste-area")!,
    usePaste: mount.querySelector<HTMLButtonElement>(".use-paste")!,
    contextView: mount.querySelector<HTMLElement>(".context-view")!,
    answerMeta: mount.querySelector<HTMLElement>(".answer-meta")!,
    questionInput: mount.querySelector<HTMLInputElement>(".question-input")!,
    askButton: mount.querySelector<HTMLButtonElement>(".ask-button")!,
    validation: mount.querySelector<HTMLElement>(".validation")!,
    error: mount.querySelector<HTMLElement>(".error")!,
    historyList: mount.querySelector<HTMLElement>(".history-list")!,
  };

  const history = new SessionHistory();
  let known: readonly ContextPreview[] = [];
  let active: ActiveContext | null = null;
  let pending = false;

  function say(target: HTMLElement, message: string | null): void {
    target.hidden = message === null;
    target.textContent = message ?? "";
  }

  function renderContextList(): void {
    el.pickerEmpty.hidden = known.length > 0;
    el.contextList.replaceChildren(
      ...known.map((preview) => {
        const item = document.createElement("li");
        const button = document.createElement("button");
        button.type = "button";
        button.className = "context-choice";
        button.dataset.contextId = preview.id;
        button.textContent = `${preview.id} — ${preview.preview}`;
        button.addEventListener("click", () => selectContext(preview.id));
        item.append(button);
        return item;
      }),
    );
  }

  function renderHistory(): void {
    el.historyList.replaceChildren(
      ...history.all().map((entry) => {
        const item = document.createElement("li");
        const button = document.createElement("button");
        button.type = "button";
        button.className = "history-row";
        button.textContent = `${entry.question} → ${entry.answerText} (${entry.score.toFixed(2)})`;
        button.addEventListener("click", () => {
          el.questionInput.value = entry.question;
          el.questionInput.focus();
        });
        item.append(button);
        return item;
      }),
    );
  }

  async function refreshContexts(): Promise<void> {
    el.banner.hidden = true;
    try {
      known = await client.contexts();
    } catch (err) {
      el.banner.hidden = false;
      el.bannerMessage.textContent =
        err instanceof ApiError
          ? `Could not list contexts: ${err.message}`
          : "Service unreachable.";
      return;
    }
    renderContextList();
  }

  function selectContext(id: string): void {
    const found = known.find((c) => c.id === id);
    if (!found) {
      say(el.error, `Unknown context ${id}`);
      return;
    }
    active = { kind: "id", id: found.id, text: found.text };
    renderPlainContext(el.contextView, found.text);
    say(el.answerMeta, null);
    say(el.error, null);
    say(el.validation, null);
  }

  function usePastedText(): void {
    const text = el.pasteArea.value;
    if (!text.trim()) {
      say(el.validation, "Paste some text first.");
      return;
    }
    // NFC for display; the service echoes its canonical form on the first answer
    active = { kind: "pasted", text };
    renderPlainContext(el.contextView, text.normalize("NFC"));
    say(el.answerMeta, null);
    say(el.error, null);
    say(el.validation, null);
  }

  async function ask(): Promise<void> {
    if (pending) {
      return;
    }
    const question = el.questionInput.value.trim();
    if (!question) {
      say(el.validation, "Type a question first.");
      return;
    }
    if (!active) {
      say(el.validation, "Pick or paste a context first.");
      return;
    }
    say(el.validation, null);
    say(el.error, null);
    pending = true;
    el.askButton.disabled = true;
    try {
      const response = await client.answer(
        active.kind === "id"
          ? { question, context_id: active.id }
          : { question, context: active.text },
      );
      const top = response.answers[0];
      if (!top) {
        say(el.error, "The service returned no answer.");
        return;
      }
      renderHighlightedContext(el.contextView, response.context, top.char_start, top.char_end);
      say(
        el.answerMeta,
        `answer: ${top.text} · span [${top.char_start}, ${top.char_end}) · ` +
          `score ${top.score.toFixed(3)} · model ${response.model_id} · ` +
          `${response.latency_ms.toFixed(0)} ms`,
      );
      history.add({
        question,
        answerText: top.text,
        charStart: top.char_start,
        charEnd: top.char_end,
        score: top.score,
        timestamp: Date.now(),
        contextRef: active.kind === "id" ? active.id : `pasted:${hashText(active.text)}`,
      });
      renderHistory();
    } catch (err) {
      say(el.error, err instanceof ApiError ? err.message : "Service unreachable.");
    } finally {
      pending = false;
      el.askButton.disabled = false;
    }
  }

  el.bannerRetry.addEventListener("click", () => void refreshContexts());
  el.usePaste.addEventListener("click", usePastedText);
  el.askButton.addEventListener("click", () => void ask());
  el.questionInput.addEventListener("keydown", (event) => {
    if ((event as KeyboardEvent).key === "Enter") {
      void ask();
    }
  });

  return { refreshContexts, selectContext, usePastedText, ask, history };
}

export { readHighlight };
