/**
 * DOM binding: renders the session into a root element and wires buttons
 * and keys to session methods. Rendering is a full redraw from the session
 * view, so a page refresh loses nothing; the queue position always comes
 * back from the server.
 */

import { actionForKey, keyForReason } from "./keyboard.js";
import type { LabelingSession } from "./session.js";
import { EXCLUSION_REASONS } from "./types.js";

function reasonLabel(reason: string): string {
  return reason.replace(/_/g, " ");
}

export function mount(session: LabelingSession, root: HTMLElement): () => void {
  const doc = root.ownerDocument;

  root.innerHTML = `
    <header>
      <span data-role="progress"></span>
      <span data-role="pending" hidden></span>
    </header>
    <div data-role="error" hidden></div>
    <section data-role="card" hidden>
      <h2 data-role="title"></h2>
      <p data-role="abstract"></p>
      <p data-role="status"></p>
      <div data-role="buttons"></div>
    </section>
    <section data-role="done" hidden>
      <p>Queue finished. Every record in this split is labeled.</p>
    </section>
    <section data-role="offline" hidden>
      <p>Connection lost. Press r to retry.</p>
    </section>
  `;

  const el = <T extends HTMLElement>(role: string): T => {
    const node = root.querySelector<T>(`[data-role="${role}"]`);
    if (node === null) throw new Error(`missing element ${role}`);
    return node;
  };

  const buttons = el<HTMLDivElement>("buttons");
  const include = doc.createElement("button");
  include.dataset["action"] = "include";
  include.textContent = "Include (Enter)";
  include.addEventListener("click", () => void session.labelInclude());
  buttons.appendChild(include);
  for (const reason of EXCLUSION_REASONS) {
    const button = doc.createElement("button");
    button.dataset["action"] = "exclude";
    button.dataset["reason"] = reason;
    button.textContent = `${keyForReason(reason)} ${reasonLabel(reason)}`;
    button.addEventListener("click", () => void session.labelExclude(reason));
    buttons.appendChild(button);
  }
  const undo = doc.createElement("button");
  undo.dataset["action"] = "undo";
  undo.textContent = "Undo last (u)";
  undo.addEventListener("click", () => void session.undoLast());
  buttons.appendChild(undo);

  let renderSeq = 0;
  const render = (): void => {
    const view = session.view();
    el("card").hidden = view.phase !== "item";
    el("done").hidden = view.phase !== "done";
    el("offline").hidden = view.phase !== "disconnected";
    el("error").hidden = view.error === null;
    el("error").textContent = view.error ?? "";
    el("pending").hidden = view.pendingRetries === 0;
    el("pending").textContent =
      view.pendingRetries > 0 ? `${view.pendingRetries} submission(s) queued for retry` : "";
    undo.disabled = !view.canUndo;
    if (view.item !== null) {
      el("title").textContent = view.item.title;
      el("abstract").textContent = view.item.abstract;
      el("status").textContent =
        `record ${view.item.position + 1}, ${view.item.remaining} left in ${view.item.split}`;
    }
    const seq = ++renderSeq;
    void session
      .progressView()
      .then((progress) => {
        if (seq !== renderSeq) return; // a newer render owns the element now
        el("progress").textContent = `${progress.labeled}/${progress.total} labeled`;
      })
      .catch(() => {
        // offline; the banner already says so
      });
  };

  const onKey = (event: KeyboardEvent): void => {
    const target = event.target as HTMLElement | null;
    if (target !== null && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
    const action = actionForKey(event.key);
    if (action === null) return;
    event.preventDefault();
    switch (action.kind) {
      case "include":
        void session.labelInclude();
        break;
      case "exclude":
        void session.labelExclude(action.reason);
        break;
      case "undo":
        session.undoLast();
        break;
      case "retry":
        void session.flushRetries();
        break;
    }
  };

  const unsubscribe = session.onChange(render);
  doc.addEventListener("keydown", onKey);
  render();
  return () => {
    unsubscribe();
    doc.removeEventListener("keydown", onKey);
  };
}
