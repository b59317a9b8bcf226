/** DOM rendering: the UI is a function of ConsoleStore state. */

import { ConsoleStore, renderEventText } from "./store.js";
import type { ConsoleState } from "./store.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function mountConsole(root: HTMLElement, store: ConsoleStore): void {
  root.innerHTML = "";
  const header = el("header", "header");
  const banner = el("div", "banner hidden");
  const main = el("main", "main");
  const peersPane = el("aside", "peers");
  const timelinePane = el("section", "timeline");
  const inputRow = el("form", "input-row") as HTMLFormElement;
  const peerInput = el("input", "peer-input") as HTMLInputElement;
  peerInput.placeholder = "peer";
  const textInput = el("input", "text-input") as HTMLInputElement;
  textInput.placeholder = "type a message";
  const sendButton = el("button", "send", "send") as HTMLButtonElement;
  inputRow.append(peerInput, textInput, sendButton);
  const dialogBackdrop = el("div", "dialog-backdrop hidden");
  main.append(peersPane, timelinePane);
  root.append(header, banner, main, inputRow, dialogBackdrop);

  inputRow.addEventListener("submit", (event) => {
    event.preventDefault();
    const peer = peerInput.value.trim();
    const text = textInput.value;
    if (!peer || !text) return;
    void store.send(peer, text);
    textInput.value = "";
  });

  const render = (state: ConsoleState) => {
    header.textContent = state.identity
      ? `${state.identity.name} · ${state.identity.fingerprint_display}`
      : "pqe console";

    if (state.phase === "offline") {
      banner.textContent = `agent unreachable, retrying… ${state.lastError ?? ""}`;
      banner.classList.remove("hidden");
    } else if (state.phase === "unauthorized") {
      banner.textContent = "unauthorized: check the bearer token";
      banner.classList.remove("hidden");
    } else if (!state.agentOnline) {
      banner.textContent = "agent lost its relay connection; messages may queue";
      banner.classList.remove("hidden");
    } else {
      banner.classList.add("hidden");
    }

    peersPane.innerHTML = "";
    peersPane.append(el("h2", undefined, "pinned peers"));
    for (const peer of state.peers) {
      const row = el("div", "peer-row");
      row.append(
        el("span", "peer-name", peer.name),
        el("code", "peer-fp", peer.fingerprint_display),
      );
      row.addEventListener("click", () => {
        peerInput.value = peer.name;
        textInput.focus();
      });
      peersPane.append(row);
    }

    timelinePane.innerHTML = "";
    for (const entry of state.timeline) {
      const row = el(
        "div",
        `row ${entry.direction}${entry.failure ? " failure" : ""}${entry.pending ? " pending" : ""}`,
      );
      row.textContent = renderEventText(entry);
      timelinePane.append(row);
    }
    timelinePane.scrollTop = timelinePane.scrollHeight;

    dialogBackdrop.innerHTML = "";
    if (state.repinDialog) {
      const dialog = el("div", "dialog");
      dialog.append(
        el("h3", undefined, `key change for ${state.repinDialog.peer}`),
        el("p", "warn", "The relay is serving a DIFFERENT key for this peer. " +
          "Verify out of band before trusting it."),
        el("p", undefined, "pinned:"),
        el("code", undefined, state.repinDialog.pinned),
        el("p", undefined, "now served:"),
        el("code", undefined, state.repinDialog.fetched),
      );
      const actions = el("div", "dialog-actions");
      const cancel = el("button", undefined, "keep old pin (block sending)");
      cancel.addEventListener("click", () => store.cancelRepin());
      const accept = el("button", "danger", "re-pin to new key");
      accept.addEventListener("click", () => void store.confirmRepin());
      actions.append(cancel, accept);
      dialog.append(actions);
      dialogBackdrop.append(dialog);
      dialogBackdrop.classList.remove("hidden");
    } else {
      dialogBackdrop.classList.add("hidden");
    }
  };

  store.subscribe(render);
}
