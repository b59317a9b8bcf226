/** Bootstrap: token/URL form, then the console. */

import { AgentApi } from "./api.js";
import { ConsoleStore } from "./store.js";
import { mountConsole } from "./ui.js";

function isLoopback(url: string): boolean {
  try {
    const parsed = new URL(url);
    return parsed.hostname === "127.0.0.1" || parsed.hostname === "localhost";
  } catch {
    return false;
  }
}

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");

  const form = document.createElement("form");
  form.className = "connect-form";
  form.innerHTML = `
    <h1>pqe console</h1>
    <label>agent URL <input name="url" value="http://127.0.0.1:8777" /></label>
    <label>token <input name="token" type="password" autocomplete="off" /></label>
    <button type="submit">connect</button>
    <p class="hint">The token is printed by the agent at startup. Only loopback
    agent URLs are accepted; the console talks to no other origin.</p>
    <p class="error hidden"></p>
  `;
  root.append(form);
  const errorLine = form.querySelector(".error") as HTMLParagraphElement;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const data = new FormData(form);
    const url = String(data.get("url") ?? "");
    const token = String(data.get("token") ?? "");
    if (!isLoopback(url)) {
      errorLine.textContent = "agent URL must be loopback (127.0.0.1 or localhost)";
      errorLine.classList.remove("hidden");
      return;
    }
    const store = new ConsoleStore();
    mountConsole(root, store);
    void store.connect(new AgentApi(url, token));
    store.subscribe((state) => {
      if (state.phase === "unauthorized") {
        // fall back to the token prompt
        setTimeout(() => {
          store.close();
          boot();
        }, 0);
      }
    });
  });
}

boot();
