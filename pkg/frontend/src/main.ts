import { ApiClient } from "./api.js";
import { App } from "./app.js";

function apiBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("api") ?? "";
}

document.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (!root) return;
  const app = new App(root, new ApiClient(apiBase()));
  void app.init().catch((err) => {
    const bar = document.getElementById("status-bar");
    if (bar) bar.textContent = `error: ${(err as Error).message}`;
  });
});
