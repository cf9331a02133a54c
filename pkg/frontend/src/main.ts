/** Browser entry point: start form, then hand off to App. */

import { ApiClient } from "./api.js";
import { App } from "./app.js";
import { renderError, renderStartForm } from "./render.js";

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");

  const params = new URLSearchParams(window.location.search);
  const defaults = {
    baseUrl: params.get("service") ?? window.location.origin,
    studyId: params.get("study") ?? "s1",
  };
  root.innerHTML = renderStartForm(defaults);

  const form = document.getElementById("start-form") as HTMLFormElement;
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const data = new FormData(form);
    const baseUrl = (data.get("baseUrl") as string).replace(/\/$/, "");
    const studyId = (data.get("studyId") as string).trim();
    const raterId = (data.get("raterId") as string).trim();
    const sessionId = (data.get("sessionId") as string).trim();

    const api = new ApiClient(baseUrl);
    const app = new App(api, root, window.localStorage);
    const stored = raterId
      ? window.localStorage.getItem(`noduleforge.session.${studyId}.${raterId}`)
      : null;

    const go = sessionId
      ? app.start(sessionId)
      : stored
        ? app.start(stored)
        : app.startNew(studyId, raterId);
    go.catch((err) => {
      root.insertAdjacentHTML("beforeend", renderError(String(err)));
    });
  });
}

boot();
