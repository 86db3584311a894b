// Entry point: configuration comes from the query string so the page can
// be served as a static file next to the labeling service.
//
//   index.html?labeler=alice&split=train&base=http://127.0.0.1:8765&token=...

import { LabelsApi } from "./api.js";
import { mount } from "./dom.js";
import { LabelingSession } from "./session.js";

function boot(): void {
  const root = document.getElementById("app");
  if (root === null) throw new Error("missing #app element");
  const params = new URLSearchParams(window.location.search);
  const labeler = params.get("labeler");
  const split = params.get("split") ?? "train";
  if (labeler === null || labeler === "") {
    root.textContent = "Add ?labeler=<your name> to the URL to start labeling.";
    return;
  }
  const api = new LabelsApi({
    baseUrl: params.get("base") ?? "",
    token: params.get("token") ?? undefined,
  });
  const session = new LabelingSession(api, labeler, split);
  mount(session, root);
  void session.start();
}

boot();
