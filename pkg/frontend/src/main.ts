// SPA wiring: four tabs over one stateless session. The API base defaults to
// the serving origin and can be overridden with ?api=http://host:port.

import { ApiClient } from "./api.js";
import { ConsoleSession } from "./session.js";
import { DashboardView } from "./views/dashboard.js";
import { button, clear, el } from "./views/helpers.js";
import { InstancesView } from "./views/instances.js";
import { ModelView } from "./views/model.js";
import { QueueView } from "./views/queue.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "";
const autoDispatch = params.get("auto") === "1";

const api = new ApiClient(base);
const session = new ConsoleSession(api, autoDispatch);

const tabs = el("nav", { class: "tabs" });
const body = el("main", { class: "view" });
document.body.append(el("header", {}, [el("h1", {}, ["mediation console"])]), tabs, body);

const modelView = new ModelView(body, session);
const queueView = new QueueView(body, session);
const instancesView = new InstancesView(body, session);
const dashboardView = new DashboardView(body, session);

let pollTimer: number | undefined;

function activate(name: string): void {
  window.clearInterval(pollTimer);
  clear(body);
  if (name === "model") void modelView.refresh();
  if (name === "queue") {
    void queueView.refresh();
    pollTimer = window.setInterval(() => void queueView.refresh(), 3000);
  }
  if (name === "instances") {
    void instancesView.refresh();
    pollTimer = window.setInterval(() => void instancesView.refresh(), 2000);
  }
  if (name === "dashboard") {
    void dashboardView.poll();
    pollTimer = window.setInterval(() => void dashboardView.poll(), 1000);
  }
}

for (const name of ["model", "queue", "instances", "dashboard"]) {
  tabs.append(button(name, () => activate(name), "tab"));
}

activate("model");
