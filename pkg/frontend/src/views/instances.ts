// Running instances: live states plus a small form to complete the human
// task an instance is paused on.

import type { ConsoleSession } from "../session.js";
import { button, clear, el } from "./helpers.js";

export class InstancesView {
  constructor(
    private root: HTMLElement,
    private session: ConsoleSession,
  ) {}

  async refresh(): Promise<void> {
    const { instances } = await this.session.api.instances();
    clear(this.root);
    this.root.append(el("h2", {}, [`Instances (${instances.length})`]));
    const table = el("table", { class: "instances" });
    table.append(el("tr", {}, [
      el("th", {}, ["id"]), el("th", {}, ["workflow"]),
      el("th", {}, ["state"]), el("th", {}, [""]),
    ]));
    for (const inst of instances) {
      const actions = el("td", {});
      if (inst.state === "paused_on_human_task" && inst.waiting_node) {
        const payloadInput = el("input", { placeholder: '{"field": "value"}' });
        actions.append(
          el("span", {}, [`waiting on ${inst.waiting_node} `]),
          payloadInput,
          button("complete", () => {
            void this.complete(inst.id, inst.waiting_node as string, payloadInput.value);
          }),
        );
      }
      if (inst.state === "running" || inst.state === "paused_on_human_task") {
        actions.append(button("interrupt", () => void this.interrupt(inst.id)));
      }
      table.append(el("tr", {}, [
        el("td", {}, [inst.id]), el("td", {}, [inst.workflow]),
        el("td", { class: `state-${inst.state}` }, [inst.state]), actions,
      ]));
    }
    this.root.append(table);
  }

  private async complete(id: string, node: string, payloadText: string): Promise<void> {
    let payload: Record<string, unknown>;
    try {
      payload = JSON.parse(payloadText || "{}");
    } catch {
      return;
    }
    await this.session.completeTask(id, node, payload);
    await this.refresh();
  }

  private async interrupt(id: string): Promise<void> {
    await this.session.api.interrupt(id);
    await this.refresh();
  }
}
