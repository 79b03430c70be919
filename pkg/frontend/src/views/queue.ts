// Match validation queue: accept a candidate, pick an alternative, or ask
// for a generated form service for uncovered activities. Compile stays
// blocked until the queue is empty.

import type { ConsoleSession } from "../session.js";
import type { MatchResult } from "../types.js";
import { button, clear, el } from "./helpers.js";

export class QueueView {
  constructor(
    private root: HTMLElement,
    private session: ConsoleSession,
  ) {}

  async refresh(): Promise<void> {
    const queue = await this.session.pendingMatches();
    this.render(queue);
  }

  private render(queue: MatchResult[]): void {
    clear(this.root);
    this.root.append(el("h2", {}, [`Match queue (${queue.length})`]));
    if (!queue.length) {
      this.root.append(el("p", {}, ["Queue empty: compile is unblocked."]));
      return;
    }
    for (const item of queue) {
      const card = el("div", { class: "match" }, [
        el("strong", {}, [`${item.activity}`]),
        el("span", { class: "status" }, [` ${item.status}`]),
      ]);
      const list = el("ol", {});
      item.candidates.forEach((candidate, index) => {
        const row = el("li", {}, [
          `score ${candidate.score.toFixed(3)} (${candidate.source}) — ${candidate.services.join(" + ")} `,
        ]);
        row.append(button("accept", () => void this.accept(item.activity, index)));
        list.append(row);
      });
      card.append(list);
      if (!item.candidates.length) {
        card.append(button("generate form service",
          () => void this.generateGui(item.activity)));
      }
      this.root.append(card);
    }
    this.root.append(button("accept all top candidates", () => void this.acceptAll(), "btn primary"));
  }

  private async accept(activity: string, candidate: number): Promise<void> {
    await this.session.accept(activity, candidate);
    await this.refresh(); // stale items vanish on refresh
  }

  private async acceptAll(): Promise<void> {
    await this.session.validateAll();
    await this.refresh();
  }

  private async generateGui(activity: string): Promise<void> {
    await this.session.requestGuiService(activity);
    await this.refresh();
  }
}
