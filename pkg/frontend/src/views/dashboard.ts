// Twin divergence dashboard: per-category distance over time plus the
// adaptation proposal with approve/defer controls. Rendering is a plain
// bar-per-sample strip so the view works without a chart dependency.

import type { ConsoleSession, DashboardState } from "../session.js";
import { button, clear, el } from "./helpers.js";

const CATEGORIES = ["situation", "network", "execution"] as const;

export class DashboardView {
  constructor(
    private root: HTMLElement,
    private session: ConsoleSession,
  ) {}

  async poll(): Promise<void> {
    const state = await this.session.pollDashboard();
    this.render(state);
  }

  private render(state: DashboardState): void {
    clear(this.root);
    this.root.append(el("h2", {}, ["Twin divergence"]));

    for (const category of CATEGORIES) {
      const strip = el("div", { class: "strip" }, [el("span", { class: "label" }, [category])]);
      for (const point of state.points.slice(-60)) {
        const value = point.report.per_category[category] ?? 0;
        const bar = el("span", {
          class: "bar",
          style: `height:${Math.round(value * 40) + 2}px`,
          title: `${point.event}: ${value.toFixed(3)}`,
        });
        strip.append(bar);
      }
      this.root.append(strip);
    }

    const latest = state.points.at(-1);
    if (latest) {
      this.root.append(el("p", {}, [
        `total ${latest.report.total.toFixed(3)} / threshold ${latest.report.threshold} `,
        latest.report.verdict ? "— divergence over threshold" : "— nominal",
      ]));
    }

    if (state.dispatched) {
      this.root.append(el("p", { class: "dispatched" }, [
        `adaptation dispatched: ${state.dispatched.re_entry} (${state.dispatched.state})`,
      ]));
    }

    if (state.proposal) {
      const box = el("div", { class: "proposal" }, [
        el("strong", {}, ["Adaptation proposed: "]),
        el("code", {}, [state.proposal.re_entry]),
        el("span", {}, [` (dominant: ${state.proposal.report.dominant})`]),
      ]);
      box.append(
        button("approve", () => void this.approve(), "btn primary"),
        button("defer", () => {
          this.session.deferDispatch();
          this.render(this.session.dashboard);
        }),
      );
      this.root.append(box);
    }
  }

  private async approve(): Promise<void> {
    await this.session.approveDispatch();
    this.render(this.session.dashboard);
  }
}
