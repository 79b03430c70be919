// Console session logic, kept free of DOM concerns so it is testable and the
// views stay dumb. Reloading the console loses nothing: every piece of state
// here is reconstructable from API reads.

import { ApiClient, ApiError } from "./api.js";
import type {
  AdaptationProposal,
  AdaptationRecord,
  CollaborationModel,
  DistanceReport,
  MatchResult,
  StageReport,
  ValidationFinding,
} from "./types.js";

export interface DashboardPoint {
  event: string;
  report: DistanceReport;
}

export interface DashboardState {
  points: DashboardPoint[];
  proposal: AdaptationProposal | null;
  dispatched: AdaptationRecord | null;
}

export class ConsoleSession {
  private historyCursor = 0;
  readonly dashboard: DashboardState = { points: [], proposal: null, dispatched: null };

  constructor(
    readonly api: ApiClient,
    private autoDispatch = false,
  ) {}

  // -- model editing -------------------------------------------------------

  async loadModel() {
    return this.api.getModel();
  }

  /** Save the edited model; returns server findings instead of throwing on 422. */
  async saveModel(
    model: CollaborationModel,
    version: string,
  ): Promise<{ saved: boolean; findings: ValidationFinding[] }> {
    try {
      await this.api.putModel(model, version);
      return { saved: true, findings: [] };
    } catch (err) {
      if (err instanceof ApiError && err.status === 422 && Array.isArray(err.detail)) {
        return { saved: false, findings: err.detail as ValidationFinding[] };
      }
      throw err;
    }
  }

  /** Open link proposals for unresolved concept refs in the model. */
  async linkProposals() {
    const { links } = await this.api.linkProposals();
    return links.proposals;
  }

  /** Confirm one proposal; the link lands on the model server-side. */
  async confirmLink(path: string, concept: string, kind = "near_by") {
    return this.api.confirmLink(path, concept, kind);
  }

  // -- pipeline ---------------------------------------------------------------

  async runStages(stages: string[]): Promise<StageReport[]> {
    const reports: StageReport[] = [];
    for (const stage of stages) {
      const { report } = await this.api.runStage(stage);
      reports.push(report);
    }
    return reports;
  }

  // -- match validation queue ----------------------------------------------------

  async pendingMatches(): Promise<MatchResult[]> {
    const { queue } = await this.api.matchQueue();
    return queue;
  }

  /** Accept a candidate; a stale queue item (resolved elsewhere) refreshes. */
  async accept(activity: string, candidate: number): Promise<MatchResult> {
    const resp = await this.api.validateMatch(activity, candidate);
    return resp.result;
  }

  /** Validate the whole queue by accepting each top candidate. */
  async validateAll(): Promise<string[]> {
    const validated: string[] = [];
    for (const item of await this.pendingMatches()) {
      if (item.candidates.length === 0) {
        continue; // uncovered: needs resolveUncovered instead
      }
      await this.accept(item.activity, 0);
      validated.push(item.activity);
    }
    return validated;
  }

  async requestGuiService(activity: string) {
    return this.api.resolveUncovered(activity, "generate_gui_service");
  }

  // -- dashboard ---------------------------------------------------------------

  /**
   * Pull new twin history, update the divergence series and surface the
   * proposal when the verdict fires. In auto mode the dispatch goes out
   * immediately; otherwise approveDispatch() is the human's call.
   */
  async pollDashboard(): Promise<DashboardState> {
    const { history, next } = await this.api.twinHistory(this.historyCursor);
    this.historyCursor = next;
    for (const entry of history) {
      this.dashboard.points.push({ event: entry.event, report: entry.report });
    }
    const latest = this.dashboard.points.at(-1);
    if (latest && latest.report.verdict) {
      const proposal = await this.api.proposal();
      this.dashboard.proposal = proposal.re_entry === "none" ? null : proposal;
      if (this.dashboard.proposal && this.autoDispatch && !this.dashboard.dispatched) {
        await this.approveDispatch();
      }
    } else {
      this.dashboard.proposal = null;
    }
    return this.dashboard;
  }

  async approveDispatch(): Promise<AdaptationRecord> {
    const proposal = this.dashboard.proposal;
    if (!proposal) {
      throw new Error("no adaptation proposal to approve");
    }
    const { record } = await this.api.dispatch(proposal.re_entry);
    this.dashboard.dispatched = record;
    this.dashboard.proposal = null;
    return record;
  }

  deferDispatch(): void {
    this.dashboard.proposal = null;
  }

  // -- human tasks ----------------------------------------------------------------

  async pausedInstances() {
    const { instances } = await this.api.instances();
    return instances.filter((i) => i.state === "paused_on_human_task");
  }

  async completeTask(instanceId: string, node: string, payload: Record<string, unknown>) {
    return this.api.completeHumanTask(instanceId, node, payload);
  }
}
