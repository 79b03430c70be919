// Thin fetch client over the engine's HTTP API. Every console action maps
// 1:1 to one documented endpoint; the console holds no authoritative state.

import type {
  AdaptationProposal,
  AdaptationRecord,
  CollaborationModel,
  DistanceReport,
  EventInput,
  InstanceDetail,
  InstanceSummary,
  MatchResult,
  StageReport,
  TwinHistoryEntry,
  Versioned,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(`API error ${status}: ${JSON.stringify(detail)}`);
  }
}

export class ApiClient {
  constructor(
    private base: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T extends Versioned>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const resp = await this.fetchImpl(`${this.base}${path}`, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let payload: unknown = null;
    try {
      payload = await resp.json();
    } catch {
      payload = null;
    }
    if (!resp.ok) {
      const detail =
        payload && typeof payload === "object" && "detail" in payload
          ? (payload as { detail: unknown }).detail
          : payload;
      throw new ApiError(resp.status, detail);
    }
    const versioned = payload as T;
    if (!versioned || versioned.schema_version !== 1) {
      throw new ApiError(500, "response missing schema_version 1");
    }
    return versioned;
  }

  health() {
    return this.request<Versioned & { status: string }>("GET", "/health");
  }

  // -- model --------------------------------------------------------------

  getModel() {
    return this.request<Versioned & { model: CollaborationModel; version: string }>(
      "GET",
      "/model",
    );
  }

  async putModel(model: CollaborationModel, version: string) {
    return this.request<Versioned & { version: string }>("PUT", "/model", {
      model,
      version,
    });
  }

  linkProposals() {
    return this.request<
      Versioned & {
        links: {
          resolved: [string, string, string][];
          proposals: {
            path: string;
            concept: string;
            candidates: { concept: string; kind: string; label_score: number; semantic_score: number }[];
          }[];
        };
      }
    >("GET", "/links/proposals");
  }

  confirmLink(path: string, concept: string, kind = "near_by") {
    return this.request<Versioned & { path: string; resolved: string; version: string }>(
      "POST",
      "/links/confirm",
      { path, concept, kind },
    );
  }

  // -- pipeline -----------------------------------------------------------

  runStage(stage: string, input?: Record<string, unknown>) {
    return this.request<Versioned & { report: StageReport }>(
      "POST",
      `/pipeline/${stage}`,
      input === undefined ? {} : { input },
    );
  }

  report(stage: string) {
    return this.request<Versioned & { report: StageReport }>("GET", `/reports/${stage}`);
  }

  cartography() {
    return this.request<Versioned & { cartography: unknown }>("GET", "/cartography");
  }

  // -- matching -----------------------------------------------------------

  matchQueue() {
    return this.request<Versioned & { queue: MatchResult[]; all: MatchResult[] }>(
      "GET",
      "/match/queue",
    );
  }

  validateMatch(activity: string, candidate: number) {
    return this.request<Versioned & { result: MatchResult; stale: boolean }>(
      "POST",
      `/match/${activity}/validate`,
      { candidate },
    );
  }

  resolveUncovered(activity: string, choice: string) {
    return this.request<
      Versioned & { service?: { id: string; endpoint: string }; deferred?: unknown }
    >("POST", `/match/${activity}/resolve`, { choice });
  }

  // -- workflows ------------------------------------------------------------

  runWorkflows(input: Record<string, unknown>) {
    return this.request<Versioned & { report: StageReport }>("POST", "/workflows/run", {
      input,
    });
  }

  instances() {
    return this.request<Versioned & { instances: InstanceSummary[] }>("GET", "/instances");
  }

  instance(id: string) {
    return this.request<Versioned & { instance: InstanceDetail }>(
      "GET",
      `/instances/${id}`,
    );
  }

  completeHumanTask(id: string, node: string, payload: Record<string, unknown>) {
    return this.request<Versioned & { instance: { id: string; state: string } }>(
      "POST",
      `/instances/${id}/human-task`,
      { node, payload },
    );
  }

  interrupt(id: string) {
    return this.request<Versioned & { instance: { id: string; state: string } }>(
      "POST",
      `/instances/${id}/interrupt`,
    );
  }

  // -- twin and adaptation ------------------------------------------------------

  ingestEvents(events: EventInput[]) {
    return this.request<Versioned & { ingested: number; watermarks: Record<string, string> }>(
      "POST",
      "/events",
      { events },
    );
  }

  twinReport() {
    return this.request<Versioned & { report: DistanceReport }>("GET", "/twin/report");
  }

  twinHistory(since: number) {
    return this.request<Versioned & { history: TwinHistoryEntry[]; next: number }>(
      "GET",
      `/twin/history?since=${since}`,
    );
  }

  proposal() {
    return this.request<Versioned & AdaptationProposal>("GET", "/adaptation/proposal");
  }

  dispatch(reEntry?: string) {
    return this.request<Versioned & { record: AdaptationRecord }>(
      "POST",
      "/adaptation/dispatch",
      reEntry === undefined ? {} : { re_entry: reEntry },
    );
  }

  adaptationRecords() {
    return this.request<Versioned & { records: AdaptationRecord[] }>(
      "GET",
      "/adaptation/records",
    );
  }
}
