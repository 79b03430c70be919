// End-to-end: the console drives the delivery scenario and the
// faulted-service adaptation purely through the HTTP API, then the resulting
// engine state is compared byte-for-byte with a headless CLI run of the same
// project.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { cpSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import net from "node:net";
import { tmpdir } from "node:os";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ConsoleSession } from "../src/session.js";
import type { EventInput } from "../src/types.js";

const PYTHON = process.env.MEDIATE_PYTHON ?? "python3";
const INPUT = { order_id: "ORD-7", quantity: 3 };

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const { port } = srv.address() as net.AddressInfo;
      srv.close(() => resolve(port));
    });
    srv.on("error", reject);
  });
}

function scaffoldScenario(): string {
  const dir = mkdtempSync(path.join(tmpdir(), "console-"));
  execFileSync(PYTHON, ["-m", "mediate.cli", "init", dir], { stdio: "pipe" });
  // force every match through the validation queue so the console has work
  const projectFile = path.join(dir, "project.yaml");
  const project = readFileSync(projectFile, "utf-8");
  writeFileSync(projectFile, project.replace("config:", "config:\n  auto_threshold: 1.01"));
  return dir;
}

function loadEvents(dir: string): EventInput[] {
  // the replay file is YAML but every event is a single-line flow mapping,
  // which is also valid JSON after quoting keys; parse it leniently
  const text = readFileSync(path.join(dir, "events-fault.yaml"), "utf-8");
  const events: EventInput[] = [];
  for (const line of text.split("\n")) {
    const match = line.match(/^- (\{.*\})\s*$/);
    if (!match) continue;
    const json = match[1]
      .replace(/([,{]\s*)([A-Za-z_][\w.-]*)\s*:/g, '$1"$2":')
      .replace(/:\s*([A-Za-z_][\w.-]*)(\s*[,}])/g, ': "$1"$2');
    events.push(JSON.parse(json) as EventInput);
  }
  if (events.length === 0) throw new Error("no events parsed from replay file");
  return events;
}

async function waitForHealth(base: string, proc: ChildProcess): Promise<void> {
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    if (proc.exitCode !== null) throw new Error(`server exited: ${proc.exitCode}`);
    try {
      const resp = await fetch(`${base}/health`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("server did not come up");
}

describe("console drives the engine through the API only", () => {
  let consoleDir: string;
  let headlessDir: string;
  let server: ChildProcess;
  let base: string;

  beforeAll(async () => {
    consoleDir = scaffoldScenario();
    headlessDir = scaffoldScenario();
    const port = await freePort();
    base = `http://127.0.0.1:${port}`;
    server = spawn(
      PYTHON,
      ["-m", "mediate.cli", "serve", "-p", path.join(consoleDir, "project.yaml"),
       "--bind", `127.0.0.1:${port}`],
      { stdio: ["ignore", "pipe", "pipe"] },
    );
    await waitForHealth(base, server);
  });

  afterAll(() => {
    server?.kill();
  });

  it("runs the pipeline, validates the queue, completes the run, and dispatches the fault adaptation", async () => {
    const session = new ConsoleSession(new ApiClient(base));

    // pipeline up to matching; the queue must hold every activity
    await session.runStages(["model", "deduce"]);
    const matchReport = (await session.api.runStage("match")).report;
    expect(matchReport.status).toBe("pending");
    const queue = await session.pendingMatches();
    expect(queue.length).toBeGreaterThanOrEqual(9);

    const validated = await session.validateAll();
    expect(validated.length).toBe(queue.length);
    expect(await session.pendingMatches()).toHaveLength(0);

    await session.runStages(["reconcile", "compile"]);
    const runReport = (await session.api.runWorkflows(INPUT)).report;
    expect(runReport.status).toBe("ok");
    expect(runReport.details["invocations"]).toEqual({
      "svc-plan#main": 1, "svc-pick#main": 1, "svc-label#main": 1,
      "svc-ship#main": 1, "svc-confirm#main": 1, "svc-invoice#main": 1,
    });

    // the field reports the shipping outage; the dashboard must catch it
    await session.api.ingestEvents(loadEvents(consoleDir));
    const dash = await session.pollDashboard();
    expect(dash.points.length).toBeGreaterThan(0);
    expect(dash.proposal?.re_entry).toBe("rediscover_services");
    expect(dash.proposal?.report.dominant).toBe("execution");

    const record = await session.approveDispatch();
    expect(record.state).toBe("done");
    expect(record.re_entry).toBe("rediscover_services");

    // the rebind avoids the outaged service
    const { all } = await session.api.matchQueue();
    const ship = all.find((m) => m.activity === "f-ship");
    expect(ship?.chosen?.services.every((s) => !s.startsWith("svc-ship#"))).toBe(true);

    // exactly one dispatch recorded
    const { records } = await session.api.adaptationRecords();
    expect(records).toHaveLength(1);
  });

  it("matches the headless run's final state byte for byte", () => {
    const project = path.join(headlessDir, "project.yaml");
    const run = (...args: string[]) =>
      execFileSync(PYTHON, ["-m", "mediate.cli", ...args, "-p", project], { stdio: "pipe" });
    const inputFile = path.join(headlessDir, "input.json");
    writeFileSync(inputFile, JSON.stringify(INPUT));
    run("model");
    run("deduce");
    run("match", "--yes");
    run("reconcile");
    run("compile");
    run("run", "--input", inputFile);
    run("monitor", "--events", path.join(headlessDir, "events-fault.yaml"), "--dispatch");

    for (const artifact of ["run.report.yaml", "matches.yaml", "workflows.yaml"]) {
      const consoleBytes = readFileSync(path.join(consoleDir, "build", artifact));
      const headlessBytes = readFileSync(path.join(headlessDir, "build", artifact));
      expect(consoleBytes.equals(headlessBytes), artifact).toBe(true);
    }
  });
});
