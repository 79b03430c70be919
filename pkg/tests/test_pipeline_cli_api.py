import shutil

import pytest
import yaml
from click.testing import CliRunner
from fastapi.testclient import TestClient

from mediate.api import create_app
from mediate.cli import main as cli_main
from mediate.pipeline import PipelineContext, run_pipeline, stage_match
from mediate.project import Project

_INPUT = {"order_id": "ORD-7", "quantity": 3}

_EXPECTED_INVOCATIONS = {
    "svc-plan#main": 1, "svc-pick#main": 1, "svc-label#main": 1,
    "svc-ship#main": 1, "svc-confirm#main": 1, "svc-invoice#main": 1,
}

_ARTIFACTS = (
    "model.report.yaml", "deduce-state.yaml", "cartography.yaml",
    "cartography.bpmn.xml", "deduce.report.yaml", "matches.yaml",
    "match.report.yaml", "datamaps.yaml", "reconcile.report.yaml",
    "workflows.yaml", "compile.report.yaml", "run.report.yaml",
)


def _cli(scenario_dir, *args):
    runner = CliRunner()
    return runner.invoke(cli_main, [*args, "--project", str(scenario_dir / "project.yaml")],
                         catch_exceptions=False)


def test_scenario_model_carries_deliver_product_function(scenario_dir):
    from mediate.model import load_model

    m = load_model(scenario_dir / "model.yaml")
    assert any(f.name == "deliver product" for _, f in m.functions())


def test_cli_full_pipeline_on_scenario(scenario_dir, tmp_path):
    input_file = tmp_path / "input.yaml"
    input_file.write_text(yaml.safe_dump(_INPUT))
    for verb in ("model", "deduce", "match", "reconcile", "compile"):
        result = _cli(scenario_dir, verb)
        assert result.exit_code == 0, f"{verb}: {result.output}"
    result = _cli(scenario_dir, "run", "--input", str(input_file))
    assert result.exit_code == 0, result.output
    report = yaml.safe_load((scenario_dir / "build" / "run.report.yaml").read_text())
    assert report["details"]["invocations"] == _EXPECTED_INVOCATIONS
    for name in _ARTIFACTS:
        assert (scenario_dir / "build" / name).exists(), name


def test_stage_without_prerequisites_is_an_error(scenario_dir):
    result = _cli(scenario_dir, "reconcile")
    assert result.exit_code != 0
    assert "artifact missing" in result.output


def test_missing_model_file_is_a_project_error(scenario_dir):
    (scenario_dir / "model.yaml").unlink()
    result = _cli(scenario_dir, "model")
    assert result.exit_code == 9


def test_match_with_all_auto_bindings_exits_clean(scenario_dir):
    _cli(scenario_dir, "deduce")
    result = _cli(scenario_dir, "match")
    assert result.exit_code == 0
    assert "pending: []" in result.output


def test_pending_match_blocks_with_exit_code_five(scenario_dir):
    # raise the auto threshold beyond reach so everything needs validation
    project_file = scenario_dir / "project.yaml"
    raw = yaml.safe_load(project_file.read_text())
    raw["config"]["auto_threshold"] = 1.01
    project_file.write_text(yaml.safe_dump(raw))
    _cli(scenario_dir, "deduce")
    result = _cli(scenario_dir, "match")
    assert result.exit_code == 5
    # answering every activity unblocks it
    ctx = PipelineContext(Project.load(project_file))
    report = stage_match(ctx, decide=lambda fid, r: 0)
    assert report.status == "ok"


def test_stage_artifacts_reproducible_byte_for_byte(scenario_dir):
    project = Project.load(scenario_dir / "project.yaml")
    run_pipeline(project, stages=("model", "deduce", "match", "reconcile", "compile"))
    first = {name: (scenario_dir / "build" / name).read_bytes()
             for name in _ARTIFACTS if name not in ("run.report.yaml",)}
    run_pipeline(project, stages=("model", "deduce", "match", "reconcile", "compile"))
    for name, data in first.items():
        assert (scenario_dir / "build" / name).read_bytes() == data, name


def test_run_report_reproducible_across_fresh_contexts(scenario_dir):
    project = Project.load(scenario_dir / "project.yaml")
    run_pipeline(project, input_payload=_INPUT)
    first = (scenario_dir / "build" / "run.report.yaml").read_bytes()
    shutil.rmtree(scenario_dir / "build" / "instances")
    run_pipeline(project, stages=("run",), input_payload=_INPUT)
    assert (scenario_dir / "build" / "run.report.yaml").read_bytes() == first


def test_run_records_patterns_only_for_executed_bindings(scenario_dir):
    project = Project.load(scenario_dir / "project.yaml")
    run_pipeline(project, input_payload=_INPUT)
    from mediate.matching import PatternStore

    store = PatternStore(project.patterns_dir)
    bindings = {s for rec in store.records() for s in rec.binding}
    # the default exclusive branches ran; the untaken courier twins did not
    assert "svc-ship#main" in bindings
    assert "svc-ship-x#main" not in bindings
    assert "svc-label-x#main" not in bindings
    # a fresh re-match therefore reproduces the original choice via the pattern
    ctx = PipelineContext(project)
    report = stage_match(ctx)
    assert report.status == "ok"
    assert [str(s) for s in ctx.match_results["f-ship"].chosen.services] == ["svc-ship#main"]
    assert ctx.match_results["f-ship"].chosen.source == "pattern"


def test_monitor_verb_streams_reports_and_proposal(scenario_dir):
    _cli(scenario_dir, "deduce")
    result = _cli(scenario_dir, "monitor", "--events", str(scenario_dir / "events-fault.yaml"))
    assert result.exit_code == 0
    lines = [line for line in result.output.splitlines() if line.startswith("{")]
    assert '"proposal": "rediscover_services"' in lines[-1]


def test_export_writes_interchange_files(scenario_dir):
    project = Project.load(scenario_dir / "project.yaml")
    run_pipeline(project, stages=("model", "deduce", "match", "reconcile", "compile"))
    result = _cli(scenario_dir, "export")
    assert result.exit_code == 0
    assert (scenario_dir / "build" / "wf-proc-sn-delivery-operation.bpel.xml").exists()


def test_init_scaffolds_scenario(tmp_path):
    runner = CliRunner()
    target = tmp_path / "fresh"
    result = runner.invoke(cli_main, ["init", str(target)], catch_exceptions=False)
    assert result.exit_code == 0
    assert (target / "project.yaml").exists()
    assert (target / "model.yaml").exists()


# -- API drives the same engine ------------------------------------------------------


@pytest.fixture()
def client(scenario_dir):
    app = create_app(Project.load(scenario_dir / "project.yaml"))
    with TestClient(app) as c:
        yield c


def test_api_pipeline_equals_cli_pipeline(scenario_dir, tmp_path):
    # drive one copy through the API
    app = create_app(Project.load(scenario_dir / "project.yaml"))
    client = TestClient(app)
    for stage in ("model", "deduce", "match", "reconcile", "compile"):
        resp = client.post(f"/pipeline/{stage}")
        assert resp.status_code == 200, resp.text
    run_report = client.post("/workflows/run", json={"input": _INPUT}).json()["report"]
    assert run_report["details"]["invocations"] == _EXPECTED_INVOCATIONS

    # drive a second copy through the engine path and compare the artifacts
    other = tmp_path / "headless"
    other.mkdir()
    for name in ("project.yaml", "model.yaml", "services.yaml"):
        shutil.copy(scenario_dir / name, other / name)
    ctx = run_pipeline(Project.load(other / "project.yaml"), input_payload=_INPUT)
    for name in _ARTIFACTS:
        assert (other / "build" / name).read_bytes() == \
            (scenario_dir / "build" / name).read_bytes(), name


def test_api_model_roundtrip_and_validation(client, scenario_dir):
    got = client.get("/model").json()
    assert got["model"]["network_id"] == "net-deliver"
    version = got["version"]
    # dangling message ref rejected with field-level findings
    bad = yaml.safe_load((scenario_dir / "model.yaml").read_text())
    bad["objectives"][0]["sub_network"] = "sn-ghost"
    from mediate.model import CollaborationModel

    resp = client.put("/model", json={"model": CollaborationModel.from_raw(bad).to_raw(),
                                      "version": version})
    assert resp.status_code == 422
    assert any("sn-ghost" in d["message"] for d in resp.json()["detail"])
    # a clean save round-trips
    good = client.get("/model").json()["model"]
    resp = client.put("/model", json={"model": good, "version": version})
    assert resp.status_code == 200


def test_api_validate_match_flips_status(scenario_dir):
    raw = yaml.safe_load((scenario_dir / "project.yaml").read_text())
    raw["config"]["auto_threshold"] = 1.01
    (scenario_dir / "project.yaml").write_text(yaml.safe_dump(raw))
    client = TestClient(create_app(Project.load(scenario_dir / "project.yaml")))
    client.post("/pipeline/deduce")
    client.post("/pipeline/match")
    queue = client.get("/match/queue").json()["queue"]
    assert queue
    for item in queue:
        resp = client.post(f"/match/{item['activity']}/validate", json={"candidate": 0})
        assert resp.status_code == 200
        assert resp.json()["result"]["status"] == "auto"
    assert client.get("/match/queue").json()["queue"] == []
    # re-validating an already-resolved item reports staleness
    resp = client.post(f"/match/{queue[0]['activity']}/validate", json={"candidate": 0})
    assert resp.json()["stale"] is True


def test_api_link_proposal_confirmation(scenario_dir):
    # introduce an unresolved ref, confirm a candidate through the API
    model_file = scenario_dir / "model.yaml"
    model_file.write_text(model_file.read_text().replace(
        "capability: [ShipParcel]", "capability: [ship goods]", 1))
    client = TestClient(create_app(Project.load(scenario_dir / "project.yaml")))
    links = client.get("/links/proposals").json()["links"]
    assert len(links["proposals"]) == 1
    proposal = links["proposals"][0]
    assert proposal["path"] == "function:f-ship/capability:0"
    top = proposal["candidates"][0]
    resp = client.post("/links/confirm", json={
        "path": proposal["path"], "concept": top["concept"], "kind": top["kind"]})
    assert resp.status_code == 200
    assert client.get("/links/proposals").json()["links"]["proposals"] == []
    # the confirmed link is recorded on the model with its kind
    saved = yaml.safe_load(model_file.read_text())
    carrier = next(p for p in saved["partners"] if p["id"] == "p-carrier")
    ship = next(f for f in carrier["functions"] if f["id"] == "f-ship")
    ref = ship["annotation"]["capability"][0]
    assert ref["resolved"] == top["concept"]
    assert ref["kind"] == "near_by"
    # pipeline proceeds with the confirmed link
    assert client.post("/pipeline/deduce").status_code == 200


def test_api_event_ingest_advances_watermark(client):
    client.post("/pipeline/deduce")
    event = {"id": "x-1", "source": "field", "type": "task.confirmed",
             "subject": "t-f-plan", "attributes": {}, "timestamp": 1}
    resp = client.post("/events", json={"events": [event]})
    assert resp.status_code == 200
    assert resp.json()["watermarks"]["field"] == "x-1"
    report = client.get("/twin/report").json()["report"]
    assert report["per_category"]["execution"] > 0


def test_api_drops_malformed_events_without_failing_the_batch(client):
    client.post("/pipeline/deduce")
    good = {"id": "x-2", "source": "field", "type": "task.confirmed",
            "subject": "t-f-pick", "attributes": {}, "timestamp": 2}
    bad = {"id": "x-bad", "source": "carrier-pigeon", "type": "task.confirmed",
           "subject": "t-f-pick"}
    resp = client.post("/events", json={"events": [bad, good]})
    assert resp.status_code == 200
    data = resp.json()
    assert data["ingested"] == 1
    assert data["dropped_malformed"] == 1
    assert data["watermarks"]["field"] == "x-2"


def test_cli_model_flag_overrides_project_model(scenario_dir, tmp_path):
    other = tmp_path / "other-model.yaml"
    text = (scenario_dir / "model.yaml").read_text()
    other.write_text(text.replace("name: Product Delivery Collaboration",
                                  "name: Override Collaboration"))
    result = _cli(scenario_dir, "deduce", "--model", str(other))
    assert result.exit_code == 0
    saved = yaml.safe_load((scenario_dir / "build" / "deduce-state.yaml").read_text())
    assert saved["model"]["name"] == "Override Collaboration"


def test_api_twin_report_after_fault_scenario(client, scenario_dir):
    client.post("/pipeline/deduce")
    events = yaml.safe_load((scenario_dir / "events-fault.yaml").read_text())["events"]
    client.post("/events", json={"events": events})
    report = client.get("/twin/report").json()["report"]
    assert report["dominant"] == "execution"
    assert report["verdict"] is True
    proposal = client.get("/adaptation/proposal").json()
    assert proposal["re_entry"] == "rediscover_services"


def test_api_human_task_completion_resumes_choreography(scenario_dir):
    # make the confirmation service a human task
    registry_file = scenario_dir / "services.yaml"
    raw = yaml.safe_load(registry_file.read_text())
    for svc in raw["services"]:
        if svc["id"] == "svc-confirm":
            svc["endpoint"] = {"kind": "human"}
    registry_file.write_text(yaml.safe_dump(raw))
    client = TestClient(create_app(Project.load(scenario_dir / "project.yaml")))
    for stage in ("model", "deduce", "match", "reconcile", "compile"):
        assert client.post(f"/pipeline/{stage}").status_code == 200
    report = client.post("/workflows/run", json={"input": _INPUT}).json()["report"]
    assert report["status"] == "incomplete"
    instances = client.get("/instances").json()["instances"]
    paused = [i for i in instances if i["state"] == "paused_on_human_task"]
    assert len(paused) == 1 and paused[0]["waiting_node"] == "t-f-confirm"
    resp = client.post(
        f"/instances/{paused[0]['id']}/human-task",
        json={"node": "t-f-confirm",
              "payload": {"confirmation_id": "CONF-9", "confirmed_on": "12/31/2013"}})
    assert resp.status_code == 200
    states = {i["workflow"]: i["state"] for i in client.get("/instances").json()["instances"]}
    assert states["wf-proc-sn-delivery-operation"] == "completed"
    assert states["wf-proc-sn-delivery-support"] == "completed"
    # the invoice saw the human-entered confirmation, date converted in flight
    detail = client.get(f"/instances/{paused[0]['id']}").json()["instance"]
    assert detail["env"]["t-f-confirm"]["confirmation_id"] == "CONF-9"


def test_api_dispatch_excludes_faulted_service(scenario_dir):
    client = TestClient(create_app(Project.load(scenario_dir / "project.yaml")))
    for stage in ("model", "deduce", "match", "reconcile", "compile"):
        client.post(f"/pipeline/{stage}")
    events = yaml.safe_load((scenario_dir / "events-fault.yaml").read_text())["events"]
    client.post("/events", json={"events": events})
    record = client.post("/adaptation/dispatch", json={}).json()["record"]
    assert record["re_entry"] == "rediscover_services"
    assert record["state"] == "done"
    matches = client.get("/match/queue").json()["all"]
    ship = next(m for m in matches if m["activity"] == "f-ship")
    assert all("svc-ship#" not in s for s in ship["chosen"]["services"])
    assert client.get("/adaptation/records").json()["records"]
