"""Annotation service: blind payloads, two-phase flow, export, progress."""

import json

import pytest
from fastapi.testclient import TestClient

from chainscore.pipeline import Runner, read_jsonl, write_jsonl
from chainscore.service import create_app

from conftest import fixture_config


@pytest.fixture
def run_dir(tmp_path):
    runner = Runner(fixture_config(tmp_path, "golden"))
    runner.run(through="chain")
    return runner.run_dir


@pytest.fixture
def client(run_dir):
    return TestClient(create_app(run_dir))


def submission(task: dict, annotator="ann1", answer="my answer", **overrides) -> dict:
    body = {
        "annotator_id": annotator,
        "necessity": {p["label"]: True for p in task["propositions"]},
        "connectivity": True,
        "annotator_answer": answer,
        "transform_accuracy": True,
    }
    body.update(overrides)
    return body


def first_task(client: TestClient, annotator="ann1") -> dict:
    response = client.get("/api/tasks/next", params={"annotator": annotator})
    assert response.status_code == 200
    return response.json()["task"]


def annotate(client: TestClient, task: dict, **overrides):
    body = submission(task, **overrides)
    return client.post(f"/api/tasks/{task['task_id']}/annotation", json=body)


class TestBlindPayload:
    def test_task_shape_has_no_model_answer_or_verdict(self, client):
        task = first_task(client)
        assert set(task) == {
            "task_id",
            "question",
            "documents",
            "statements",
            "propositions",
            "horn_expression",
            "chain",
        }
        assert set(task["chain"]) == {"trace", "start_candidates"}
        assert "model_short_answer" not in json.dumps(task)
        assert "status" not in task["chain"] and "path" not in task["chain"]

    def test_get_by_id_defaults_to_blind(self, client):
        task = first_task(client)
        response = client.get(f"/api/tasks/{task['task_id']}")
        assert response.status_code == 200
        assert set(response.json()) == {"task"}

    def test_unknown_task_404(self, client):
        assert client.get("/api/tasks/ghost").status_code == 404

    def test_next_requires_annotator(self, client):
        assert client.get("/api/tasks/next").status_code == 422


class TestNextTask:
    def test_walks_tasks_in_order(self, client):
        task1 = first_task(client)
        assert annotate(client, task1).status_code == 200
        response = client.get("/api/tasks/next", params={"annotator": "ann1"})
        task2 = response.json()["task"]
        assert task2["task_id"] != task1["task_id"]
        assert response.json()["remaining"] == 19

    def test_annotators_progress_independently(self, client):
        task1 = first_task(client, "ann1")
        annotate(client, task1, annotator="ann1")
        assert first_task(client, "ann2")["task_id"] == task1["task_id"]

    def test_exhausted_queue(self, client):
        while True:
            response = client.get("/api/tasks/next", params={"annotator": "ann1"})
            task = response.json()["task"]
            if task is None:
                assert response.json()["remaining"] == 0
                break
            assert annotate(client, task).status_code == 200


class TestAnnotationValidation:
    def test_valid_submission_accepted(self, client):
        response = annotate(client, first_task(client))
        assert response.status_code == 200
        assert isinstance(response.json()["record_id"], int)

    def test_unknown_necessity_label_rejected(self, client):
        task = first_task(client)
        body = submission(task)
        body["necessity"]["P99"] = True
        response = client.post(f"/api/tasks/{task['task_id']}/annotation", json=body)
        assert response.status_code == 422
        assert "P99" in response.json()["detail"]

    def test_missing_necessity_label_rejected(self, client):
        task = first_task(client)
        body = submission(task)
        dropped = next(iter(body["necessity"]))
        del body["necessity"][dropped]
        response = client.post(f"/api/tasks/{task['task_id']}/annotation", json=body)
        assert response.status_code == 422
        assert dropped in response.json()["detail"]

    def test_blank_annotator_answer_rejected(self, client):
        response = annotate(client, first_task(client), answer="   ")
        assert response.status_code == 422

    def test_equivalence_before_reveal_rejected(self, client):
        response = annotate(client, first_task(client), equivalence_confirmed=True)
        assert response.status_code == 403

    def test_incomplete_body_rejected(self, client):
        task = first_task(client)
        body = submission(task)
        del body["connectivity"]
        response = client.post(f"/api/tasks/{task['task_id']}/annotation", json=body)
        assert response.status_code == 422

    def test_unknown_task_404(self, client):
        body = submission(first_task(client))
        assert client.post("/api/tasks/ghost/annotation", json=body).status_code == 404


class TestRevealFlow:
    def test_reveal_without_annotation_forbidden(self, client):
        task = first_task(client)
        response = client.post(
            f"/api/tasks/{task['task_id']}/reveal", json={"annotator_id": "ann1"}
        )
        assert response.status_code == 403

    def test_reveal_after_annotation(self, client):
        task = first_task(client)
        annotate(client, task, answer="the tower")
        response = client.post(
            f"/api/tasks/{task['task_id']}/reveal", json={"annotator_id": "ann1"}
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["annotator_answer"] == "the tower"
        assert payload["model_short_answer"].strip()

    def test_reveal_phase_get_requires_prior_submission(self, client):
        task = first_task(client)
        response = client.get(
            f"/api/tasks/{task['task_id']}", params={"phase": "reveal", "annotator": "ann1"}
        )
        assert response.status_code == 403
        annotate(client, task)
        response = client.get(
            f"/api/tasks/{task['task_id']}", params={"phase": "reveal", "annotator": "ann1"}
        )
        assert response.status_code == 200
        assert "model_short_answer" in response.json()

    def test_reveal_phase_needs_annotator(self, client):
        task = first_task(client)
        response = client.get(f"/api/tasks/{task['task_id']}", params={"phase": "reveal"})
        assert response.status_code == 422

    def test_bogus_phase_rejected(self, client):
        task = first_task(client)
        response = client.get(f"/api/tasks/{task['task_id']}", params={"phase": "peek"})
        assert response.status_code == 422

    def test_equivalence_accepted_after_reveal(self, client):
        task = first_task(client)
        annotate(client, task)
        client.post(f"/api/tasks/{task['task_id']}/reveal", json={"annotator_id": "ann1"})
        response = annotate(client, task, equivalence_confirmed=True)
        assert response.status_code == 200


class TestIdempotency:
    def test_same_client_token_returns_same_record(self, client):
        task = first_task(client)
        first = annotate(client, task, client_token="tok-1")
        second = annotate(client, task, client_token="tok-1")
        assert first.json()["record_id"] == second.json()["record_id"]
        export = client.get("/api/export.jsonl").text.strip().splitlines()
        assert len(export) == 1

    def test_new_token_supersedes(self, client):
        task = first_task(client)
        annotate(client, task, client_token="tok-1", connectivity=True)
        annotate(client, task, client_token="tok-2", connectivity=False)
        export = [json.loads(line) for line in
                  client.get("/api/export.jsonl").text.strip().splitlines()]
        assert len(export) == 1
        assert export[0]["connectivity"] is False
        assert export[0]["supersedes_prior"] is True


class TestExport:
    def test_full_two_phase_annotation_appears_exactly_once(self, client):
        task = first_task(client)
        annotate(client, task, answer="the tower")
        client.post(f"/api/tasks/{task['task_id']}/reveal", json={"annotator_id": "ann1"})
        annotate(client, task, answer="the tower", equivalence_confirmed=True)

        response = client.get("/api/export.jsonl")
        assert response.headers["content-type"].startswith("application/jsonl")
        records = [json.loads(line) for line in response.text.strip().splitlines()]
        mine = [
            r for r in records
            if r["task_id"] == task["task_id"] and r["annotator_id"] == "ann1"
        ]
        assert len(mine) == 1
        record = mine[0]
        assert record["equivalence_confirmed"] is True
        assert record["annotator_answer"] == "the tower"
        assert set(record["necessity"]) == {p["label"] for p in task["propositions"]}

    def test_sorted_by_task_then_annotator(self, client):
        task1 = first_task(client, "b-ann")
        annotate(client, task1, annotator="b-ann")
        annotate(client, task1, annotator="a-ann")
        task2 = first_task(client, "b-ann")
        annotate(client, task2, annotator="b-ann")
        records = [json.loads(line) for line in
                   client.get("/api/export.jsonl").text.strip().splitlines()]
        keys = [(r["task_id"], r["annotator_id"]) for r in records]
        assert keys == sorted(keys)


class TestProgress:
    def test_counts_completed_and_confirmed(self, client):
        task = first_task(client)
        annotate(client, task)
        client.post(f"/api/tasks/{task['task_id']}/reveal", json={"annotator_id": "ann1"})
        annotate(client, task, equivalence_confirmed=True)
        second = first_task(client)
        annotate(client, second)

        payload = client.get("/api/progress").json()
        assert payload["total"] == 20
        assert payload["annotators"]["ann1"] == {"completed": 2, "confirmed": 1}


class TestPersistence:
    def test_store_survives_restart(self, run_dir):
        client = TestClient(create_app(run_dir))
        task = first_task(client)
        annotate(client, task)

        reopened = TestClient(create_app(run_dir))
        next_id = first_task(reopened)["task_id"]
        assert next_id != task["task_id"]
        assert (run_dir / "annotations.jsonl").exists()

    def test_errored_chain_rows_are_not_tasks(self, run_dir):
        rows = read_jsonl(run_dir / "stage_chain.jsonl")
        poisoned = rows[0]["instance_id"]
        rows[0] = {"instance_id": poisoned, "result": None,
                   "error": "boom", "carried_error": True}
        write_jsonl(run_dir / "stage_chain.jsonl", rows)

        client = TestClient(create_app(run_dir))
        assert client.get(f"/api/tasks/{poisoned}").status_code == 404
        assert client.get("/api/progress").json()["total"] == 19

    def test_incomplete_run_rejected(self, tmp_path):
        runner = Runner(fixture_config(tmp_path, "golden"))
        runner.run(through="generate")
        with pytest.raises(FileNotFoundError):
            create_app(runner.run_dir)
