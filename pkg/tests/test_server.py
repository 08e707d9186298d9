"""Round trips over the HTTP/WebSocket surface."""
import json
import time

import pytest
from fastapi.testclient import TestClient

from btteach import scenarios as sc
from btteach.bt import tree_from_doc
from btteach.runner import RunRecord, replay_matches
from btteach.server import create_app
from btteach.workspace import Workspace

SIMPLE_SCENE = {
    "objects": [
        {"id": "cube", "position": [0.2, -0.1, 0.025]},
        {
            "id": "box",
            "position": [-0.4, 0.3, 0.06],
            "extents": [0.24, 0.24, 0.12],
            "container": True,
        },
    ],
    "surfaces": [{"id": "table", "z": 0.0, "min": [-1, -1], "max": [1, 1]}],
}


@pytest.fixture
def client(tmp_path):
    app = create_app(root=str(tmp_path / "ws"))
    with TestClient(app) as c:
        yield c


def seed_demos(tmp_path) -> list:
    ws = Workspace(tmp_path / "ws")
    corpus = sc.get_task("object-in-box").build()
    return [ws.save("demos", d.to_json(), label=d.id).id for d in corpus]


def wait_run(client, rid, timeout=15.0) -> dict:
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get(f"/api/runs/{rid}").json()
        if doc["status"] != "running":
            return doc
        time.sleep(0.02)
    raise AssertionError(f"run {rid} did not finish")


class TestScenes:
    def test_health(self, client):
        doc = client.get("/api/health").json()
        assert doc["version"]

    def test_create_from_task(self, client):
        r = client.post("/api/scenes", json={"task": "object-in-box", "seed": 3})
        assert r.status_code == 200
        doc = r.json()
        assert set(doc["world"]["objects"]) == {"box", "cube"}
        again = client.get(f"/api/scenes/{doc['id']}").json()
        assert again["digest"] == doc["digest"]

    def test_create_from_doc(self, client):
        r = client.post("/api/scenes", json={"scene": SIMPLE_SCENE})
        assert r.status_code == 200
        assert r.json()["world"]["objects"]["cube"]["position"][2] == pytest.approx(0.025)

    def test_bad_scene_rejected(self, client):
        r = client.post("/api/scenes", json={"scene": {"objects": [{"position": [0, 0, 0]}]}})
        assert r.status_code == 422
        r = client.post("/api/scenes", json={})
        assert r.status_code == 422
        assert client.get("/api/scenes/nope").status_code == 404

    def test_primitives_free_play(self, client):
        sid = client.post("/api/scenes", json={"scene": SIMPLE_SCENE}).json()["id"]
        r = client.post(
            f"/api/scenes/{sid}/primitive", json={"t": "pick", "object": "cube"}
        )
        assert r.status_code == 200
        r = client.post(
            f"/api/scenes/{sid}/primitive",
            json={"t": "place", "object": "cube", "target": [0.0, 0.0, 0.025]},
        )
        assert r.status_code == 200
        world = r.json()["world"]
        assert world["objects"]["cube"]["position"][:2] == [0.0, 0.0]

    def test_causality_rejected(self, client):
        sid = client.post("/api/scenes", json={"scene": SIMPLE_SCENE}).json()["id"]
        r = client.post(
            f"/api/scenes/{sid}/primitive",
            json={"t": "place", "object": "cube", "target": [0, 0, 0.025]},
        )
        assert r.status_code == 422
        assert "error" in r.json()["detail"]

    def test_sessions_do_not_interleave(self, client):
        a = client.post("/api/scenes", json={"scene": SIMPLE_SCENE}).json()["id"]
        b = client.post("/api/scenes", json={"scene": SIMPLE_SCENE}).json()["id"]
        client.post(f"/api/scenes/{a}/primitive", json={"t": "pick", "object": "cube"})
        wa = client.get(f"/api/scenes/{a}").json()["world"]
        wb = client.get(f"/api/scenes/{b}").json()["world"]
        assert wa["held"] == "cube"
        assert wb["held"] is None


class TestDemoRecording:
    def record_one(self, client, drop_at):
        sid = client.post("/api/scenes", json={"scene": SIMPLE_SCENE}).json()["id"]
        ds = client.post("/api/demos/start", json={"scene": sid, "id": "h1"}).json()
        assert ds["scene"] == sid
        dsid = ds["demo_session"]
        r = client.post(f"/api/scenes/{sid}/primitive", json={"t": "pick", "object": "cube"})
        assert r.json()["recorded"] == 1
        r = client.post(
            f"/api/scenes/{sid}/primitive",
            json={"t": "drop", "object": "cube", "target": drop_at},
        )
        assert r.json()["recorded"] == 2
        return sid, client.post(f"/api/demos/{dsid}/finish").json()

    def test_record_and_list(self, client):
        sid, fin = self.record_one(client, [-0.4, 0.3, 0.2])
        assert fin["actions"] == 2
        listed = client.get("/api/demos").json()["demos"]
        assert [d["id"] for d in listed] == [fin["id"]]
        # the scene is free again
        assert client.get(f"/api/scenes/{sid}").json()["recording"] is False

    def test_double_start_conflicts(self, client):
        sid = client.post("/api/scenes", json={"scene": SIMPLE_SCENE}).json()["id"]
        client.post("/api/demos/start", json={"scene": sid})
        assert client.post("/api/demos/start", json={"scene": sid}).status_code == 409

    def test_empty_finish_rejected(self, client):
        sid = client.post("/api/scenes", json={"scene": SIMPLE_SCENE}).json()["id"]
        dsid = client.post("/api/demos/start", json={"scene": sid}).json()["demo_session"]
        assert client.post(f"/api/demos/{dsid}/finish").status_code == 422
        assert client.post("/api/demos/zzz/finish").status_code == 404

    def test_recording_causality_carries_rule(self, client):
        sid = client.post("/api/scenes", json={"scene": SIMPLE_SCENE}).json()["id"]
        client.post("/api/demos/start", json={"scene": sid})
        r = client.post(
            f"/api/scenes/{sid}/primitive",
            json={"t": "place", "object": "cube", "target": [0, 0, 0.025]},
        )
        assert r.status_code == 422
        assert r.json()["detail"]["rule"] == "causality"


class TestLearning:
    def test_learn_and_fetch_tree(self, tmp_path, client):
        ids = seed_demos(tmp_path)
        r = client.post("/api/learn", json={"demos": ids, "label": "box"})
        assert r.status_code == 200
        doc = r.json()
        assert 10 <= doc["nodes"] <= 30
        assert doc["report_body"]["groups"]
        tree_doc = client.get(f"/api/trees/{doc['tree']}")
        assert tree_doc.status_code == 200
        assert tree_doc.json()["root"]["kind"] == "fallback"
        dot = client.get(f"/api/trees/{doc['tree']}", params={"format": "dot"})
        assert dot.text.startswith("digraph")

    def test_learn_from_recorded_demo(self, client):
        _, fin = TestDemoRecording().record_one(client, [-0.4, 0.3, 0.2])
        r = client.post("/api/learn", json={"demos": [fin["id"]]})
        assert r.status_code == 200
        assert r.json()["nodes"] >= 5

    def test_learn_missing_demo(self, client):
        assert client.post("/api/learn", json={"demos": ["zzzz"]}).status_code == 404
        assert client.post("/api/learn", json={"demos": []}).status_code == 422
        assert client.get("/api/trees/zzzz").status_code == 404


class TestRuns:
    def learn_tree(self, tmp_path, client) -> str:
        ids = seed_demos(tmp_path)
        return client.post("/api/learn", json={"demos": ids}).json()["tree"]

    def test_run_to_success_and_replay(self, tmp_path, client):
        tid = self.learn_tree(tmp_path, client)
        r = client.post("/api/runs", json={"tree": tid, "task": "object-in-box", "seed": 9})
        assert r.status_code == 200
        rid = r.json()["id"]
        doc = wait_run(client, rid)
        assert doc["status"] == "success"
        assert doc["report"]
        record = RunRecord.from_json(doc["record"])
        tree = tree_from_doc(client.get(f"/api/trees/{tid}").json())
        assert replay_matches(record, tree)

    def test_run_on_scene_session(self, tmp_path, client):
        tid = self.learn_tree(tmp_path, client)
        sid = client.post("/api/scenes", json={"task": "object-in-box", "seed": 4}).json()["id"]
        rid = client.post("/api/runs", json={"tree": tid, "scene": sid}).json()["id"]
        doc = wait_run(client, rid)
        assert doc["status"] == "success"
        assert doc["events"], "sparse event log expected"

    def test_run_inputs_validated(self, tmp_path, client):
        tid = self.learn_tree(tmp_path, client)
        assert client.post("/api/runs", json={"tree": "zzzz", "task": "object-in-box"}).status_code == 404
        assert client.post("/api/runs", json={"tree": tid}).status_code == 422
        assert client.get("/api/runs/zzzz").status_code == 404

    def test_live_disturb_breaks_then_recovers(self, tmp_path, client):
        tid = self.learn_tree(tmp_path, client)
        rid = client.post(
            "/api/runs",
            json={"tree": tid, "task": "object-in-box", "seed": 11, "tick_hz": 60},
        ).json()["id"]
        # wait until the run is actually under way, then yank the cube
        deadline = time.time() + 10
        while time.time() < deadline:
            doc = client.get(f"/api/runs/{rid}").json()
            if doc["tick"] >= 3 or doc["status"] != "running":
                break
            time.sleep(0.01)
        r = client.post(
            f"/api/runs/{rid}/disturb",
            json={"object": "cube", "target": [-0.8, -0.8, 0.025]},
        )
        if r.status_code == 200:
            doc = wait_run(client, rid)
            assert doc["status"] == "success"
            record = RunRecord.from_json(doc["record"])
            assert len(record.disturbances) == 1
            assert record.disturbances[0].at_tick >= 1
            tree = tree_from_doc(client.get(f"/api/trees/{tid}").json())
            assert replay_matches(record, tree)
        else:
            # the run beat us to the finish line; at least the refusal is clean
            assert r.status_code == 409

    def test_disturb_after_end_conflicts(self, tmp_path, client):
        tid = self.learn_tree(tmp_path, client)
        rid = client.post("/api/runs", json={"tree": tid, "task": "object-in-box", "seed": 2}).json()["id"]
        wait_run(client, rid)
        r = client.post(
            f"/api/runs/{rid}/disturb", json={"object": "cube", "target": [0, 0, 0.025]}
        )
        assert r.status_code == 409

    def test_disturb_validates_object(self, tmp_path, client):
        tid = self.learn_tree(tmp_path, client)
        rid = client.post(
            "/api/runs",
            json={"tree": tid, "task": "object-in-box", "seed": 2, "tick_hz": 5},
        ).json()["id"]
        r = client.post(
            f"/api/runs/{rid}/disturb", json={"object": "ghost", "target": [0, 0, 0.025]}
        )
        assert r.status_code in (409, 422)
        if r.status_code == 422:
            assert "ghost" in r.json()["detail"]["error"]


class TestEventStream:
    def test_stream_reaches_end(self, tmp_path, client):
        ids = seed_demos(tmp_path)
        tid = client.post("/api/learn", json={"demos": ids}).json()["tree"]
        rid = client.post(
            "/api/runs", json={"tree": tid, "task": "object-in-box", "seed": 6}
        ).json()["id"]
        messages = []
        with client.websocket_connect(f"/api/runs/{rid}/events") as ws:
            while True:
                item = json.loads(ws.receive_text())
                messages.append(item)
                if item["type"] in ("end", "error"):
                    break
        assert messages[0]["type"] == "snapshot"
        assert messages[-1]["type"] == "end"
        assert messages[-1]["status"] == "success"
        ticks = [m["tick"] for m in messages if m["type"] == "tick"]
        assert ticks == sorted(ticks)

    def test_stream_unknown_run(self, client):
        with client.websocket_connect("/api/runs/zzz/events") as ws:
            item = json.loads(ws.receive_text())
            assert item["type"] == "error"
