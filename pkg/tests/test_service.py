import threading
import time

import pytest
import requests

from chainforge.chain import CausalChain, serialize_chain
from chainforge.backends import ScriptedBackend, keyed_script
from chainforge.datastore import QueueLog, replay_queue
from chainforge.fixtures import demo_sample
from chainforge.pipeline import PipelineConfig, QueueHumanStage, construct_chain_for_sample
from chainforge.service import ReviewService, ServiceAlreadyRunning, serve_review

from helpers import accepting_verifier


ELEVEN_EVENTS = " -> ".join(f"[step number {i} happened]" for i in range(11))


@pytest.fixture
def env(tmp_path):
    log = QueueLog(tmp_path / "queue.jsonl")
    service = ReviewService(log, lease_seconds=600.0)
    server = serve_review(service, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield {"log": log, "service": service, "server": server, "base": base, "tmp": tmp_path}
    server.shutdown()
    server.server_close()


def enqueue(log, item_id="i1", sample_id="s1", attempt_no=1, chain="[a b] -> [c d]", context=None):
    log.enqueue(
        {
            "item_id": item_id,
            "sample_id": sample_id,
            "attempt_no": attempt_no,
            "chain": chain,
            "context": context or {"question": "why", "gold_answer": "because it fell"},
        },
        ts=time.time(),
    )


class TestEndpoints:
    def test_healthz(self, env):
        response = requests.get(env["base"] + "/healthz")
        assert response.status_code == 200
        assert response.json() == {"ok": True}

    def test_approve_flow_decrements_pending(self, env):
        enqueue(env["log"])
        item = requests.get(env["base"] + "/api/queue/next?reviewer=alice").json()["item"]
        assert item["item_id"] == "i1"
        assert item["context"]["question"] == "why"

        response = requests.post(
            env["base"] + "/api/items/i1/decision",
            json={"action": "approve", "reviewer": "alice"},
        )
        assert response.status_code == 200
        stats = requests.get(env["base"] + "/api/stats").json()
        assert stats["approved"] == 1 and stats["pending"] == 0

    def test_repeat_decision_is_409_and_changes_nothing(self, env):
        enqueue(env["log"])
        body = {"action": "approve", "reviewer": "alice"}
        assert requests.post(env["base"] + "/api/items/i1/decision", json=body).status_code == 200
        again = requests.post(env["base"] + "/api/items/i1/decision", json=body)
        assert again.status_code == 409
        state = replay_queue(env["log"].path)
        assert state.items["i1"].state == "approved"
        assert len([e for e in state.anomalies]) == 0  # service never appended a second decision

    def test_edit_with_eleven_events_rejected_400_length_max(self, env):
        enqueue(env["log"])
        response = requests.post(
            env["base"] + "/api/items/i1/decision",
            json={"action": "edit", "chain": ELEVEN_EVENTS, "reviewer": "bob"},
        )
        assert response.status_code == 400
        body = response.json()
        rules = [v["rule_id"] for v in body["validation"]["violations"]]
        assert "length.max" in rules
        assert replay_queue(env["log"].path).items["i1"].state == "pending"

    def test_valid_edit_stored_canonically(self, env):
        enqueue(env["log"])
        response = requests.post(
            env["base"] + "/api/items/i1/decision",
            json={
                "action": "edit",
                "chain": "[the rope frayed]  →  [the crate dropped]",
                "reviewer": "bob",
            },
        )
        assert response.status_code == 200
        item = response.json()["item"]
        assert item["state"] == "edited"
        assert item["decided_chain"] == "[the rope frayed] -> [the crate dropped]"

    def test_reject_requires_reason(self, env):
        enqueue(env["log"])
        response = requests.post(
            env["base"] + "/api/items/i1/decision",
            json={"action": "reject", "reviewer": "bob"},
        )
        assert response.status_code == 400

    def test_unknown_item_404(self, env):
        assert requests.get(env["base"] + "/api/items/nope").status_code == 404
        response = requests.post(
            env["base"] + "/api/items/nope/decision",
            json={"action": "approve", "reviewer": "x"},
        )
        assert response.status_code == 404

    def test_get_item(self, env):
        enqueue(env["log"])
        response = requests.get(env["base"] + "/api/items/i1")
        assert response.status_code == 200
        assert response.json()["item"]["chain"] == "[a b] -> [c d]"

    def test_empty_queue_returns_null_item(self, env):
        response = requests.get(env["base"] + "/api/queue/next?reviewer=alice")
        assert response.status_code == 200
        assert response.json()["item"] is None


class TestLeases:
    def test_two_reviewers_get_distinct_items(self, env):
        enqueue(env["log"], item_id="i1")
        enqueue(env["log"], item_id="i2")
        alice = requests.get(env["base"] + "/api/queue/next?reviewer=alice").json()["item"]
        bob = requests.get(env["base"] + "/api/queue/next?reviewer=bob").json()["item"]
        assert {alice["item_id"], bob["item_id"]} == {"i1", "i2"}

    def test_same_reviewer_keeps_the_lease(self, env):
        enqueue(env["log"], item_id="i1")
        first = requests.get(env["base"] + "/api/queue/next?reviewer=alice").json()["item"]
        second = requests.get(env["base"] + "/api/queue/next?reviewer=alice").json()["item"]
        assert first["item_id"] == second["item_id"] == "i1"

    def test_expired_lease_returns_to_queue(self, tmp_path):
        log = QueueLog(tmp_path / "q.jsonl")
        service = ReviewService(log, lease_seconds=0.05)
        enqueue(log)
        assert service.next_item("alice")["item_id"] == "i1"
        assert service.next_item("bob") is None
        time.sleep(0.08)
        assert service.next_item("bob")["item_id"] == "i1"


class TestVideoEndpoint:
    def test_remote_uri_redirects(self, env):
        enqueue(
            env["log"],
            context={"question": "q", "video_uri": "https://videos.example/v.mp4"},
        )
        response = requests.get(
            env["base"] + "/api/video/s1", allow_redirects=False
        )
        assert response.status_code == 302
        assert response.headers["Location"] == "https://videos.example/v.mp4"

    def test_local_file_streams(self, env):
        clip = env["tmp"] / "clip.mp4"
        clip.write_bytes(b"not really a video")
        enqueue(env["log"], context={"question": "q", "video_uri": str(clip)})
        response = requests.get(env["base"] + "/api/video/s1")
        assert response.status_code == 200
        assert response.content == b"not really a video"

    def test_unknown_sample_404(self, env):
        assert requests.get(env["base"] + "/api/video/ghost").status_code == 404


def test_single_instance_lock(env, tmp_path):
    other = ReviewService(env["log"])
    with pytest.raises(ServiceAlreadyRunning):
        serve_review(other, port=0)


def test_reject_then_regenerate_increments_attempt(env):
    """End to end: a rejection over HTTP makes the pipeline regenerate the
    sample; the new queue item carries attempt_no + 1."""
    sample = demo_sample(4)
    first_chain = serialize_chain(sample.gold_chain)
    second_chain = serialize_chain(
        CausalChain(
            [
                "the welder bumped the easel near the door",
                "the easel wobbled twice",
                sample.gold_answer,
            ]
        )
    )
    generator = ScriptedBackend(
        script=keyed_script({sample.question: [first_chain, second_chain]})
    )
    human = QueueHumanStage(env["log"], poll_interval=0.05, timeout_s=20.0)
    records = {}

    def run():
        records["record"] = construct_chain_for_sample(
            sample, generator, accepting_verifier(), PipelineConfig(), human=human
        )

    worker = threading.Thread(target=run)
    worker.start()
    try:
        def wait_item(attempt_no, timeout=10.0):
            deadline = time.monotonic() + timeout
            while time.monotonic() < deadline:
                item = requests.get(
                    env["base"] + "/api/queue/next?reviewer=alice"
                ).json()["item"]
                if item is not None and item["attempt_no"] == attempt_no:
                    return item
                time.sleep(0.05)
            raise AssertionError(f"no pending item with attempt_no={attempt_no}")

        item1 = wait_item(1)
        assert item1["sample_id"] == sample.id
        response = requests.post(
            env["base"] + f"/api/items/{item1['item_id']}/decision",
            json={"action": "reject", "reason": "wrong cause", "reviewer": "alice"},
        )
        assert response.status_code == 200

        item2 = wait_item(2)
        assert item2["sample_id"] == sample.id
        assert item2["attempt_no"] == 2
        assert item2["context"]["prior_reasons"] == ["wrong cause"]
        response = requests.post(
            env["base"] + f"/api/items/{item2['item_id']}/decision",
            json={"action": "approve", "reviewer": "alice"},
        )
        assert response.status_code == 200
    finally:
        worker.join(timeout=20)
    assert not worker.is_alive()
    record = records["record"]
    assert len(record.attempts) == 2
    assert record.attempts[0].human.status == "rejected"
    assert record.attempts[1].human.status == "approved"
    assert serialize_chain(record.final_chain) == second_chain
