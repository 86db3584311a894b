import pytest
from fastapi.testclient import TestClient

from trialcensus.labels import LabelStore, assign_splits
from trialcensus.labels_service import create_app
from trialcensus.universe import RuleSet, build_universe

from conftest import synthetic_corpus


@pytest.fixture()
def service(tmp_path):
    corpus, _ = synthetic_corpus(400, seed=41)
    flags = build_universe(corpus, RuleSet(), (2008, 2024))
    assignments = assign_splits(
        flags, corpus, sizes={"train": 8, "validation": 4, "test": 4}, seed=1
    )
    store = LabelStore(
        str(tmp_path / "labels.jsonl"), known_pmids={a.pmid for a in assignments}
    )
    app = create_app(store, assignments, corpus)
    return TestClient(app), assignments, store


def queue(client, labeler="ann", split="train"):
    resp = client.get("/queue", params={"labeler": labeler, "split": split})
    assert resp.status_code == 200
    return resp.json()


def submit(client, pmid, verdict="include", reason=None, labeler="ann", revision=0):
    return client.post(
        "/labels",
        json={
            "pmid": pmid,
            "verdict": verdict,
            "reason": reason,
            "labeler": labeler,
            "revision": revision,
        },
    )


class TestQueue:
    def test_items_served_in_position_order(self, service):
        client, assignments, _ = service
        train = sorted(
            (a for a in assignments if a.split == "train"), key=lambda a: a.position
        )
        item = queue(client)
        assert item["done"] is False
        assert item["pmid"] == train[0].pmid
        assert item["position"] == 0
        assert item["remaining"] == len(train)
        assert item["title"] and item["abstract"]

    def test_lease_is_stable_under_refresh(self, service):
        client, _, _ = service
        first = queue(client)
        second = queue(client)
        assert first["pmid"] == second["pmid"]

    def test_two_labelers_get_disjoint_items(self, service):
        client, _, _ = service
        a = queue(client, labeler="ann")
        b = queue(client, labeler="bob")
        assert a["pmid"] != b["pmid"]

    def test_unknown_split_and_empty_labeler_rejected(self, service):
        client, _, _ = service
        assert client.get("/queue", params={"labeler": "ann", "split": "dev"}).status_code == 422
        assert client.get("/queue", params={"labeler": "", "split": "train"}).status_code == 422

    def test_done_when_split_fully_labeled(self, service):
        client, assignments, _ = service
        val = [a.pmid for a in assignments if a.split == "validation"]
        for pmid in val:
            assert submit(client, pmid).json()["status"] == "recorded"
        out = queue(client, split="validation")
        assert out == {"done": True, "remaining": 0}


class TestSubmit:
    def test_submission_advances_the_queue(self, service):
        client, _, _ = service
        first = queue(client)
        resp = submit(client, first["pmid"])
        assert resp.status_code == 200
        assert resp.json() == {"status": "recorded", "pmid": first["pmid"], "revision": 0}
        nxt = queue(client)
        assert nxt["pmid"] != first["pmid"]

    def test_duplicate_submission_reports_duplicate(self, service):
        client, _, _ = service
        first = queue(client)
        submit(client, first["pmid"])
        again = submit(client, first["pmid"])
        assert again.status_code == 200
        assert again.json()["status"] == "duplicate"

    def test_conflict_is_409(self, service):
        client, _, _ = service
        first = queue(client)
        submit(client, first["pmid"], verdict="include")
        resp = submit(client, first["pmid"], verdict="exclude", reason="animal")
        assert resp.status_code == 409

    def test_validation_failure_is_422(self, service):
        client, _, _ = service
        first = queue(client)
        resp = submit(client, first["pmid"], verdict="exclude", reason=None)
        assert resp.status_code == 422

    def test_unknown_pmid_is_422(self, service):
        client, _, _ = service
        assert submit(client, "does-not-exist").status_code == 422

    def test_revision_supersedes(self, service):
        client, _, store = service
        first = queue(client)
        submit(client, first["pmid"], verdict="include", revision=0)
        resp = submit(client, first["pmid"], verdict="exclude", reason="other", revision=1)
        assert resp.status_code == 200
        effective = store.effective_labels()[first["pmid"]]
        assert effective.verdict == "exclude" and effective.revision == 1


class TestProgress:
    def test_progress_matches_store(self, service):
        client, assignments, _ = service
        train = [a.pmid for a in assignments if a.split == "train"]
        submit(client, train[0], verdict="include")
        submit(client, train[1], verdict="exclude", reason="observational")
        stats = client.get("/progress", params={"split": "train"}).json()
        assert stats["n"] == 2
        assert stats["positive_share"] == 0.5
        assert stats["reason_histogram"]["observational"] == 1

    def test_unknown_split_rejected(self, service):
        client, _, _ = service
        assert client.get("/progress", params={"split": "dev"}).status_code == 422


class TestAuth:
    def test_token_required_when_configured(self, tmp_path):
        corpus, _ = synthetic_corpus(200, seed=42)
        flags = build_universe(corpus, RuleSet(), (2008, 2024))
        assignments = assign_splits(
            flags, corpus, sizes={"train": 4, "validation": 2, "test": 2}, seed=1
        )
        store = LabelStore(str(tmp_path / "labels.jsonl"))
        app = create_app(store, assignments, corpus, token="sekrit")
        client = TestClient(app)
        bare = client.get("/queue", params={"labeler": "ann", "split": "train"})
        assert bare.status_code == 401
        ok = client.get(
            "/queue",
            params={"labeler": "ann", "split": "train"},
            headers={"X-Auth-Token": "sekrit"},
        )
        assert ok.status_code == 200
