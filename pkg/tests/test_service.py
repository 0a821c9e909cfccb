import json

import pytest
from fastapi.testclient import TestClient

from linkforge.annotate import AssemblyConfig, Decision
from linkforge.errors import AuthError, ValidationError
from linkforge.retrieval import ScoredRanking
from linkforge.service import (AnnotationSession, DecisionStore,
                               assemble_session, create_app, import_export,
                               load_session_file, read_export,
                               write_session_file)


def _decision(annotator, pair_id, source_idx, target_idx, accepted):
    return Decision(annotator, pair_id, source_idx, target_idx, accepted,
                    "2026-01-01T00:00:00+00:00")


@pytest.fixture
def session(tmp_path, tiny_dataset):
    rankings = {
        pair.pair_id: {
            s.index: ScoredRanking.from_scores(
                s.index, [float(len(pair.target) - j) for j in range(len(pair.target))])
            for s in pair.source.sentences
        }
        for pair, _ in tiny_dataset.pairs
    }
    pairs, bundles = assemble_session(tiny_dataset, rankings, rankings,
                                      AssemblyConfig.preset("news"), base_seed=5)
    store = DecisionStore(tmp_path / "store.jsonl")
    return AnnotationSession({p.pair_id: p for p in pairs}, bundles, store,
                             roster={"ann1", "ann2"})


# ---------------------------------------------------------------------------
# store
# ---------------------------------------------------------------------------

def test_store_flip_updates_live_and_appends(tmp_path):
    store = DecisionStore(tmp_path / "log.jsonl")
    d1 = _decision("a", "p", 0, 1, True)
    assert store.append(d1) is True
    assert store.log_length == 1
    flipped = _decision("a", "p", 0, 1, False)
    assert store.append(flipped) is True
    assert store.log_length == 2          # superseded entry kept in the log
    assert store.live[d1.key].accepted is False
    assert len(store.live) == 1


def test_store_identical_resubmission_is_idempotent(tmp_path):
    store = DecisionStore(tmp_path / "log.jsonl")
    d = _decision("a", "p", 0, 1, True)
    assert store.append(d) is True
    assert store.append(d) is False
    assert store.log_length == 1
    assert len(store.live) == 1


def test_store_replays_log_after_restart(tmp_path):
    path = tmp_path / "log.jsonl"
    store = DecisionStore(path)
    store.append(_decision("a", "p", 0, 1, True))
    store.append(_decision("a", "p", 0, 2, False))
    store.append(_decision("a", "p", 0, 1, False))
    store.close()
    reopened = DecisionStore(path)
    assert reopened.log_length == 3
    assert reopened.live[("a", "p", 0, 1)].accepted is False
    assert reopened.live[("a", "p", 0, 2)].accepted is False


def test_store_compaction_drops_superseded(tmp_path):
    path = tmp_path / "log.jsonl"
    store = DecisionStore(path)
    for accepted in (True, False, True):
        store.append(_decision("a", "p", 0, 1, accepted))
    assert store.log_length == 3
    store.compact()
    assert store.log_length == 1
    assert path.read_text().count("\n") == 1
    assert store.live[("a", "p", 0, 1)].accepted is True


# ---------------------------------------------------------------------------
# session logic
# ---------------------------------------------------------------------------

def test_fresh_session_serves_first_bundle(session):
    bundle = session.next_task("ann1")
    assert bundle == session.bundles[0]


def test_unknown_annotator_is_auth_error(session):
    with pytest.raises(AuthError):
        session.next_task("stranger")


def test_next_task_stays_on_current_pair(session):
    first = session.bundles[0]
    for t in first.target_indices():
        session.submit_decision(_decision("ann1", first.pair_id, first.source_idx, t, False))
    second = session.next_task("ann1")
    assert second == session.bundles[1]
    assert second.pair_id == first.pair_id  # same pair continues first


def test_partial_bundle_is_served_again(session):
    first = session.bundles[0]
    t0 = first.target_indices()[0]
    session.submit_decision(_decision("ann1", first.pair_id, first.source_idx, t0, True))
    assert session.next_task("ann1") == first


def test_done_marker_after_all_bundles(session):
    for bundle in session.bundles:
        for t in bundle.target_indices():
            session.submit_decision(
                _decision("ann1", bundle.pair_id, bundle.source_idx, t, True))
    assert session.next_task("ann1") is None
    assert session.progress("ann1").completed == len(session.bundles)
    # other annotators are unaffected
    assert session.next_task("ann2") == session.bundles[0]


def test_submit_unknown_candidate_rejected(session):
    with pytest.raises(ValidationError):
        session.submit_decision(_decision("ann1", "p1", 0, 99, True))


def test_crash_recovery_resumes_same_bundle(tmp_path, session):
    first = session.bundles[0]
    t0 = first.target_indices()[0]
    session.submit_decision(_decision("ann1", first.pair_id, first.source_idx, t0, True))
    session.store.close()
    # rebuild from the same log: replay must reach the same state
    store2 = DecisionStore(session.store.path)
    session2 = AnnotationSession(session.pairs, session.bundles, store2,
                                 roster={"ann1", "ann2"})
    assert session2.next_task("ann1") == first
    assert store2.live == session.store.live


def test_export_empty_store(session):
    assert list(session.export_records()) == []


def test_every_acknowledged_decision_appears_in_export(session):
    submitted = []
    for bundle in session.bundles[:3]:
        for t in bundle.target_indices():
            d = _decision("ann1", bundle.pair_id, bundle.source_idx, t, t % 2 == 0)
            session.submit_decision(d)
            submitted.append(d)
    exported = list(session.export_records())
    keys = {(r["pair_id"], r["source_idx"], r["target_idx"]) for r in exported}
    for d in submitted:
        assert (d.pair_id, d.source_idx, d.target_idx) in keys
    for r in exported:
        assert set(r["decisions"]) == {"ann1"}
        assert r["provenance"]


def test_export_filter_by_annotator(session):
    first = session.bundles[0]
    t0 = first.target_indices()[0]
    session.submit_decision(_decision("ann1", first.pair_id, first.source_idx, t0, True))
    session.submit_decision(_decision("ann2", first.pair_id, first.source_idx, t0, False))
    only = list(session.export_records(annotator="ann2"))
    assert len(only) == 1 and set(only[0]["decisions"]) == {"ann2"}
    both = list(session.export_records())
    assert set(both[0]["decisions"]) == {"ann1", "ann2"}


def test_export_import_round_trip(tmp_path, session):
    for bundle in session.bundles[:2]:
        for i, t in enumerate(bundle.target_indices()):
            session.submit_decision(
                _decision("ann1", bundle.pair_id, bundle.source_idx, t, i % 2 == 0))
            session.submit_decision(
                _decision("ann2", bundle.pair_id, bundle.source_idx, t, i % 2 == 1))
    export_path = tmp_path / "export.jsonl"
    with open(export_path, "w") as fh:
        for record in session.export_records():
            fh.write(json.dumps(record) + "\n")
    store2 = DecisionStore(tmp_path / "imported.jsonl")
    import_export(read_export(export_path), store2)
    assert {k: v.accepted for k, v in store2.live.items()} == \
        {k: v.accepted for k, v in session.store.live.items()}


# ---------------------------------------------------------------------------
# session files
# ---------------------------------------------------------------------------

def test_session_file_round_trip(tmp_path, session):
    path = tmp_path / "session.jsonl"
    write_session_file(path, list(session.pairs.values()), session.bundles)
    pairs, bundles = load_session_file(path)
    assert set(pairs) == set(session.pairs)
    assert bundles == session.bundles  # order and content preserved


def test_assemble_session_is_deterministic(tmp_path, tiny_dataset):
    rankings = {
        pair.pair_id: {
            s.index: ScoredRanking.from_scores(
                s.index, [float(len(pair.target) - j) for j in range(len(pair.target))])
            for s in pair.source.sentences
        }
        for pair, _ in tiny_dataset.pairs
    }
    cfg = AssemblyConfig.preset("news")
    _, bundles_a = assemble_session(tiny_dataset, rankings, rankings, cfg, base_seed=9)
    _, bundles_b = assemble_session(tiny_dataset, rankings, rankings, cfg, base_seed=9)
    assert bundles_a == bundles_b


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

@pytest.fixture
def client(session):
    return TestClient(create_app(session))


def test_http_health(client, session):
    body = client.get("/health").json()
    assert body["status"] == "ok" and body["bundles"] == len(session.bundles)


def test_http_pairs_listing(client):
    body = client.get("/pairs").json()
    assert {p["pair_id"] for p in body["pairs"]} == {"p1", "p2"}
    assert all(p["bundles"] > 0 for p in body["pairs"])


def test_http_task_flow_and_auth(client, session):
    assert client.get("/tasks/next", params={"annotator": "nobody"}).status_code == 401

    task = client.get("/tasks/next", params={"annotator": "ann1"}).json()
    assert task["done"] is False
    payload = task["task"]
    assert payload["pair_id"] == session.bundles[0].pair_id
    assert payload["source_doc"]["sentences"] and payload["target_doc"]["sentences"]
    assert all("provenance" in c for c in payload["candidates"])

    for c in payload["candidates"]:
        resp = client.post("/decisions", json={
            "annotator": "ann1", "pair_id": payload["pair_id"],
            "source_idx": payload["source_idx"],
            "target_idx": c["target_idx"], "accepted": True,
        })
        assert resp.status_code == 200 and resp.json()["ok"]

    advanced = client.get("/tasks/next", params={"annotator": "ann1"}).json()
    assert advanced["task"]["source_idx"] != payload["source_idx"] or \
        advanced["task"]["pair_id"] != payload["pair_id"]
    assert advanced["task"]["progress"]["completed"] == 1


def test_http_rejects_unknown_candidate(client):
    resp = client.post("/decisions", json={
        "annotator": "ann1", "pair_id": "p1",
        "source_idx": 0, "target_idx": 99, "accepted": True,
    })
    assert resp.status_code == 404
    assert "unknown candidate" in resp.json()["detail"]


def test_http_export_stream(client, session):
    first = session.bundles[0]
    client.post("/decisions", json={
        "annotator": "ann1", "pair_id": first.pair_id,
        "source_idx": first.source_idx,
        "target_idx": first.target_indices()[0], "accepted": True,
    })
    text = client.get("/export").text
    lines = [json.loads(l) for l in text.strip().splitlines()]
    assert len(lines) == 1
    assert lines[0]["decisions"] == {"ann1": True}
