"""Tests for the HTTP session service."""

import concurrent.futures
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from prefrank.domain import ValidationError
from prefrank.harness import SessionConfig, run_session
from prefrank.oracle import OracleConfig
from prefrank.service import create_app
from prefrank.synth import SyntheticConfig, make_pool, make_prior

POOL, GOLD = make_pool(SyntheticConfig(n=10, d=3, seed=0))
PRIORS = make_prior(GOLD, rho=0.6, seed=1)


def pool_payload(pool=POOL, with_ids=True):
    out = []
    for c in pool.candidates:
        rec = {"features": list(map(float, c.features)), "text": c.text}
        if with_ids:
            rec["id"] = c.id
        out.append(rec)
    return out


def priors_payload(priors=PRIORS):
    return [{"id": i, "score": float(v)} for i, v in enumerate(priors.mu)]


@pytest.fixture()
def client():
    with TestClient(create_app()) as c:
        yield c


def create(client, config=None, **extra):
    body = {"config": config or {"strategy": "imp", "max_interactions": 3, "seed": 5}}
    body.setdefault("pool", pool_payload())
    body.update(extra)
    return client.post("/v1/sessions", json=body)


class TestCreateSession:
    def test_valid_pool_gives_full_ranking(self, client):
        resp = create(client)
        assert resp.status_code == 201
        body = resp.json()
        assert body["schema_version"] == 1
        assert body["status"] == "ready"
        assert len(body["ranking"]) == POOL.size
        assert {e["id"] for e in body["ranking"]} == set(range(POOL.size))

    def test_pool_without_ids_renumbered(self, client):
        resp = create(client, pool=pool_payload(with_ids=False))
        assert resp.status_code == 201

    def test_single_candidate_pool_rejected(self, client):
        resp = create(client, pool=[{"features": [1.0], "text": "only"}])
        assert resp.status_code == 422
        assert resp.json()["code"] == "invalid-pool"

    def test_prior_warm_start_without_priors_rejected(self, client):
        resp = create(client, config={"strategy": "imp", "warm_start": "prior"})
        assert resp.status_code == 422
        assert resp.json()["code"] == "invalid-config"

    def test_prior_warm_start_initial_ranking_is_prior_order(self, client):
        resp = create(
            client,
            config={"strategy": "imp", "warm_start": "prior", "max_interactions": 3},
            priors=priors_payload(),
        )
        assert resp.status_code == 201
        got = [e["id"] for e in resp.json()["ranking"]]
        want = list(np.lexsort((np.arange(len(PRIORS.mu)), -PRIORS.mu)))
        assert got == want

    def test_cold_start_initial_ranking_is_id_order(self, client):
        resp = create(client)
        assert [e["id"] for e in resp.json()["ranking"]] == list(range(POOL.size))

    def test_pool_and_pool_id_both_rejected(self, client):
        resp = create(client, pool_id="demo")
        assert resp.status_code == 422

    def test_registered_pool_id(self):
        app = create_app(pool_registry={"demo": POOL})
        with TestClient(app) as c:
            resp = c.post(
                "/v1/sessions",
                json={"config": {"strategy": "random"}, "pool_id": "demo"},
            )
            assert resp.status_code == 201
            resp = c.post(
                "/v1/sessions",
                json={"config": {"strategy": "random"}, "pool_id": "nope"},
            )
            assert resp.status_code == 404
            assert resp.json()["code"] == "unknown-pool"

    def test_mismatched_feature_dims_rejected(self, client):
        bad = [{"features": [1.0, 2.0]}, {"features": [1.0]}]
        resp = create(client, pool=bad)
        assert resp.status_code == 422

    def test_bad_strategy_rejected(self, client):
        resp = create(client, config={"learner": "bt", "strategy": "imp"})
        assert resp.status_code == 422
        assert resp.json()["code"] == "invalid-config"

    def test_malformed_body_uses_error_shape(self, client):
        resp = client.post("/v1/sessions", json={"pool": "not a list"})
        assert resp.status_code == 422
        body = resp.json()
        assert body["code"] == "invalid-request"
        assert isinstance(body["details"], list)


class TestQueryAndLabel:
    def test_query_idempotent_until_labelled(self, client):
        sid = create(client).json()["session_id"]
        q1 = client.get(f"/v1/sessions/{sid}/query").json()
        q2 = client.get(f"/v1/sessions/{sid}/query").json()
        assert q1 == q2
        assert q1["remaining"] == 3
        assert {q1["placement"]["left"], q1["placement"]["right"]} == {q1["a"]["id"], q1["b"]["id"]}

    def test_fresh_imp_query_contains_prior_incumbent(self, client):
        resp = create(
            client,
            config={"strategy": "imp", "warm_start": "prior", "max_interactions": 3},
            priors=priors_payload(),
        )
        sid = resp.json()["session_id"]
        q = client.get(f"/v1/sessions/{sid}/query").json()
        assert q["a"]["id"] == int(np.argmax(PRIORS.mu))

    def test_label_advances_and_completes(self, client):
        sid = create(client).json()["session_id"]
        for step in range(3):
            q = client.get(f"/v1/sessions/{sid}/query").json()
            resp = client.post(
                f"/v1/sessions/{sid}/labels",
                json={"a_id": q["a"]["id"], "b_id": q["b"]["id"], "label": 1},
            )
            assert resp.status_code == 200
            body = resp.json()
            assert body["progress"]["labels"] == step + 1
            assert len(body["ranking"]) == POOL.size
        assert body["status"] == "complete"
        assert client.get(f"/v1/sessions/{sid}/query").status_code == 409
        assert client.get(f"/v1/sessions/{sid}/query").json()["code"] == "session-complete"

    def test_label_for_non_pending_pair_rejected(self, client):
        sid = create(client).json()["session_id"]
        q = client.get(f"/v1/sessions/{sid}/query").json()
        a, b = q["a"]["id"], q["b"]["id"]
        other = next(i for i in range(POOL.size) if i not in (a, b))
        resp = client.post(f"/v1/sessions/{sid}/labels", json={"a_id": a, "b_id": other, "label": 1})
        assert resp.status_code == 409
        assert resp.json()["code"] == "stale-pair"

    def test_label_without_query_rejected(self, client):
        sid = create(client).json()["session_id"]
        resp = client.post(f"/v1/sessions/{sid}/labels", json={"a_id": 0, "b_id": 1, "label": 1})
        assert resp.status_code == 409

    def test_bad_label_value_rejected(self, client):
        sid = create(client).json()["session_id"]
        q = client.get(f"/v1/sessions/{sid}/query").json()
        resp = client.post(
            f"/v1/sessions/{sid}/labels",
            json={"a_id": q["a"]["id"], "b_id": q["b"]["id"], "label": 2},
        )
        assert resp.status_code == 422
        assert resp.json()["code"] == "invalid-label"

    def test_unknown_session_404(self, client):
        assert client.get("/v1/sessions/ghost/query").status_code == 404
        assert client.get("/v1/sessions/ghost").status_code == 404
        assert client.get("/v1/sessions/ghost/ranking").status_code == 404
        body = client.get("/v1/sessions/ghost/query").json()
        assert body["code"] == "unknown-session"

    def test_concurrent_labels_exactly_one_succeeds(self, client):
        sid = create(client).json()["session_id"]
        q = client.get(f"/v1/sessions/{sid}/query").json()
        payload = {"a_id": q["a"]["id"], "b_id": q["b"]["id"], "label": 1}

        def post():
            return client.post(f"/v1/sessions/{sid}/labels", json=payload).status_code

        with concurrent.futures.ThreadPoolExecutor(max_workers=2) as ex:
            codes = sorted(ex.submit(post).result() for _ in range(2))
        assert codes == [200, 409]
        assert client.get(f"/v1/sessions/{sid}").json()["progress"]["labels"] == 1


class TestRankingAndInfo:
    def test_top_k_limits_entries(self, client):
        sid = create(client).json()["session_id"]
        resp = client.get(f"/v1/sessions/{sid}/ranking", params={"top_k": 5})
        assert resp.status_code == 200
        assert len(resp.json()["ranking"]) == 5

    def test_top_k_validation(self, client):
        sid = create(client).json()["session_id"]
        assert client.get(f"/v1/sessions/{sid}/ranking", params={"top_k": 0}).status_code == 422

    def test_ranking_sorted_desc_ties_by_id(self, client):
        sid = create(client).json()["session_id"]
        entries = client.get(f"/v1/sessions/{sid}/ranking").json()["ranking"]
        utils = [e["utility"] for e in entries]
        assert utils == sorted(utils, reverse=True)

    def test_info_reports_progress_and_config(self, client):
        sid = create(client).json()["session_id"]
        info = client.get(f"/v1/sessions/{sid}").json()
        assert info["status"] == "ready"
        assert info["progress"] == {"labels": 0, "budget": 3}
        assert info["config"]["strategy"] == "imp"

    def test_consistent_labels_promote_a_candidate(self, client):
        # Keep preferring whichever displayed candidate has the larger gold
        # score; the gold-best candidate must end up ranked first.
        body = {
            "config": {"strategy": "tp", "max_interactions": 25, "seed": 9},
            "pool": pool_payload(),
        }
        with TestClient(create_app()) as c:
            sid = c.post("/v1/sessions", json=body).json()["session_id"]
            status = "ready"
            while status != "complete":
                q = c.get(f"/v1/sessions/{sid}/query").json()
                a, b = q["a"]["id"], q["b"]["id"]
                label = 1 if GOLD.scores[a] >= GOLD.scores[b] else 0
                status = c.post(
                    f"/v1/sessions/{sid}/labels",
                    json={"a_id": a, "b_id": b, "label": label},
                ).json()["status"]
            top = c.get(f"/v1/sessions/{sid}/ranking", params={"top_k": 1}).json()["ranking"][0]
            assert top["id"] == int(np.argmax(GOLD.scores))


class TestReplayEquivalence:
    def test_http_session_reproduces_harness_ranking(self):
        cfg = SessionConfig(
            "gppl", "tp", max_interactions=8, seed=21, oracle=OracleConfig(t=0.5)
        )
        sim = run_session(cfg, POOL, GOLD)
        assert sim.error is None
        labels = {i: rec for i, rec in enumerate(sim.records.records)}

        with TestClient(create_app()) as c:
            body = {
                "config": {"strategy": "tp", "max_interactions": 8, "seed": 21},
                "pool": pool_payload(),
            }
            sid = c.post("/v1/sessions", json=body).json()["session_id"]
            for i in range(8):
                q = c.get(f"/v1/sessions/{sid}/query").json()
                rec = labels[i]
                assert (q["a"]["id"], q["b"]["id"]) == (rec.a_id, rec.b_id)
                c.post(
                    f"/v1/sessions/{sid}/labels",
                    json={"a_id": rec.a_id, "b_id": rec.b_id, "label": rec.label},
                )
            entries = c.get(f"/v1/sessions/{sid}/ranking").json()["ranking"]
        assert [e["id"] for e in entries] == list(sim.final_ranking)
        got = np.array([e["utility"] for e in entries])
        want = np.array([sim.final_utilities[e["id"]] for e in entries])
        assert np.allclose(got, want, atol=1e-12)


class TestEventLogReplay:
    def run_partial_session(self, log_dir, n_labels=2, budget=4):
        with TestClient(create_app(log_dir=log_dir)) as c:
            body = {
                "config": {"strategy": "imp", "max_interactions": budget, "seed": 3},
                "pool": pool_payload(),
            }
            sid = c.post("/v1/sessions", json=body).json()["session_id"]
            for _ in range(n_labels):
                q = c.get(f"/v1/sessions/{sid}/query").json()
                c.post(
                    f"/v1/sessions/{sid}/labels",
                    json={"a_id": q["a"]["id"], "b_id": q["b"]["id"], "label": 1},
                )
            pending = c.get(f"/v1/sessions/{sid}/query").json()
            ranking = c.get(f"/v1/sessions/{sid}/ranking").json()["ranking"]
        return sid, pending, ranking

    def test_restart_restores_state(self, tmp_path):
        sid, pending, ranking = self.run_partial_session(tmp_path)
        with TestClient(create_app(log_dir=tmp_path)) as c:
            info = c.get(f"/v1/sessions/{sid}").json()
            assert info["progress"]["labels"] == 2
            assert info["status"] == "awaiting_label"
            assert c.get(f"/v1/sessions/{sid}/query").json() == pending
            assert c.get(f"/v1/sessions/{sid}/ranking").json()["ranking"] == ranking

    def test_restarted_session_continues_to_completion(self, tmp_path):
        sid, pending, _ = self.run_partial_session(tmp_path)
        with TestClient(create_app(log_dir=tmp_path)) as c:
            status = "awaiting_label"
            while status != "complete":
                q = c.get(f"/v1/sessions/{sid}/query").json()
                status = c.post(
                    f"/v1/sessions/{sid}/labels",
                    json={"a_id": q["a"]["id"], "b_id": q["b"]["id"], "label": 0},
                ).json()["status"]
            assert c.get(f"/v1/sessions/{sid}").json()["progress"]["labels"] == 4

    def test_every_label_logged_exactly_once(self, tmp_path):
        sid, _, _ = self.run_partial_session(tmp_path, n_labels=3)
        events = [json.loads(l) for l in (tmp_path / f"{sid}.jsonl").read_text().splitlines()]
        labels = [e for e in events if e["event"] == "label"]
        assert len(labels) == 3
        queries = [e for e in events if e["event"] == "query"]
        assert len(queries) == 4  # three labelled plus the pending one
        assert events[0]["event"] == "create"

    def test_tampered_log_rejected(self, tmp_path):
        sid, _, _ = self.run_partial_session(tmp_path)
        path = tmp_path / f"{sid}.jsonl"
        events = [json.loads(l) for l in path.read_text().splitlines()]
        for ev in events:
            if ev["event"] == "label":
                ev["a_id"], ev["b_id"] = ev["b_id"], ev["a_id"]
                break
        path.write_text("\n".join(json.dumps(e) for e in events) + "\n")
        with pytest.raises(ValidationError):
            create_app(log_dir=tmp_path)
