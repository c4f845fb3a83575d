"""HTTP contract tests for the sidecar service."""

from fastapi.testclient import TestClient

from nli_sidecar.app import create_app
from nli_sidecar.config import SidecarConfig
from nli_sidecar.scorers import OverlapHeuristicScorer


def _nli(client, pairs):
    return client.post("/v1/nli", json={"pairs": pairs})


class TestHealthz:
    def test_ready_service_reports_ok(self, client):
        resp = client.get("/healthz")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["model_version"] == "overlap-heuristic-1"

    def test_unready_service_reports_503(self, debug_config):
        app = create_app(debug_config, lazy=True)
        lazy_client = TestClient(app)
        assert lazy_client.get("/healthz").status_code == 503
        assert lazy_client.post("/v1/nli", json={"pairs": [{"text_a": "a", "text_b": "b"}]}).status_code == 503

    def test_becomes_ready_after_load(self, debug_config):
        app = create_app(debug_config, lazy=True)
        lazy_client = TestClient(app)
        assert lazy_client.get("/healthz").status_code == 503
        app.state.ensure_loaded()
        assert lazy_client.get("/healthz").status_code == 200


class TestNliEndpoint:
    def test_schema_round_trip_full_batch(self, client, debug_config):
        """A max-size batch comes back with one float triple per pair, in order."""
        n = debug_config.max_batch
        pairs = [
            {"text_a": f"Question {i}? answer {i}", "text_b": f"Question {i}? It must be answer {i}"}
            for i in range(n)
        ]
        resp = _nli(client, pairs)
        assert resp.status_code == 200
        body = resp.json()
        assert set(body) == {"model_version", "verdicts"}
        assert body["model_version"] == "overlap-heuristic-1"
        assert len(body["verdicts"]) == n
        for verdict in body["verdicts"]:
            assert set(verdict) == {"entailment", "neutral", "contradiction"}
            assert all(isinstance(verdict[k], float) for k in verdict)

    def test_response_order_matches_request_order(self, client):
        pairs = [
            {"text_a": "Q? Paris", "text_b": "Q? It must be Lyon"},
            {"text_a": "Q? Paris", "text_b": "Q? It must be Paris"},
            {"text_a": "Q? Paris", "text_b": "Q? It must be Lyon"},
        ]
        verdicts = _nli(client, pairs).json()["verdicts"]
        assert verdicts[0]["contradiction"] > verdicts[0]["entailment"]
        assert verdicts[1]["entailment"] > verdicts[1]["contradiction"]
        assert verdicts[2] == verdicts[0]

    def test_repeated_request_identical_logits(self, client):
        pairs = [
            {"text_a": "Who wrote Hamlet? Shakespeare", "text_b": "Who wrote Hamlet? It must be Shakespeare"},
            {"text_a": "Who wrote Hamlet? Shakespeare", "text_b": "Who wrote Hamlet? It must be Marlowe"},
        ]
        first = _nli(client, pairs).json()
        second = _nli(client, pairs).json()
        assert first == second

    def test_oversized_batch_rejected_413(self, debug_config):
        config = SidecarConfig(model_identifier="debug", max_batch=4)
        client = TestClient(create_app(config, scorer=OverlapHeuristicScorer()))
        pairs = [{"text_a": "a b", "text_b": "c d"}] * 5
        resp = _nli(client, pairs)
        assert resp.status_code == 413
        assert "exceeds" in resp.json()["detail"]

    def test_batch_at_limit_accepted(self):
        config = SidecarConfig(model_identifier="debug", max_batch=4)
        client = TestClient(create_app(config, scorer=OverlapHeuristicScorer()))
        pairs = [{"text_a": "a b", "text_b": "c d"}] * 4
        assert _nli(client, pairs).status_code == 200

    def test_malformed_body_rejected_400(self, client):
        assert client.post("/v1/nli", json={"pairs": "oops"}).status_code == 400
        assert client.post("/v1/nli", json={}).status_code == 400
        assert client.post(
            "/v1/nli", content=b"not json", headers={"content-type": "application/json"}
        ).status_code == 400

    def test_empty_pair_list_rejected_400(self, client):
        assert _nli(client, []).status_code == 400

    def test_empty_text_rejected_400(self, client):
        assert _nli(client, [{"text_a": "", "text_b": "b"}]).status_code == 400
        assert _nli(client, [{"text_a": "a", "text_b": ""}]).status_code == 400


class TestFixtureBehaviour:
    def test_paraphrase_pairs_score_entailment(self, client, scorer_fixture):
        pairs = [
            {"text_a": r["text_a"], "text_b": r["text_b"]}
            for r in scorer_fixture["paraphrase"]
        ]
        for row, verdict in zip(scorer_fixture["paraphrase"], _nli(client, pairs).json()["verdicts"]):
            assert verdict["entailment"] == row["entailment"]
            assert verdict["neutral"] == row["neutral"]
            assert verdict["contradiction"] == row["contradiction"]
            assert verdict["entailment"] > max(verdict["neutral"], verdict["contradiction"])

    def test_contradiction_pairs_score_contradiction(self, client, scorer_fixture):
        pairs = [
            {"text_a": r["text_a"], "text_b": r["text_b"]}
            for r in scorer_fixture["contradiction"]
        ]
        for row, verdict in zip(scorer_fixture["contradiction"], _nli(client, pairs).json()["verdicts"]):
            assert verdict["entailment"] == row["entailment"]
            assert verdict["neutral"] == row["neutral"]
            assert verdict["contradiction"] == row["contradiction"]
            assert verdict["contradiction"] > max(verdict["neutral"], verdict["entailment"])
