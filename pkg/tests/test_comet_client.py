import os
import random

import pytest
import requests

from emomt import comet_client
from emomt.comet_client import EndpointCometClient, LocalCometClient, StubCometClient, make_comet_client
from emomt.errors import TransportError
from emomt.evaluation import EvalPair, comet_score
from tests.conftest import FakeResponse


def _data(n):
    return [{"src": f"source {i}", "mt": f"hyp {i}", "ref": f"ref {i}"} for i in range(n)]


class TestStubClient:
    def test_in_unit_range_and_stable(self):
        scores = StubCometClient().predict(_data(20))
        assert all(0.0 <= s <= 1.0 for s in scores)
        assert scores == StubCometClient().predict(_data(20))

    def test_depends_on_every_field(self):
        base = {"src": "a", "mt": "b", "ref": "c"}
        variants = [base, {**base, "src": "x"}, {**base, "mt": "x"}, {**base, "ref": "x"}]
        assert len(set(StubCometClient().predict(variants))) == 4


class TestEndpointClient:
    def test_batches_keep_order(self, fake_session):
        def handler(url, payload):
            return FakeResponse(body={"scores": [int(item["mt"].split()[1]) / 100 for item in payload["data"]]})
        session = fake_session(handler)
        client = EndpointCometClient("http://comet.local/score", batch_size=4, max_workers=3, session=session)
        scores = client.predict(_data(10))
        assert scores == pytest.approx([i / 100 for i in range(10)])
        assert len(session.calls) == 3
        assert session.calls[0][1]["model"] == client.model

    def test_connection_error(self, fake_session):
        def handler(url, payload):
            raise requests.ConnectionError("refused")
        client = EndpointCometClient("http://comet.local/score", session=fake_session(handler))
        with pytest.raises(TransportError, match="unreachable"):
            client.predict(_data(2))

    def test_bad_status(self, fake_session):
        client = EndpointCometClient(
            "http://comet.local/score", session=fake_session(lambda u, p: FakeResponse(500, text="boom"))
        )
        with pytest.raises(TransportError, match="500"):
            client.predict(_data(2))

    def test_wrong_count(self, fake_session):
        client = EndpointCometClient(
            "http://comet.local/score", session=fake_session(lambda u, p: FakeResponse(body={"scores": [0.5]}))
        )
        with pytest.raises(TransportError):
            client.predict(_data(3))

    def test_malformed_body(self, fake_session):
        client = EndpointCometClient(
            "http://comet.local/score", session=fake_session(lambda u, p: FakeResponse(body={"oops": 1}))
        )
        with pytest.raises(TransportError):
            client.predict(_data(1))


class TestClientSelection:
    def test_explicit_endpoint(self):
        assert isinstance(make_comet_client("http://comet.local/score"), EndpointCometClient)

    def test_configured_endpoint(self, monkeypatch):
        monkeypatch.setattr(comet_client.config, "COMET_ENDPOINT", "http://configured/score")
        client = make_comet_client()
        assert isinstance(client, EndpointCometClient)
        assert client.url == "http://configured/score"

    def test_stub_fallback(self, monkeypatch):
        monkeypatch.setattr(comet_client.config, "COMET_ENDPOINT", None)
        assert isinstance(make_comet_client(), StubCometClient)

    def test_local(self):
        client = make_comet_client(local=True)
        assert isinstance(client, LocalCometClient)
        assert client.scorer_id.endswith("@local")


@pytest.mark.skipif(not os.environ.get("EMOMT_COMET_ENDPOINT"), reason="no COMET endpoint configured")
class TestRealScorer:
    def test_identity_beats_shuffled(self):
        sources = ["The cat sleeps.", "Good night.", "Where is the station?", "Thank you very much."]
        references = ["Le chat dort.", "Bonne nuit.", "Où est la gare ?", "Merci beaucoup."]
        shuffled = list(references)
        random.Random(3).shuffle(shuffled)
        if shuffled == references:
            shuffled = references[1:] + references[:1]
        client = make_comet_client(os.environ["EMOMT_COMET_ENDPOINT"])
        identity = comet_score(sources, [EvalPair(r, r) for r in references], client)
        mixed = comet_score(sources, [EvalPair(h, r) for h, r in zip(shuffled, references)], client)
        assert identity.score > mixed.score
