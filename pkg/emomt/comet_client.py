"""
Clients for the COMET learned metric

The metric is a trained network and is never run in-process by default.
Every client returns segment scores on COMET's native 0-1 scale; the
evaluation module aggregates and rescales to 0-100.
"""
import hashlib
import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor

import requests

from emomt import config
from emomt.errors import TransportError, ValidationError
from emomt.utils import chunked

logger = logging.getLogger(__name__)


class CometClient(ABC):
    """Scores (source, hypothesis, reference) triples"""

    scorer_id = None

    @abstractmethod
    def predict(self, data):
        """
        Score segments

        Args:
            data: List of {"src", "mt", "ref"} dicts

        Returns:
            list: One float per segment, same order
        """


class StubCometClient(CometClient):
    """
    Deterministic stand-in for pipeline tests

    Each segment scores a value in [0, 1] derived from a hash of its triple.
    """

    scorer_id = "stub-sha256"

    def predict(self, data):
        scores = []
        for item in data:
            digest = hashlib.sha256(
                "\x1f".join((item["src"], item["mt"], item["ref"])).encode("utf-8")
            ).digest()
            scores.append(int.from_bytes(digest[:8], "big") / float(2 ** 64 - 1))
        return scores


class EndpointCometClient(CometClient):
    """
    HTTP client for a COMET scoring service

    POSTs {"data": [{"src", "mt", "ref"}, ...]} per batch and expects
    {"scores": [...]} with one value per segment.
    """

    def __init__(self, url, model=None, batch_size=None, max_workers=None, timeout=None, session=None):
        self.url = url
        self.model = model or config.COMET_MODEL
        self.batch_size = batch_size or config.REQUEST_BATCH_SIZE
        self.max_workers = max_workers or config.MAX_WORKERS
        self.timeout = timeout or config.REQUEST_TIMEOUT
        self.session = session or requests.Session()

    @property
    def scorer_id(self):
        return f"{self.model}@{self.url}"

    def _post_batch(self, batch):
        try:
            response = self.session.post(
                self.url, json={"model": self.model, "data": batch}, timeout=self.timeout
            )
        except requests.RequestException as e:
            raise TransportError(f"COMET endpoint {self.url} unreachable: {e}") from e
        if response.status_code != 200:
            raise TransportError(
                f"COMET endpoint {self.url} returned {response.status_code}: {response.text[:200]}"
            )
        try:
            scores = [float(s) for s in response.json()["scores"]]
        except (ValueError, KeyError, TypeError) as e:
            raise TransportError(f"COMET endpoint {self.url} sent an unexpected body: {e}") from e
        if len(scores) != len(batch):
            raise TransportError(f"COMET endpoint returned {len(scores)} scores for {len(batch)} segments")
        return scores

    def predict(self, data):
        batches = chunked(list(data), self.batch_size)
        logger.info(f"Scoring {len(data)} segments with COMET in {len(batches)} batches")
        scores = []
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            # map() yields in submission order
            for batch_scores in pool.map(self._post_batch, batches):
                scores.extend(batch_scores)
        return scores


class LocalCometClient(CometClient):
    """Runs COMET in-process through the unbabel-comet package (optional extra)"""

    def __init__(self, model=None, batch_size=None, gpus=0):
        self.model_name = model or config.COMET_MODEL
        self.batch_size = batch_size or config.REQUEST_BATCH_SIZE
        self.gpus = gpus
        self._model = None

    @property
    def scorer_id(self):
        return f"{self.model_name}@local"

    def _load(self):
        if self._model is None:
            try:
                from comet import download_model, load_from_checkpoint
            except ImportError as e:
                raise ValidationError("LocalCometClient needs the unbabel-comet package (pip install emomt[comet])") from e
            logger.info(f"Loading COMET model {self.model_name}")
            self._model = load_from_checkpoint(download_model(self.model_name))
        return self._model

    def predict(self, data):
        output = self._load().predict(list(data), batch_size=self.batch_size, gpus=self.gpus)
        return [float(s) for s in output.scores]


def make_comet_client(endpoint=None, local=False):
    """
    Pick a COMET client from arguments and configuration

    An explicit endpoint wins, then --local, then EMOMT_COMET_ENDPOINT;
    without any of them the stub client is used.
    """
    if endpoint:
        return EndpointCometClient(endpoint)
    if local:
        return LocalCometClient()
    if config.COMET_ENDPOINT:
        return EndpointCometClient(config.COMET_ENDPOINT)
    logger.warning("No COMET endpoint configured, using the deterministic stub scorer")
    return StubCometClient()
