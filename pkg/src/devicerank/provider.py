"""HTTP client for an external embedding server.

Wire format::

    POST <url>  {"model": str, "mode": "query"|"document"|"symmetric", "texts": [str, ...]}
    200 OK      {"dim": int, "embeddings": [[float, ...], ...]}

Non-2xx responses are retried only when the status is >= 500.
"""

from __future__ import annotations

import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import httpx
import numpy as np

from ._validation import check_positive_int
from .embed import ROLES, SentenceEmbedding
from .exceptions import ContractError, TransportError

logger = logging.getLogger(__name__)


@dataclass
class ProviderConfig:
    url: str
    model: str
    dim: int | None = None
    batch_size: int = 32
    max_retries: int = 3
    backoff: float = 0.5
    max_backoff: float = 8.0
    timeout: float = 30.0
    max_in_flight: int = 1
    supports_asymmetric: bool = True
    api_key_env: str | None = None

    def __post_init__(self):
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.max_in_flight, "max_in_flight")
        check_positive_int(self.max_retries, "max_retries", minimum=0)
        if self.dim is not None:
            check_positive_int(self.dim, "dim")


class EmbeddingClient:
    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None,
                 sleep=time.sleep):
        self.config = config
        self._sleep = sleep
        headers = {}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(transport=transport, timeout=config.timeout, headers=headers)
        self.requests_sent = 0
        self._lock = threading.Lock()

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post(self, payload):
        cfg = self.config
        last_status = None
        last_error = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                delay = min(cfg.backoff * 2 ** (attempt - 1), cfg.max_backoff)
                logger.info("retrying embedding request in %.2fs (attempt %d)", delay, attempt + 1)
                self._sleep(delay)
            with self._lock:
                self.requests_sent += 1
            try:
                resp = self._http.post(cfg.url, json=payload)
            except httpx.TransportError as exc:
                last_status, last_error = None, f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code >= 500:
                last_status, last_error = resp.status_code, resp.text[:200]
                continue
            if resp.status_code >= 300:
                raise TransportError(
                    f"provider rejected request with status {resp.status_code}: {resp.text[:200]}",
                    status=resp.status_code,
                )
            try:
                return resp.json()
            except ValueError:
                raise ContractError("provider response is not JSON") from None
        raise TransportError(
            f"embedding provider failed after {cfg.max_retries + 1} attempts "
            f"(last status {last_status}): {last_error}",
            status=last_status,
        )

    def _check(self, body, n_texts):
        if not isinstance(body, dict) or "embeddings" not in body or "dim" not in body:
            raise ContractError("provider response must carry 'dim' and 'embeddings'")
        dim = body["dim"]
        if not isinstance(dim, int) or dim <= 0:
            raise ContractError(f"provider declared invalid dim {dim!r}")
        if self.config.dim is not None and dim != self.config.dim:
            raise ContractError(f"provider declared dim {dim}, configured {self.config.dim}")
        rows = body["embeddings"]
        if not isinstance(rows, list) or len(rows) != n_texts:
            got = len(rows) if isinstance(rows, list) else type(rows).__name__
            raise ContractError(f"provider returned {got} embeddings for {n_texts} texts")
        out = []
        for i, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != dim:
                n = len(row) if isinstance(row, list) else "?"
                raise ContractError(f"embedding {i} has {n} values, provider declared dim {dim}")
            vec = np.asarray(row, dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise ContractError(f"embedding {i} has non-finite values")
            out.append(vec)
        return dim, out

    def embed(self, texts, mode="symmetric"):
        texts = list(texts)
        if not texts:
            return []
        size = self.config.batch_size
        batches = [texts[i:i + size] for i in range(0, len(texts), size)]

        def run(batch):
            body = self._post({"model": self.config.model, "mode": mode, "texts": batch})
            return self._check(body, len(batch))

        if self.config.max_in_flight > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
                results = list(pool.map(run, batches))
        else:
            results = [run(b) for b in batches]
        dims = {d for d, _ in results}
        if len(dims) != 1:
            raise ContractError(f"provider changed dimension between batches: {sorted(dims)}")
        return [vec for _, rows in results for vec in rows]

    def n_batches(self, n_texts):
        return math.ceil(n_texts / self.config.batch_size)


def embed_external(texts, role, client: EmbeddingClient, backend_id=None):
    """Embed ``texts`` with the provider, one SentenceEmbedding per text, in order."""
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}, got {role!r}")
    if not client.config.supports_asymmetric:
        role = "symmetric"
    vectors = client.embed(texts, mode=role)
    backend_id = backend_id or f"external:{client.config.model}"
    return [SentenceEmbedding(v, backend_id, role) for v in vectors]
