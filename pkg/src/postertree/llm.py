"""OpenAI-compatible chat-completion client with a content-addressed disk cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from pathlib import Path
from typing import Any

import httpx

from .errors import BackendError

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4o"
BASE_URL_ENV = "PF_LLM_BASE_URL"
API_KEY_ENV = "PF_LLM_API_KEY"
RETRY_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


def request_key(payload: dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ChatClient:
    """Sends chat completions at temperature 0 and caches every reply on disk.

    Replies are cached before they are parsed, so a malformed reply is
    replayed as malformed on a warm rerun and the run takes the same path
    without touching the network.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str = DEFAULT_MODEL,
        cache_dir: str | os.PathLike[str] | None = None,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 60.0,
        retries: int = 2,
        backoff_s: float = 0.5,
    ) -> None:
        self.base_url = base_url if base_url is not None else os.environ.get(BASE_URL_ENV)
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.model = model
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.transport = transport
        self.timeout = timeout
        self.retries = retries
        self.backoff_s = backoff_s
        self.http_requests = 0
        self.cache_hits = 0
        self._http: httpx.Client | None = None

    # -- cache -------------------------------------------------------------

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / key[:2] / f"{key}.json"

    def _cache_get(self, key: str) -> str | None:
        path = self._cache_path(key)
        if path is None or not path.is_file():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))["content"]
        except (OSError, ValueError, KeyError) as exc:
            logger.warning("ignoring unreadable cache entry %s: %s", path, exc)
            return None

    def _cache_put(self, key: str, payload: dict[str, Any], content: str) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        record = json.dumps({"request": payload, "content": content}, sort_keys=True, ensure_ascii=False)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(record)
        os.replace(tmp, path)

    # -- transport ---------------------------------------------------------

    def _client(self) -> httpx.Client:
        if self._http is None:
            if not self.base_url:
                raise BackendError(f"no endpoint configured; set {BASE_URL_ENV}")
            headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
            self._http = httpx.Client(base_url=self.base_url, headers=headers, timeout=self.timeout, transport=self.transport)
        return self._http

    def _post(self, payload: dict[str, Any]) -> str:
        last = ""
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            self.http_requests += 1
            try:
                resp = self._client().post("/chat/completions", json=payload)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"unexpected response shape: {exc}") from exc
            if not isinstance(content, str):
                raise BackendError("response content is not a string")
            return content
        raise BackendError(f"request failed after {self.retries + 1} attempts: {last}")

    def complete(self, messages: list[dict[str, Any]], json_mode: bool = True) -> str:
        payload: dict[str, Any] = {"model": self.model, "messages": messages, "temperature": 0}
        if json_mode:
            payload["response_format"] = {"type": "json_object"}
        key = request_key(payload)
        cached = self._cache_get(key)
        if cached is not None:
            self.cache_hits += 1
            return cached
        content = self._post(payload)
        self._cache_put(key, payload, content)
        return content

    def complete_text(self, messages: list[dict[str, Any]]) -> str:
        return self.complete(messages, json_mode=False)

    def complete_json(self, messages: list[dict[str, Any]]) -> dict[str, Any]:
        content = self.complete(messages, json_mode=True)
        try:
            value = json.loads(content)
        except json.JSONDecodeError as exc:
            raise BackendError(f"reply is not valid JSON: {exc}") from exc
        if not isinstance(value, dict):
            raise BackendError("reply is not a JSON object")
        return value

    def close(self) -> None:
        if self._http is not None:
            self._http.close()
            self._http = None
