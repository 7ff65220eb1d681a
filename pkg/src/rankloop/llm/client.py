"""Minimal chat-completions transport with bounded retries and audit logging.

The wire format is the common one: POST <endpoint> with
{"model", "messages", "temperature", "max_tokens"} and read
choices[0].message.content. Attachment references (video or frame paths)
ride along in an "attachments" field; fetching media is the backend's
business, never ours.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import httpx

ENDPOINT_ENV = "RANKLOOP_ENDPOINT"
API_KEY_ENV = "RANKLOOP_API_KEY"


class TransportError(RuntimeError):
    """The backend could not be reached or replied outside the protocol."""


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Mapping[str, str], ...]
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 512
    attachments: tuple[str, ...] = ()

    @classmethod
    def user(cls, prompt: str, **kwargs) -> "ChatRequest":
        return cls(messages=({"role": "user", "content": prompt},), **kwargs)

    def payload(self) -> dict:
        body: dict = {
            "model": self.model,
            "messages": [dict(m) for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        if self.attachments:
            body["attachments"] = list(self.attachments)
        return body


@dataclass(frozen=True)
class Completion:
    text: str
    latency: float
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


def _post_once(endpoint: str, payload: dict, headers: dict, timeout: float) -> Completion:
    started = time.perf_counter()
    try:
        response = httpx.post(endpoint, json=payload, headers=headers, timeout=timeout)
    except httpx.HTTPError as exc:
        raise TransportError(f"request failed: {exc}") from exc
    latency = time.perf_counter() - started
    if response.status_code >= 500:
        raise TransportError(f"server error {response.status_code}")
    if response.status_code != 200:
        raise TransportError(f"unexpected status {response.status_code}", )
    try:
        body = response.json()
        text = body["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion envelope: {exc}") from exc
    usage = body.get("usage", {}) if isinstance(body, dict) else {}
    return Completion(
        text=text,
        latency=latency,
        prompt_tokens=usage.get("prompt_tokens"),
        completion_tokens=usage.get("completion_tokens"),
    )


def complete(
    request: ChatRequest,
    endpoint: str | None = None,
    api_key: str | None = None,
    timeout: float = 30.0,
    retries: int = 1,
    retry_delay: float = 0.2,
) -> Completion:
    """Send one chat request; transient failures are retried ``retries`` times.

    5xx statuses, transport errors and malformed envelopes count as
    transient. Non-200 below 500 fails immediately: repeating a rejected
    request will not change the answer.
    """

    endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise TransportError(f"no endpoint given and {ENDPOINT_ENV} is unset")
    api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
    headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
    payload = request.payload()
    attempts = retries + 1
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return _post_once(endpoint, payload, headers, timeout)
        except TransportError as exc:
            if "unexpected status" in str(exc):
                raise
            last = exc
            if attempt + 1 < attempts and retry_delay > 0:
                time.sleep(retry_delay)
    raise TransportError(f"gave up after {attempts} attempts: {last}") from last


class ChatClient:
    """Shared transport: one endpoint, bounded in-flight calls, optional audit.

    The audit file gets one JSON line per call (request payload, reply text,
    latency, token usage) so any run can be replayed or inspected offline.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model: str = "default",
        api_key: str | None = None,
        timeout: float = 30.0,
        retries: int = 1,
        retry_delay: float = 0.2,
        max_in_flight: int = 8,
        audit_path: str | None = None,
        embed_endpoint: str | None = None,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.retries = retries
        self.retry_delay = retry_delay
        self.embed_endpoint = embed_endpoint
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._audit_path = audit_path
        self._audit_lock = threading.Lock()

    def complete(self, request: ChatRequest) -> Completion:
        request = ChatRequest(
            messages=request.messages,
            model=request.model if request.model != "default" else self.model,
            temperature=request.temperature,
            max_tokens=request.max_tokens,
            attachments=request.attachments,
        )
        with self._gate:
            try:
                result = complete(
                    request,
                    endpoint=self.endpoint,
                    api_key=self.api_key,
                    timeout=self.timeout,
                    retries=self.retries,
                    retry_delay=self.retry_delay,
                )
            except TransportError as exc:
                self._audit(request, None, error=str(exc))
                raise
        self._audit(request, result)
        return result

    def embed(self, text: str) -> list[float]:
        """Fetch an embedding from a side endpoint; retrieval stays external."""

        if not self.embed_endpoint:
            raise TransportError("no embedding endpoint configured")
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            response = httpx.post(
                self.embed_endpoint,
                json={"model": self.model, "input": text},
                headers=headers,
                timeout=self.timeout,
            )
            body = response.json()
            vector = body["data"][0]["embedding"]
        except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"embedding call failed: {exc}") from exc
        return [float(x) for x in vector]

    def _audit(self, request: ChatRequest, result: Completion | None, error: str | None = None) -> None:
        if not self._audit_path:
            return
        record = {
            "ts": time.time(),
            "request": request.payload(),
            "error": error,
        }
        if result is not None:
            record.update(
                text=result.text,
                latency=result.latency,
                prompt_tokens=result.prompt_tokens,
                completion_tokens=result.completion_tokens,
            )
        line = json.dumps(record, ensure_ascii=False)
        with self._audit_lock:
            with open(self._audit_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def frame_attachments(template: str, candidate: str, frames: int, total: int = 100) -> tuple[str, ...]:
    """Uniformly spaced frame references for one candidate.

    ``template`` may use {id} and {index}; indices are spread over
    [0, total). Media stays referenced by path, never decoded here.
    """

    if frames < 1:
        raise ValueError("frames must be >= 1")
    if frames == 1:
        indices = [0]
    else:
        indices = [round(i * (total - 1) / (frames - 1)) for i in range(frames)]
    return tuple(template.format(id=candidate, index=idx) for idx in indices)
