"""Text-generation backends.

Two implementations of the same ``generate`` contract: an HTTP client for
chat-completion style services and a deterministic offline mock.  The wire
shape is the de-facto chat JSON body (``model``, ``messages``,
``temperature``, ``seed``, ``max_tokens``) with the completion read from
``choices[0].message.content``.  Credentials come only from the
``KNOWOGEN_API_KEY`` environment variable, never from configuration files.
"""

from __future__ import annotations

import html as html_module
import json
import os
import re
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import requests

from .errors import BackendError, BackendTimeoutError, EmptyCompletionError
from .rng import stable_hash

if TYPE_CHECKING:
    from .config import GenerationSettings
    from .promptgen import Prompt

API_KEY_ENV = "KNOWOGEN_API_KEY"
MAX_RETRIES = 3
TRANSIENT_STATUSES = frozenset({429, 500, 502, 503, 504})

QUESTION_MARKER = "mock:ask-question"


@dataclass(frozen=True)
class GenerationRequest:
    prompt: "Prompt"
    decoding: str
    temperature: float
    seed: int
    max_output_tokens: int

    def __post_init__(self):
        # Greedy decoding ignores the configured temperature; record 0.
        if self.decoding == "greedy" and self.temperature != 0.0:
            object.__setattr__(self, "temperature", 0.0)


@dataclass(frozen=True)
class GenerationResult:
    text: str
    backend_id: str
    latency_ms: int
    request_hash: str


def serialize_messages(request: GenerationRequest, model_name: str) -> dict:
    """Build the JSON wire body for a request.

    The system prompt part maps to the system role; all remaining parts are
    concatenated into a single user message.
    """
    system_texts = [p.text for p in request.prompt.parts if p.kind == "system"]
    user_texts = [p.text for p in request.prompt.parts if p.kind != "system"]
    messages = []
    if system_texts:
        messages.append({"role": "system", "content": "\n\n".join(system_texts)})
    if user_texts:
        messages.append({"role": "user", "content": "\n\n".join(user_texts)})
    return {
        "model": model_name,
        "messages": messages,
        "temperature": request.temperature,
        "seed": request.seed,
        "max_tokens": request.max_output_tokens,
    }


def request_hash(body: dict) -> str:
    import hashlib

    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class HttpBackend:
    """Client for a chat-completion endpoint with bounded retries."""

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        timeout: float = 30.0,
        retry_base_delay: float = 0.5,
        audit_path: str | None = None,
    ):
        self.endpoint = endpoint
        self.model_name = model_name
        self.timeout = timeout
        self.retry_base_delay = retry_base_delay
        self.audit_path = audit_path
        self.backend_id = f"http:{model_name}"

    def generate(self, request: GenerationRequest) -> GenerationResult:
        body = serialize_messages(request, self.model_name)
        digest = request_hash(body)
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        started = time.monotonic()
        last_error: BackendError | None = None
        for attempt in range(MAX_RETRIES):
            if attempt:
                time.sleep(self.retry_base_delay * 2 ** (attempt - 1))
            try:
                response = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
            except requests.Timeout:
                last_error = BackendTimeoutError(f"timeout after {self.timeout}s contacting {self.endpoint}")
                continue
            except requests.ConnectionError as exc:
                last_error = BackendError(f"connection to {self.endpoint} failed: {exc}")
                continue
            if response.status_code in TRANSIENT_STATUSES:
                last_error = BackendError(
                    f"backend returned {response.status_code}",
                    status=response.status_code,
                    body_excerpt=response.text[:200],
                )
                continue
            if response.status_code != 200:
                raise BackendError(
                    f"backend returned {response.status_code}",
                    status=response.status_code,
                    body_excerpt=response.text[:200],
                )
            return self._finish(request, body, digest, response, started)
        assert last_error is not None
        raise last_error

    def _finish(self, request, body, digest, response, started) -> GenerationResult:
        latency_ms = int((time.monotonic() - started) * 1000)
        try:
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(
                f"malformed backend response: {exc}", status=response.status_code,
                body_excerpt=response.text[:200],
            ) from exc
        self._audit(body, payload)
        if not text:
            raise EmptyCompletionError("backend returned an empty completion", status=response.status_code)
        return GenerationResult(text=text, backend_id=self.backend_id, latency_ms=latency_ms, request_hash=digest)

    def _audit(self, body: dict, payload: dict) -> None:
        if not self.audit_path:
            return
        with open(self.audit_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps({"request": body, "response": payload}, sort_keys=True) + "\n")


_SUMMARIZE_RE = re.compile(r"Summarize the following document in at most (\d+) characters", re.IGNORECASE)
_FIELD_RES = {
    "author": re.compile(r"^You are ([^,]+),", re.MULTILINE),
    "document_type": re.compile(r"^Document type: (.+)$", re.MULTILINE),
    "topic": re.compile(r"^Topic: (.+)$", re.MULTILINE),
    "agents": re.compile(r"^Involved agents: (.+)$", re.MULTILINE),
    "entities": re.compile(r"^Entities: (.+)$", re.MULTILINE),
}

_MOCK_EMAIL = """<html>
<body>
<p>From: {author}</p>
<p>To: {recipients}</p>
<p>Subject: {topic}</p>
<p>Hi {greeting},</p>
<p>I am writing with an update on {topic}. {entity_sentence}I have summarized the current state below and attached the latest material for reference.</p>
{question}<p>Best regards,<br>{author}</p>
<p><small>ref {suffix}</small></p>
</body>
</html>
"""

_MOCK_MINUTES = """<html>
<body>
<h1>Meeting minutes: {topic}</h1>
<p>Attendees: {agents}</p>
<p>Minutes taken by {author}.</p>
<h2>Status</h2>
<ul>
<li>The group reviewed progress on {topic}. {entity_sentence}</li>
<li>Open items were collected and owners assigned.</li>
{question_item}</ul>
<p><small>ref {suffix}</small></p>
</body>
</html>
"""

_MOCK_GENERIC = """<html>
<body>
<h1>{topic}</h1>
<p>Prepared by {author}.</p>
<p>This {document_type} covers {topic} for {agents}. {entity_sentence}It records the relevant details produced while completing the underlying work item.</p>
<p><small>ref {suffix}</small></p>
</body>
</html>
"""


class MockBackend:
    """Deterministic offline backend: output is a pure function of the request."""

    backend_id = "mock"

    def generate(self, request: GenerationRequest) -> GenerationResult:
        body = serialize_messages(request, "mock")
        digest = request_hash(body)
        full_text = "\n\n".join(m["content"] for m in body["messages"])

        summarize = _SUMMARIZE_RE.search(full_text)
        if summarize:
            text = self._summarize(full_text, int(summarize.group(1)))
        else:
            text = self._document(full_text, digest)
        return GenerationResult(text=text, backend_id=self.backend_id, latency_ms=0, request_hash=digest)

    def _summarize(self, prompt_text: str, limit: int) -> str:
        marker = "Document:\n"
        start = prompt_text.find(marker)
        document = prompt_text[start + len(marker):] if start >= 0 else prompt_text
        return strip_html(document)[:limit]

    def _document(self, prompt_text: str, digest: str) -> str:
        fields = {}
        for name, pattern in _FIELD_RES.items():
            match = pattern.search(prompt_text)
            fields[name] = match.group(1).strip() if match else ""
        author = fields["author"] or "Unknown Author"
        agents = fields["agents"] or author
        document_type = fields["document_type"] or "document"
        topic = fields["topic"] or "general matters"
        others = [a.strip() for a in agents.split(",") if a.strip() and a.strip() != author]
        entity_sentence = f"This concerns {fields['entities']}. " if fields["entities"] and fields["entities"] != "none" else ""
        ask = QUESTION_MARKER in prompt_text
        values = {
            "author": author,
            "agents": agents,
            "topic": topic,
            "document_type": document_type,
            "entity_sentence": entity_sentence,
            "recipients": ", ".join(others) if others else author,
            "greeting": others[0] if others else author,
            "suffix": digest[:8],
        }
        if document_type == "email":
            values["question"] = "<p>Could you confirm the next steps by the end of the week?</p>\n" if ask else ""
            return _MOCK_EMAIL.format(**values)
        if document_type == "meeting_minutes":
            values["question_item"] = "<li>Who will take over the follow-up review?</li>\n" if ask else ""
            return _MOCK_MINUTES.format(**values)
        return _MOCK_GENERIC.format(**values)


def make_backend(settings: "GenerationSettings", audit_path: str | None = None):
    """Instantiate the backend selected by the generation settings."""
    if settings.backend == "mock":
        return MockBackend()
    return HttpBackend(endpoint=settings.endpoint, model_name=settings.model_name, audit_path=audit_path)


_SCRIPT_RE = re.compile(r"<(script|style)\b[^>]*>.*?</\1\s*>", re.IGNORECASE | re.DOTALL)
_TAG_RE = re.compile(r"<[^<>]*>")


def strip_html(text: str) -> str:
    """Remove tags, decode entities, and collapse whitespace.

    Runs to a fixpoint so the result is idempotent even for inputs where
    decoding an entity exposes new markup (e.g. double-escaped tags).
    """
    current = text
    while True:
        previous = current
        current = _SCRIPT_RE.sub(" ", current)
        current = _TAG_RE.sub(" ", current)
        current = html_module.unescape(current)
        current = " ".join(current.split())
        if current == previous:
            return current
