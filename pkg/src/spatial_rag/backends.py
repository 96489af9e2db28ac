"""Chat backends: the pluggable LLM seat in the pipeline.

Every backend takes a :class:`PromptBundle` and returns an
:class:`LlmResponse`.  The mock backend keeps the whole system testable
offline: it can parrot a fixed reply, echo its prompt, or act as an oracle
that actually reads the entity lines out of the system prompt and answers
name-list questions correctly.  Injected delays are drawn from a seeded RNG
so timing behaviour is reproducible; sleeping is optional so determinism
checks can run at full speed.

The remote backend speaks the OpenAI-style ``/chat/completions`` wire shape.
Capture and replay wrappers record transcripts keyed by a prompt digest so
remote runs can be re-graded later without network access.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import httpx

from .cases import find_case_for_question, ground_truth
from .entities import Entity, parse_entity

DEFAULT_MODEL = "gpt-4.1-2025-04-14"

DEFAULT_CANT_FIND_TEXT = (
    "I'm terribly sorry, but I can't find anything like that among the places"
    " I know right now. Is there something else you would enjoy?"
)


class BackendError(RuntimeError):
    """The backend could not produce an answer."""

    def __init__(self, message: str, *, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class BackendTimeout(BackendError):
    """The backend did not answer within the deadline."""


@dataclass(frozen=True)
class PromptBundle:
    """Everything sent per call: instructions, context, question, sampling."""

    system_text: str
    user_text: str
    model: str = DEFAULT_MODEL
    temperature: float = 0.0

    def __post_init__(self):
        if not self.user_text or not self.user_text.strip():
            raise ValueError("user_text must be non-empty")
        if not self.system_text:
            raise ValueError("system_text must be non-empty")


@dataclass(frozen=True)
class LlmResponse:
    answer_text: str
    llm_latency_ms: float
    token_usage: Optional[dict] = None


def prompt_digest(bundle: PromptBundle) -> str:
    """Stable key for capture/replay lookup."""
    digest = hashlib.sha256()
    for part in (bundle.model, repr(bundle.temperature), bundle.system_text, bundle.user_text):
        digest.update(part.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


class ChatBackend(ABC):
    @abstractmethod
    def call(self, prompt: PromptBundle) -> LlmResponse:
        """Produce one answer; raise BackendError/BackendTimeout on failure."""


def _entities_from_prompt(system_text: str) -> list:
    """Recover the entity lines appended below the instruction block."""
    entities = []
    for line in system_text.splitlines():
        line = line.strip()
        if not line.startswith("{"):
            continue
        try:
            entities.append(parse_entity(line))
        except ValueError:
            continue
    return entities


def _title(entity: Entity) -> str:
    value = entity.property_value("title")
    return value if isinstance(value, str) else entity.id


class MockChatBackend(ChatBackend):
    """Deterministic offline stand-in for a hosted model.

    Modes:

    * ``fixed`` — always returns ``fixed_text``;
    * ``echo`` — returns the question and how many entities it saw;
    * ``oracle`` — parses the entities out of its own prompt, resolves the
      question against the benchmark banks, and names the right places (up
      to 10, or up to the requested k for top-k questions), or gives a
      can't-find reply when nothing qualifies.

    ``delay_ms`` is either a constant or a ``(low, high)`` band sampled per
    call from a seeded RNG; with ``sleep=False`` the delay is only reported,
    not slept, so a run stays reproducible and fast.
    """

    def __init__(self, *, mode: str = "oracle",
                 delay_ms: Union[float, tuple] = 0.0,
                 seed: int = 0, sleep: bool = False,
                 fixed_text: str = "Ask me about places to visit!",
                 cant_find_text: str = DEFAULT_CANT_FIND_TEXT):
        if mode not in ("fixed", "echo", "oracle"):
            raise ValueError(f"unknown mock mode {mode!r}")
        self.mode = mode
        self.delay_ms = delay_ms
        self.sleep = sleep
        self.fixed_text = fixed_text
        self.cant_find_text = cant_find_text
        self._rng = random.Random(seed)
        self.calls = 0

    def _draw_delay(self) -> float:
        if isinstance(self.delay_ms, tuple):
            low, high = self.delay_ms
            return self._rng.uniform(float(low), float(high))
        return float(self.delay_ms)

    def _oracle_answer(self, prompt: PromptBundle) -> str:
        entities = _entities_from_prompt(prompt.system_text)
        case = find_case_for_question(prompt.user_text)
        if case is None or case.kind != "correctness":
            # unknown or latency-suite question: list what is on offer
            names = [_title(entity) for entity in entities[:10]]
            if not names:
                return self.cant_find_text
            return "You could visit: " + ", ".join(names) + "."
        truth = ground_truth(case, entities)
        if not truth:
            return self.cant_find_text
        cap = case.top_k if case.top_k else 10
        names = [_title(entity) for entity in truth[:cap]]
        return "Here is what I found for you: " + ", ".join(names) + "."

    def call(self, prompt: PromptBundle) -> LlmResponse:
        self.calls += 1
        delay = self._draw_delay()
        if self.sleep and delay > 0:
            time.sleep(delay / 1000.0)
        if self.mode == "fixed":
            answer = self.fixed_text
        elif self.mode == "echo":
            count = len(_entities_from_prompt(prompt.system_text))
            answer = f"You asked: {prompt.user_text} (I can see {count} places.)"
        else:
            answer = self._oracle_answer(prompt)
        return LlmResponse(answer_text=answer, llm_latency_ms=delay)


class RemoteChatBackend(ChatBackend):
    """OpenAI-style ``/chat/completions`` client."""

    def __init__(self, base_url: str, *, api_key: Optional[str] = None,
                 timeout_s: float = 120.0, client: Optional[httpx.Client] = None):
        if not base_url.startswith(("http://", "https://")):
            raise ValueError(f"not an http(s) URL: {base_url!r}")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout_s = timeout_s
        self._client = client

    def call(self, prompt: PromptBundle) -> LlmResponse:
        payload = {
            "model": prompt.model,
            "temperature": prompt.temperature,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/chat/completions"
        started = time.perf_counter()
        try:
            if self._client is not None:
                response = self._client.post(url, json=payload, headers=headers,
                                             timeout=self.timeout_s)
            else:
                response = httpx.post(url, json=payload, headers=headers,
                                      timeout=self.timeout_s)
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"no answer from {url} within {self.timeout_s}s") from exc
        except httpx.HTTPError as exc:
            raise BackendError(f"transport failure calling {url}: {exc}") from exc
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        if response.status_code != 200:
            raise BackendError(
                f"{url} answered {response.status_code}: {response.text[:200]}",
                status=response.status_code,
            )
        try:
            body = response.json()
            answer = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unparseable completion from {url}: {exc}") from exc
        if not isinstance(answer, str):
            raise BackendError(f"completion content is not text: {type(answer).__name__}")
        return LlmResponse(
            answer_text=answer,
            llm_latency_ms=elapsed_ms,
            token_usage=body.get("usage"),
        )


class CaptureBackend(ChatBackend):
    """Wrap a backend and append every exchange to an NDJSON transcript."""

    def __init__(self, inner: ChatBackend, transcript_path: Path):
        self.inner = inner
        self.transcript_path = Path(transcript_path)
        self.transcript_path.parent.mkdir(parents=True, exist_ok=True)

    def call(self, prompt: PromptBundle) -> LlmResponse:
        response = self.inner.call(prompt)
        row = {
            "key": prompt_digest(prompt),
            "model": prompt.model,
            "temperature": prompt.temperature,
            "user_text": prompt.user_text,
            "system_sha256": hashlib.sha256(prompt.system_text.encode("utf-8")).hexdigest(),
            "answer_text": response.answer_text,
            "llm_latency_ms": response.llm_latency_ms,
        }
        with open(self.transcript_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
        return response


class ReplayBackend(ChatBackend):
    """Serve recorded answers; a prompt with no recording is an error."""

    def __init__(self, transcript_path: Path):
        self._answers: dict = {}
        for line in Path(transcript_path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            self._answers[row["key"]] = row

    def __len__(self):
        return len(self._answers)

    def call(self, prompt: PromptBundle) -> LlmResponse:
        row = self._answers.get(prompt_digest(prompt))
        if row is None:
            raise BackendError("no recorded answer for this prompt; re-run capture")
        return LlmResponse(
            answer_text=row["answer_text"],
            llm_latency_ms=float(row.get("llm_latency_ms", 0.0)),
        )
