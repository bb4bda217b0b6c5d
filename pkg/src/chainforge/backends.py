"""Uniform access to the five model roles behind the toolkit.

Roles: chain generator, chain verifier, chain extractor, answerer, and the
coherence judge.  Two implementations share one interface: HttpBackend talks
to any endpoint speaking the de-facto chat-completions JSON shape, and
ScriptedBackend replays fixtures so every pipeline path runs offline and
bit-deterministically.

Prompt templates are plain text files (see ``prompts/``) with the
placeholders {{question}}, {{answer}}, {{chain}}, {{options}}, {{surrogate}};
they are configuration, not code, and can be overridden per run.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .chain import CausalChain, ChainParseError, parse_chain, serialize_chain
from .metrics import CoherenceVerdict, JudgeError, JudgeUnavailable, normalize_verdict


class BackendRole(enum.Enum):
    GENERATOR = "generator"
    VERIFIER = "verifier"
    EXTRACTOR = "extractor"
    ANSWERER = "answerer"
    JUDGE = "judge"


BLOCK_KINDS = ("question", "answer", "chain", "options", "video_surrogate")

# context blocks each role must carry; the extractor additionally needs
# media or a video surrogate (checked separately)
REQUIRED_BLOCKS = {
    BackendRole.GENERATOR: ("question", "answer"),
    BackendRole.VERIFIER: ("question", "answer", "chain"),
    BackendRole.EXTRACTOR: ("question",),
    BackendRole.ANSWERER: ("question", "chain", "options"),
    BackendRole.JUDGE: ("chain",),
}

# verifier/judge/answerer are decision roles and always run at temperature 0
ZERO_TEMP_ROLES = frozenset(
    {BackendRole.VERIFIER, BackendRole.JUDGE, BackendRole.ANSWERER}
)
DEFAULT_TEMPERATURE = 0.7


class BackendError(Exception):
    pass


class InvalidRequest(BackendError):
    pass


class Timeout(BackendError):
    pass


class RateLimited(BackendError):
    pass


class AuthFailure(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class TransportError(BackendError):
    pass


class ScriptMiss(BackendError):
    """The scripted backend has no response for this request."""


class ChainFormatError(BackendError):
    """Extractor output stayed unparseable after the format reminder."""

    def __init__(self, message: str, raw_outputs: Sequence[str] = ()):
        super().__init__(message)
        self.raw_outputs = list(raw_outputs)


class AnswerParseError(BackendError):
    """No unambiguous option letter, even after the reprompt."""

    def __init__(self, message: str, raw_outputs: Sequence[str] = ()):
        super().__init__(message)
        self.raw_outputs = list(raw_outputs)


class VerifierParseError(BackendError):
    pass


class ModelCircularityError(ValueError):
    """Strict mode: generator and verifier must be distinct models."""


@dataclass(frozen=True)
class ContextBlock:
    kind: str
    text: str

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise InvalidRequest(f"unknown context block kind {self.kind!r}")


@dataclass(frozen=True)
class ModelRequest:
    role: BackendRole
    instruction: str
    blocks: tuple[ContextBlock, ...] = ()
    media: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.instruction.strip():
            raise InvalidRequest("instruction must be non-empty")
        kinds = {b.kind for b in self.blocks}
        missing = [k for k in REQUIRED_BLOCKS[self.role] if k not in kinds]
        if missing:
            raise InvalidRequest(
                f"{self.role.value} request missing context blocks: {missing}"
            )
        if self.role is BackendRole.EXTRACTOR and not (
            self.media or "video_surrogate" in kinds
        ):
            raise InvalidRequest(
                "extractor request needs media or a video_surrogate block"
            )

    def block_text(self, kind: str) -> str | None:
        for b in self.blocks:
            if b.kind == kind:
                return b.text
        return None


@dataclass(frozen=True)
class ModelResponse:
    text: str
    prompt_units: int = 0
    completion_units: int = 0
    latency_ms: int = 0


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = ""
    api_key_env_name: str = ""
    model_name: str = ""
    timeout_ms: int = 60_000
    max_retries: int = 3
    backoff_base_ms: int = 500
    max_inflight: int = 4
    temperature: float | None = None

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")


def effective_temperature(config: BackendConfig, role: BackendRole) -> float:
    if role in ZERO_TEMP_ROLES:
        return 0.0
    if config.temperature is not None:
        return config.temperature
    return DEFAULT_TEMPERATURE


def request_hash(request: ModelRequest) -> str:
    """Stable digest of a request record, the scripted-fixture key."""
    payload = {
        "role": request.role.value,
        "instruction": request.instruction,
        "blocks": [[b.kind, b.text] for b in request.blocks],
        "media": list(request.media),
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def complete(self, request: ModelRequest) -> ModelResponse: ...


def render_user_message(request: ModelRequest) -> str:
    parts = []
    for block in request.blocks:
        parts.append(f"{block.kind.upper()}:\n{block.text}")
    for uri in request.media:
        parts.append(f"MEDIA: {uri}")
    return "\n\n".join(parts)


class HttpBackend:
    """Chat-completions client with bounded retries and an in-flight budget.

    Retries timeouts, 429 and 5xx with exponential backoff (base 2 from
    ``backoff_base_ms``, multiplicative jitter); auth failures and malformed
    bodies never retry.  The API key comes from the environment variable
    named in the config, never from the config itself.
    """

    def __init__(self, config: BackendConfig, role: BackendRole):
        if not config.endpoint_url:
            raise ValueError("HttpBackend needs endpoint_url")
        self.config = config
        self.role = role
        self._gate = threading.BoundedSemaphore(max(1, config.max_inflight))
        self._rng = random.Random()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env_name:
            key = os.environ.get(self.config.api_key_env_name, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _sleep_before_retry(self, attempt: int) -> None:
        base = self.config.backoff_base_ms / 1000.0
        delay = base * (2**attempt) * self._rng.uniform(0.5, 1.5)
        time.sleep(delay)

    def complete(self, request: ModelRequest) -> ModelResponse:
        payload = {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": request.instruction},
                {"role": "user", "content": render_user_message(request)},
            ],
            "temperature": effective_temperature(self.config, request.role),
        }
        timeout_s = self.config.timeout_ms / 1000.0
        attempts = 1 + self.config.max_retries
        last: BackendError | None = None
        with self._gate:
            for attempt in range(attempts):
                if attempt:
                    self._sleep_before_retry(attempt - 1)
                started = time.monotonic()
                try:
                    resp = requests.post(
                        self.config.endpoint_url,
                        json=payload,
                        headers=self._headers(),
                        timeout=timeout_s,
                    )
                except requests.Timeout as err:
                    last = Timeout(str(err))
                    continue
                except requests.RequestException as err:
                    raise TransportError(str(err)) from err
                latency = int((time.monotonic() - started) * 1000)
                if resp.status_code in (401, 403):
                    raise AuthFailure(f"HTTP {resp.status_code}")
                if resp.status_code == 429:
                    last = RateLimited("HTTP 429")
                    continue
                if resp.status_code >= 500:
                    last = TransportError(f"HTTP {resp.status_code}")
                    continue
                if resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    data = resp.json()
                    text = data["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as err:
                    raise MalformedResponse(
                        f"response missing text field: {err}"
                    ) from err
                if not isinstance(text, str):
                    raise MalformedResponse("text field is not a string")
                usage = data.get("usage") or {}
                return ModelResponse(
                    text=text,
                    prompt_units=int(usage.get("prompt_tokens", 0)),
                    completion_units=int(usage.get("completion_tokens", 0)),
                    latency_ms=latency,
                )
        assert last is not None
        raise last


class ScriptedBackend:
    """Deterministic stand-in: fixture map {request-hash: text}, a fallback
    default, or an arbitrary script callable.  Usage counters are zero."""

    def __init__(
        self,
        fixtures: dict[str, str] | None = None,
        default: str | None = None,
        script: Callable[[ModelRequest], str] | None = None,
    ):
        self.fixtures = fixtures or {}
        self.default = default
        self.script = script

    def complete(self, request: ModelRequest) -> ModelResponse:
        if self.script is not None:
            return ModelResponse(text=self.script(request))
        text = self.fixtures.get(request_hash(request), self.default)
        if text is None:
            raise ScriptMiss(f"no fixture for {request.role.value} request")
        return ModelResponse(text=text)


def default_script_key(request: ModelRequest) -> str:
    """Keyed-script lookup key: the judge keys on the chain, everything else
    on the question."""
    if request.role is BackendRole.JUDGE:
        return request.block_text("chain") or ""
    return request.block_text("question") or ""


def keyed_script(
    mapping: dict[str, Sequence[str] | str],
    key_fn: Callable[[ModelRequest], str] = default_script_key,
    default: str | None = None,
) -> Callable[[ModelRequest], str]:
    """Per-key response sequences; a key's last response repeats once its
    sequence is exhausted.  Thread-safe, deterministic per key."""
    cursors: dict[str, int] = {}
    lock = threading.Lock()

    def script(request: ModelRequest) -> str:
        key = key_fn(request)
        entry = mapping.get(key, default)
        if entry is None:
            raise ScriptMiss(f"no scripted response for key {key!r}")
        if isinstance(entry, str):
            return entry
        with lock:
            idx = min(cursors.get(key, 0), len(entry) - 1)
            cursors[key] = cursors.get(key, 0) + 1
        return entry[idx]

    return script


def sequence_script(responses: Sequence[str]) -> Callable[[ModelRequest], str]:
    """Responses consumed strictly in call order; the last one repeats."""
    cursor = {"i": 0}
    lock = threading.Lock()

    def script(request: ModelRequest) -> str:
        del request
        with lock:
            idx = min(cursor["i"], len(responses) - 1)
            cursor["i"] += 1
        return responses[idx]

    return script


# --- prompt templates --------------------------------------------------------

_PROMPT_DIR = Path(__file__).resolve().parent / "prompts"

_TEMPLATE_FILES = {
    BackendRole.GENERATOR: "generator.txt",
    BackendRole.VERIFIER: "verifier.txt",
    BackendRole.EXTRACTOR: "extractor.txt",
    BackendRole.ANSWERER: "answerer.txt",
    BackendRole.JUDGE: "judge.txt",
}


def load_template(role: BackendRole, template_dir: str | Path | None = None) -> str:
    directory = Path(template_dir) if template_dir else _PROMPT_DIR
    return (directory / _TEMPLATE_FILES[role]).read_text(encoding="utf-8")


def render_template(template: str, **values: str) -> str:
    for name, value in values.items():
        template = template.replace("{{" + name + "}}", value)
    return template


# --- role operations ----------------------------------------------------------

FORMAT_REMINDER = (
    "Reminder: reply ONLY with a causal chain in the exact format "
    "[Event A] -> [Event B] -> [Event C], nothing else."
)


def generate_chain(
    backend: Backend,
    question: str,
    answer: str,
    feedback: Sequence[str] = (),
    template_dir: str | Path | None = None,
) -> ModelResponse:
    """Ask the generator role for a chain; returns the raw response (the
    pipeline owns parsing and validation)."""
    instruction = render_template(
        load_template(BackendRole.GENERATOR, template_dir),
        question=question, answer=answer,
    )
    if feedback:
        notes = "\n".join(f"- {reason}" for reason in feedback)
        instruction += (
            "\n\nEarlier attempts were rejected for these reasons; address them:\n"
            + notes
        )
    request = ModelRequest(
        role=BackendRole.GENERATOR,
        instruction=instruction,
        blocks=(
            ContextBlock("question", question),
            ContextBlock("answer", answer),
        ),
    )
    return backend.complete(request)


@dataclass(frozen=True)
class VerifierDecision:
    accepted: bool
    reason: str | None = None


_ACCEPT_RE = re.compile(r"^\s*accept\b", re.IGNORECASE)
_REJECT_RE = re.compile(r"^\s*reject\s*[:\-]?\s*(.*)$", re.IGNORECASE | re.DOTALL)


def parse_verifier_reply(text: str) -> VerifierDecision | None:
    if _ACCEPT_RE.match(text):
        return VerifierDecision(accepted=True)
    m = _REJECT_RE.match(text)
    if m:
        reason = m.group(1).strip() or None
        return VerifierDecision(accepted=False, reason=reason)
    return None


def verify_chain(
    backend: Backend,
    question: str,
    answer: str,
    chain: CausalChain,
    template_dir: str | Path | None = None,
) -> VerifierDecision:
    """Second-model review of a generated chain: ACCEPT or REJECT:<reason>."""
    chain_text = serialize_chain(chain)
    instruction = render_template(
        load_template(BackendRole.VERIFIER, template_dir),
        question=question, answer=answer, chain=chain_text,
    )
    request = ModelRequest(
        role=BackendRole.VERIFIER,
        instruction=instruction,
        blocks=(
            ContextBlock("question", question),
            ContextBlock("answer", answer),
            ContextBlock("chain", chain_text),
        ),
    )
    reply = backend.complete(request).text
    decision = parse_verifier_reply(reply)
    if decision is not None:
        return decision
    retry = ModelRequest(
        role=BackendRole.VERIFIER,
        instruction=instruction
        + "\n\nReminder: reply with exactly ACCEPT or REJECT:<reason>.",
        blocks=request.blocks,
    )
    second = backend.complete(retry).text
    decision = parse_verifier_reply(second)
    if decision is None:
        raise VerifierParseError(f"unparseable verifier replies: {reply!r}, {second!r}")
    return decision


@dataclass(frozen=True)
class VideoRef:
    """Opaque pointer to a video; the toolkit never opens it."""

    uri: str
    duration_s: float | None = None

    def __post_init__(self):
        if not self.uri:
            raise ValueError("video uri must be non-empty")


def extract_chain(
    backend: Backend,
    question: str,
    video: VideoRef | None = None,
    surrogate: str | None = None,
    template_dir: str | Path | None = None,
) -> CausalChain:
    """Extractor role: (video, question) -> chain, strict bracketed-arrow
    output with one format-reminder reprompt."""
    instruction = render_template(
        load_template(BackendRole.EXTRACTOR, template_dir),
        question=question, surrogate=surrogate or "",
    )
    blocks = [ContextBlock("question", question)]
    if surrogate is not None:
        blocks.append(ContextBlock("video_surrogate", surrogate))
    media = (video.uri,) if video is not None else ()
    request = ModelRequest(
        role=BackendRole.EXTRACTOR,
        instruction=instruction,
        blocks=tuple(blocks),
        media=media,
    )
    first = backend.complete(request).text
    try:
        return parse_chain(first.strip())
    except ChainParseError:
        pass
    retry = ModelRequest(
        role=BackendRole.EXTRACTOR,
        instruction=instruction + "\n\n" + FORMAT_REMINDER,
        blocks=request.blocks,
        media=media,
    )
    second = backend.complete(retry).text
    try:
        return parse_chain(second.strip())
    except ChainParseError as err:
        raise ChainFormatError(
            f"extractor output unparseable after reprompt: {err}",
            raw_outputs=[first, second],
        ) from err


def option_letter(index: int) -> str:
    return chr(ord("A") + index)


def format_options(options: Sequence[str]) -> str:
    return "\n".join(f"{option_letter(i)}. {text}" for i, text in enumerate(options))


_ANSWER_IS_RE = re.compile(
    r"\banswer(?:\s+is)?\s*:?\s*\(?([A-Za-z])\)?(?![A-Za-z0-9])", re.IGNORECASE
)
_STANDALONE_RE = re.compile(r"^\(?([A-Z])\)?$")


def extract_option_letter(text: str, n_options: int) -> int | None:
    """Fixed letter-extraction grammar for free-form answerer replies.

    Priority 1: an explicit "answer is X" / "answer: X" statement.
    Priority 2: standalone uppercase letter tokens ("B", "(C)", "D.")
    — unambiguous only when exactly one distinct valid letter appears.
    Returns the option index, or None when absent/ambiguous.
    """
    def valid(letter: str) -> bool:
        idx = ord(letter.upper()) - ord("A")
        return 0 <= idx < n_options

    for m in _ANSWER_IS_RE.finditer(text):
        if valid(m.group(1)):
            return ord(m.group(1).upper()) - ord("A")

    found = set()
    for tok in text.split():
        core = tok.strip(".,:;!?")
        m = _STANDALONE_RE.match(core)
        if m and valid(m.group(1)):
            found.add(m.group(1))
    if len(found) == 1:
        return ord(found.pop()) - ord("A")
    return None


def answer(
    backend: Backend,
    question: str,
    chain: CausalChain,
    options: Sequence[str],
    template_dir: str | Path | None = None,
) -> int:
    """Answerer role: (question, chain, options) -> selected option index."""
    if not 2 <= len(options) <= 26:
        raise InvalidRequest("need between 2 and 26 answer options")
    chain_text = serialize_chain(chain)
    options_text = format_options(options)
    instruction = render_template(
        load_template(BackendRole.ANSWERER, template_dir),
        question=question, chain=chain_text, options=options_text,
    )
    request = ModelRequest(
        role=BackendRole.ANSWERER,
        instruction=instruction,
        blocks=(
            ContextBlock("question", question),
            ContextBlock("chain", chain_text),
            ContextBlock("options", options_text),
        ),
    )
    first = backend.complete(request).text
    idx = extract_option_letter(first, len(options))
    if idx is not None:
        return idx
    retry = ModelRequest(
        role=BackendRole.ANSWERER,
        instruction=instruction
        + "\n\nReminder: reply with exactly one option letter and nothing else.",
        blocks=request.blocks,
    )
    second = backend.complete(retry).text
    idx = extract_option_letter(second, len(options))
    if idx is None:
        raise AnswerParseError(
            "no unambiguous option letter after reprompt",
            raw_outputs=[first, second],
        )
    return idx


def judge_coherence(
    backend: Backend,
    chain: CausalChain,
    template_dir: str | Path | None = None,
) -> CoherenceVerdict:
    """Judge role: True/False coherence verdict, one retry on abnormal output."""
    chain_text = serialize_chain(chain)
    instruction = render_template(
        load_template(BackendRole.JUDGE, template_dir), chain=chain_text
    )
    request = ModelRequest(
        role=BackendRole.JUDGE,
        instruction=instruction,
        blocks=(ContextBlock("chain", chain_text),),
    )
    first = backend.complete(request).text
    try:
        return CoherenceVerdict(normalize_verdict(first))
    except JudgeError:
        pass
    retry = ModelRequest(
        role=BackendRole.JUDGE,
        instruction=instruction + '\n\nReminder: reply with exactly "True" or "False".',
        blocks=request.blocks,
    )
    second = backend.complete(retry).text
    try:
        return CoherenceVerdict(normalize_verdict(second))
    except JudgeError:
        raise JudgeError(
            f"judge verdicts abnormal after retry: {first!r}, {second!r}"
        ) from None


class BackendJudge:
    """CoherenceJudge adapter over a backend; transport problems surface as
    JudgeUnavailable so corpus scoring can report coverage."""

    def __init__(self, backend: Backend, template_dir: str | Path | None = None):
        self._backend = backend
        self._template_dir = template_dir

    def judge(self, chain: CausalChain) -> CoherenceVerdict:
        try:
            return judge_coherence(self._backend, chain, self._template_dir)
        except (Timeout, RateLimited, TransportError, AuthFailure, ScriptMiss) as err:
            raise JudgeUnavailable(str(err)) from err


def check_distinct_models(
    generator: BackendConfig, verifier: BackendConfig, strict: bool = True
) -> None:
    """Strict mode refuses generator == verifier model (circularity rule)."""
    if not strict:
        return
    if generator.model_name and generator.model_name == verifier.model_name:
        raise ModelCircularityError(
            f"generator and verifier share model {generator.model_name!r}; "
            "use distinct models or disable strict mode"
        )
