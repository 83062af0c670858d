"""Structured LLM access for contact-point proposals.

Builds the zero-shot selection prompt (task description, target pushing
direction, indexed world-frame candidate list), posts it to any
OpenAI-compatible chat-completions endpoint with a structured-output
schema, and validates the reply into an index proposal. Endpoint errors
surface as InitializerFailure so the local search can fall back to the
greedy initializer.

Configuration comes from CONPOSE_LLM_URL, CONPOSE_LLM_API_KEY and
CONPOSE_LLM_MODEL unless given explicitly. Every request is mirrored to
the ``conpose.llm.audit`` logger as one JSON line.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from importlib import resources

import requests

from .geometry import WorldCandidateSet
from .selection import InitializerFailure, Proposal

_audit = logging.getLogger("conpose.llm.audit")

ENV_URL = "CONPOSE_LLM_URL"
ENV_API_KEY = "CONPOSE_LLM_API_KEY"
ENV_MODEL = "CONPOSE_LLM_MODEL"

RESPONSE_SCHEMA = {
    "type": "object",
    "properties": {
        "reasoning": {"type": "string"},
        "contact_points": {"type": "array", "items": {"type": "integer"}},
    },
    "required": ["reasoning", "contact_points"],
    "additionalProperties": False,
}


class LlmError(Exception):
    pass


class Timeout(LlmError):
    """The endpoint did not answer within the configured deadline."""


class TransportError(LlmError):
    """Connection failure or non-success HTTP status."""


class SchemaViolation(LlmError):
    """The reply payload could not be parsed into a proposal."""


@dataclass
class EndpointConfig:
    url: str
    api_key: str = ""
    model: str = ""
    timeout_s: float = 60.0
    max_retries: int = 2
    temperature: float = 0.0

    @classmethod
    def from_env(cls) -> "EndpointConfig":
        url = os.environ.get(ENV_URL, "")
        if not url:
            raise LlmError(f"{ENV_URL} is not set")
        return cls(
            url=url,
            api_key=os.environ.get(ENV_API_KEY, ""),
            model=os.environ.get(ENV_MODEL, ""),
        )


def _task_description() -> str:
    return (
        resources.files("conpose.assets")
        .joinpath("selection_prompt.txt")
        .read_text(encoding="utf-8")
        .strip()
    )


@dataclass
class SelectionPrompt:
    """Deterministic prompt text for one selection query.

    Candidate positions are serialized to 0.01 m and angles to 1e-4 rad;
    the candidate listing order equals the candidate index order.
    """

    task_description: str
    target_phi: float
    candidates: list[tuple[int, float, float, float]]
    n: int
    text: str = field(init=False)

    def __post_init__(self):
        lines = [
            self.task_description,
            "",
            f"Number of robots: {self.n}",
            f"Target pushing direction (radians): {self.target_phi:.4f}",
            "",
            "Candidate contact points (index: x [m], y [m], pushing direction [rad]):",
        ]
        for idx, x, y, d in self.candidates:
            lines.append(f"{idx}: x={x:.2f}, y={y:.2f}, direction={d:.4f}")
        lines.append("")
        lines.append(
            f"Select exactly {self.n} distinct contact point indices so the object "
            "is pushed as closely as possible along the target direction while "
            "minimizing object rotation."
        )
        self.text = "\n".join(lines)


def build_prompt(candidates: WorldCandidateSet, target_phi: float, n: int) -> SelectionPrompt:
    """Assemble the three-part selection prompt for the current world state."""
    listing = [
        (i, float(candidates.positions[i, 0]), float(candidates.positions[i, 1]),
         float(candidates.directions[i]))
        for i in range(len(candidates))
    ]
    return SelectionPrompt(_task_description(), target_phi, listing, n)


@dataclass
class LlmProposal:
    reasoning: str
    indices: list[int]


def parse_proposal_payload(content) -> LlmProposal:
    """Parse a structured-output payload; raises SchemaViolation only."""
    try:
        if isinstance(content, bytes):
            content = content.decode("utf-8")
        data = json.loads(content)
    except (UnicodeDecodeError, ValueError, TypeError) as exc:
        raise SchemaViolation(f"payload is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaViolation("payload is not a JSON object")
    reasoning = data.get("reasoning")
    indices = data.get("contact_points")
    if not isinstance(reasoning, str):
        raise SchemaViolation("missing or non-string 'reasoning'")
    if not isinstance(indices, list) or any(
        isinstance(i, bool) or not isinstance(i, int) for i in indices
    ):
        raise SchemaViolation("'contact_points' must be an integer array")
    return LlmProposal(reasoning=reasoning, indices=list(indices))


def propose(prompt: SelectionPrompt, config: EndpointConfig,
            session: requests.Session | None = None) -> LlmProposal:
    """One chat-completion request with structured output and retries.

    Transport failures are retried up to config.max_retries times; schema
    violations are not (a semantically bad answer is a final answer).
    """
    body = {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt.text}],
        "temperature": config.temperature,
        "response_format": {
            "type": "json_schema",
            "json_schema": {
                "name": "contact_point_selection",
                "strict": True,
                "schema": RESPONSE_SCHEMA,
            },
        },
    }
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    post = (session or requests).post

    last_exc: LlmError | None = None
    for attempt in range(config.max_retries + 1):
        start = time.perf_counter()
        record = {
            "ts": time.time(),
            "attempt": attempt,
            "model": config.model,
            "prompt_chars": len(prompt.text),
        }
        try:
            resp = post(config.url, json=body, headers=headers, timeout=config.timeout_s)
        except requests.Timeout as exc:
            record.update(status="timeout", latency_s=time.perf_counter() - start)
            _audit.info(json.dumps(record))
            last_exc = Timeout(str(exc))
            continue
        except requests.RequestException as exc:
            record.update(status="transport_error", latency_s=time.perf_counter() - start)
            _audit.info(json.dumps(record))
            last_exc = TransportError(str(exc))
            continue
        record["latency_s"] = time.perf_counter() - start
        record["http_status"] = resp.status_code
        if resp.status_code != 200:
            record["status"] = "http_error"
            _audit.info(json.dumps(record))
            last_exc = TransportError(f"HTTP {resp.status_code}")
            continue
        try:
            payload = resp.json()
            content = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage")
            if isinstance(usage, dict):
                record["prompt_tokens"] = usage.get("prompt_tokens")
                record["completion_tokens"] = usage.get("completion_tokens")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            record["status"] = "schema_violation"
            _audit.info(json.dumps(record))
            raise SchemaViolation(f"malformed completion envelope: {exc}") from exc
        proposal = parse_proposal_payload(content)  # SchemaViolation passes through
        record["status"] = "ok"
        record["indices"] = proposal.indices
        _audit.info(json.dumps(record))
        return proposal
    raise last_exc if last_exc is not None else TransportError("no attempts made")


class LlmClient:
    """Shareable endpoint wrapper reusing one HTTP session."""

    def __init__(self, config: EndpointConfig | None = None):
        self.config = config or EndpointConfig.from_env()
        self._session = requests.Session()

    def propose(self, prompt: SelectionPrompt) -> LlmProposal:
        return propose(prompt, self.config, self._session)


class LlmInitializer:
    """Selection initializer backed by an LLM endpoint.

    Endpoint or schema failures are mapped to InitializerFailure so
    conpose_select can substitute the greedy initializer; naive selection
    treats the same failure as a failed selection step.
    """

    name = "llm"

    def __init__(self, client: LlmClient):
        self.client = client

    def __call__(self, candidates, target_phi, n, rng) -> Proposal:
        prompt = build_prompt(candidates, target_phi, n)
        try:
            reply = self.client.propose(prompt)
        except LlmError as exc:
            raise InitializerFailure(str(exc)) from exc
        return Proposal(indices=reply.indices, reasoning=reply.reasoning)
