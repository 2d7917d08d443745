"""Model backends and structured-output parsing.

``diagnose`` sends one prompt to either a chat-completions endpoint or the
deterministic offline mock, then validates the reply against the six-field
report schema. Invalid replies are retried up to twice with a corrective
re-ask appended; if the model still cannot produce a parseable object the
report comes back with validity INVALID_OUTPUT so the evaluator can exclude
it. Transport problems are a different failure mode (TransportFailure).

Reasoning-style models often wrap deliberation in <think> tags; those spans
are stripped before JSON extraction.
"""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from enum import Enum

import requests

from .errors import NoJsonFound, SchemaViolation, TransportFailure
from .records import Label

FORCE_INVALID_MARKER = "[[FORCE_INVALID]]"
MOCK_RMSSD_THRESHOLD_MS = 15.0

_THINK_RE = re.compile(r"<think>.*?</think>", re.DOTALL)
_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


class Validity(Enum):
    VALID = "VALID"
    INVALID_OUTPUT = "INVALID_OUTPUT"


@dataclass
class DiagnosisReport:
    diagnosis: Label | None
    confidence: float
    reasoning: str
    indicators: list[str]
    risk_factors: list[str]
    other_findings: list[str]
    validity: Validity
    raw_response: str

    def to_json_dict(self) -> dict:
        return {
            "diagnosis": None if self.diagnosis is None else self.diagnosis.name,
            "confidence": self.confidence,
            "reasoning": self.reasoning,
            "indicators": self.indicators,
            "risk_factors": self.risk_factors,
            "other_findings": self.other_findings,
            "validity": self.validity.value,
        }


@dataclass(frozen=True)
class BackendConfig:
    """Where diagnoses come from: 'mock' or an OpenAI-style chat endpoint."""

    kind: str = "mock"
    base_url: str = "http://localhost:11434"
    model: str = "deepseek-r1:1.5b"
    api_key: str = ""
    timeout: float = 120.0
    parse_retries: int = 2
    transport_retries: int = 2
    concurrency: int = 4

    @classmethod
    def from_env(cls, kind: str = "http", **overrides) -> "BackendConfig":
        env = {
            "base_url": os.environ.get("CARDIORAG_BASE_URL"),
            "model": os.environ.get("CARDIORAG_MODEL"),
            "api_key": os.environ.get("CARDIORAG_API_KEY"),
        }
        kwargs = {k: v for k, v in env.items() if v}
        kwargs.update(overrides)
        return cls(kind=kind, **kwargs)


SYSTEM_MESSAGE = ("You are a clinical decision-support assistant. "
                  "Always answer with the single JSON object requested.")


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _first_balanced_object(text: str) -> str | None:
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escape = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start:i + 1]
        start = text.find("{", start + 1)
    return None


def _as_str_list(value) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [value] if value else []
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [str(value)]


def parse_structured_output(text: str) -> DiagnosisReport:
    """Parse and validate a model reply into a DiagnosisReport.

    Raises NoJsonFound when no object can be extracted and SchemaViolation
    when the mandatory diagnosis field is missing or not POSITIVE/NEGATIVE.
    Other fields are optional and default to empty values.
    """
    cleaned = _THINK_RE.sub("", text)

    candidate = None
    fence = _FENCE_RE.search(cleaned)
    if fence:
        candidate = _first_balanced_object(fence.group(1))
    if candidate is None:
        candidate = _first_balanced_object(cleaned)
    if candidate is None:
        raise NoJsonFound("response contains no JSON object")

    try:
        obj = json.loads(candidate)
    except json.JSONDecodeError as exc:
        raise NoJsonFound(f"extracted text is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaViolation("top-level JSON value is not an object")

    raw_diag = obj.get("diagnosis")
    if not isinstance(raw_diag, str):
        raise SchemaViolation("diagnosis field missing")
    diag_name = raw_diag.strip().upper()
    if diag_name not in ("POSITIVE", "NEGATIVE"):
        raise SchemaViolation(f"diagnosis {raw_diag!r} not in POSITIVE/NEGATIVE")

    try:
        confidence = float(obj.get("confidence", 0.0))
    except (TypeError, ValueError):
        confidence = 0.0
    confidence = min(100.0, max(0.0, confidence))

    return DiagnosisReport(
        diagnosis=Label[diag_name],
        confidence=confidence,
        reasoning=str(obj.get("reasoning", "") or ""),
        indicators=_as_str_list(obj.get("indicators")),
        risk_factors=_as_str_list(obj.get("risk_factors")),
        other_findings=_as_str_list(obj.get("other_findings")),
        validity=Validity.VALID,
        raw_response=text,
    )


# ---------------------------------------------------------------------------
# mock backend
# ---------------------------------------------------------------------------

def _patient_section(prompt: str) -> str:
    marker = "## Patient features"
    start = prompt.find(marker)
    if start == -1:
        return ""
    body = prompt[start + len(marker):]
    nxt = body.find("\n## ")
    return body if nxt == -1 else body[:nxt]


def mock_backend(prompt: str) -> str:
    """Deterministic offline stand-in for a reasoning model.

    Votes POSITIVE when the patient section shows RBBB, LAFB, or an RMSSD
    under 15 ms; otherwise NEGATIVE. A [[FORCE_INVALID]] marker anywhere in
    the prompt produces deliberately unparseable prose, exercising the
    exclusion path end to end.
    """
    if FORCE_INVALID_MARKER in prompt:
        return ("I considered the tracing at length but cannot commit my "
                "assessment to the requested form. Please consult a "
                "specialist for a conclusive interpretation.")

    section = _patient_section(prompt)
    rbbb = re.search(r"^RBBB: yes$", section, re.MULTILINE) is not None
    lafb = re.search(r"^LAFB: yes$", section, re.MULTILINE) is not None
    m = re.search(r"^RMSSD: ([0-9.]+) ms", section, re.MULTILINE)
    rmssd = float(m.group(1)) if m else None
    low_hrv = rmssd is not None and rmssd < MOCK_RMSSD_THRESHOLD_MS

    indicators = []
    if rbbb:
        indicators.append("right bundle branch block")
    if lafb:
        indicators.append("left anterior fascicular block")
    if low_hrv:
        indicators.append(f"reduced heart rate variability (RMSSD {rmssd:.1f} ms)")

    positive = bool(indicators)
    if positive:
        reasoning = ("Conduction or autonomic findings consistent with "
                     "chronic Chagas cardiomyopathy: " + "; ".join(indicators) + ".")
    else:
        reasoning = ("No conduction block and preserved heart rate "
                     "variability; nothing suggests Chagas cardiomyopathy.")

    obj = {
        "diagnosis": "POSITIVE" if positive else "NEGATIVE",
        "confidence": 70 if positive else 65,
        "reasoning": reasoning,
        "indicators": indicators,
        "risk_factors": [],
        "other_findings": [],
    }
    think = ("I will check the conduction findings, the axis and the "
             "heart rate variability, then weigh the retrieved cases.")
    return f"<think>{think}</think>\n```json\n{json.dumps(obj, indent=2)}\n```"


# ---------------------------------------------------------------------------
# http backend + entry point
# ---------------------------------------------------------------------------

def _chat_request(prompt: str, backend: BackendConfig) -> str:
    url = backend.base_url.rstrip("/") + "/v1/chat/completions"
    headers = {"Content-Type": "application/json"}
    if backend.api_key:
        headers["Authorization"] = f"Bearer {backend.api_key}"
    payload = {
        "model": backend.model,
        "messages": [
            {"role": "system", "content": SYSTEM_MESSAGE},
            {"role": "user", "content": prompt},
        ],
        "temperature": 0,
    }
    last_exc: Exception | None = None
    for _ in range(backend.transport_retries + 1):
        try:
            resp = requests.post(url, json=payload, headers=headers,
                                 timeout=backend.timeout)
            resp.raise_for_status()
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, IndexError,
                ValueError) as exc:
            last_exc = exc
    raise TransportFailure(f"chat endpoint failed after "
                           f"{backend.transport_retries + 1} attempts: {last_exc}")


_CORRECTIVE = ("\n\nYour previous reply could not be parsed. Respond again "
               "with ONLY the single JSON object in the required format, "
               "with a diagnosis of POSITIVE or NEGATIVE.")


def diagnose(prompt: str, backend: BackendConfig) -> DiagnosisReport:
    """Run one prompt through the configured backend.

    Parse failures trigger up to ``parse_retries`` corrective re-asks; a
    still-unparseable reply yields validity INVALID_OUTPUT. Transport
    failures raise TransportFailure instead.
    """
    call = mock_backend if backend.kind == "mock" else \
        (lambda p: _chat_request(p, backend))

    text = ""
    for attempt in range(backend.parse_retries + 1):
        ask = prompt if attempt == 0 else prompt + _CORRECTIVE
        text = call(ask)
        try:
            return parse_structured_output(text)
        except (NoJsonFound, SchemaViolation):
            continue

    return DiagnosisReport(
        diagnosis=None,
        confidence=0.0,
        reasoning="",
        indicators=[],
        risk_factors=[],
        other_findings=[],
        validity=Validity.INVALID_OUTPUT,
        raw_response=text,
    )
