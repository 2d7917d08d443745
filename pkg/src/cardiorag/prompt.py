"""Prompt assembly for the four screening configurations.

Variants differ only in which static blocks their template carries:

* P1 detailed: background + detailed ECG criteria
* P2 simplified: background only
* P3 context-free: neither
* P4 conservative: P1 plus one cautionary block

Dynamic sections (patient features, retrieved cases, output format) are
substituted into ``[[...]]`` tokens. The retrieved-cases section is capped
at ``char_budget`` characters by dropping the lowest-ranked cases first.
All rendering is deterministic: fixed float formats, no timestamps.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .casedb import ScoredCase
from .clinical import ClinicalFeatures
from .records import Sex

PATIENT_HEADER = "## Patient features"
CASES_HEADER = "## Similar cases"

_PATIENT_TOKEN = "[[PATIENT_FEATURES]]"
_CASES_TOKEN = "[[SIMILAR_CASES]]"
_FORMAT_TOKEN = "[[OUTPUT_FORMAT]]"

_OUTPUT_FORMAT = """## Required output format
Respond with a single JSON object and nothing else:
{
  "diagnosis": "POSITIVE" or "NEGATIVE",
  "confidence": <number 0-100>,
  "reasoning": "<concise clinical reasoning>",
  "indicators": ["<diagnostic indicators found>"],
  "risk_factors": ["<relevant risk factors>"],
  "other_findings": ["<other cardiac findings>"]
}"""


class Variant(Enum):
    P1 = "p1"
    P2 = "p2"
    P3 = "p3"
    P4 = "p4"


@dataclass(frozen=True)
class PromptConfig:
    variant: Variant = Variant.P2
    char_budget: int = 4000  # cap for the retrieved-cases section
    include_schema_instructions: bool = True

    def __post_init__(self):
        if self.char_budget <= 0:
            raise ValueError("char_budget must be positive")


def load_template(variant: Variant) -> str:
    ref = resources.files("cardiorag.templates") / f"{variant.value}.txt"
    return ref.read_text(encoding="utf-8")


def _fmt_age(age: float | None) -> str:
    return "unknown" if age is None else f"{age:g}"


def _fmt_sex(sex: Sex) -> str:
    return "unknown" if sex is Sex.UNKNOWN else sex.name


def _yesno(flag: bool) -> str:
    return "yes" if flag else "no"


def render_features(f: ClinicalFeatures) -> str:
    lines = [
        f"age: {_fmt_age(f.age)}",
        f"sex: {_fmt_sex(f.sex)}",
        f"RBBB: {_yesno(f.rbbb)}",
        f"LAFB: {_yesno(f.lafb)}",
        f"RMSSD: {f.rmssd:.1f} ms (lead {f.hrv_lead})",
        f"ventricular rate: {f.ventricular_rate:.1f} bpm",
        f"QRS axis: {f.qrs_axis:.1f} degrees",
        f"QRS duration: {f.qrs_duration:.1f} ms",
    ]
    return "\n".join(lines)


def format_case(sc: ScoredCase, index: int = 1) -> str:
    """One deterministic line describing a retrieved case."""
    f = sc.case.features
    return (f"Case {index}: age {_fmt_age(sc.case.age)}, "
            f"sex {_fmt_sex(sc.case.sex)}, "
            f"RBBB: {_yesno(f.rbbb)}, LAFB: {_yesno(f.lafb)}, "
            f"RMSSD: {f.rmssd:.1f} ms, rate: {f.ventricular_rate:.1f} bpm, "
            f"label: {sc.case.label.name}")


def _render_cases_section(cases: list[ScoredCase], budget: int) -> str:
    """Largest whole-section rendering within the character budget.

    Cases are dropped from the bottom of the ranking; a higher-ranked case
    is never sacrificed for a lower-ranked one.
    """
    if not cases:
        return ""

    def render(n: int) -> str:
        lines = [format_case(sc, i + 1) for i, sc in enumerate(cases[:n])]
        return (f"{CASES_HEADER}\n"
                "Reference cases retrieved from a labeled database, "
                "most similar first:\n" + "\n".join(lines) + "\n\n")

    for n in range(len(cases), 0, -1):
        text = render(n)
        if len(text) <= budget:
            return text
    return ""


def build_prompt(cfg: PromptConfig, features: ClinicalFeatures,
                 cases: list[ScoredCase]) -> str:
    """Assemble the full prompt text (cases must be pre-sorted by rank)."""
    template = load_template(cfg.variant)
    text = template.replace(_PATIENT_TOKEN, render_features(features))
    text = text.replace(_CASES_TOKEN,
                        _render_cases_section(cases, cfg.char_budget))
    fmt = _OUTPUT_FORMAT if cfg.include_schema_instructions else ""
    text = text.replace(_FORMAT_TOKEN, fmt)
    return text.rstrip() + "\n"
