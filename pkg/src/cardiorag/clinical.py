"""Chagas-relevant clinical features: conduction blocks, HRV, rate, axis.

The conduction-block rules are boolean functions of the measured wave
parameters, following Minnesota-Code-style criteria restricted to the
parameters the delineator produces. Thresholds are configuration constants
with clinical defaults (wide QRS 120 ms, late R-peak 60 ms, septal Q cap
40 ms, left-axis band -90..-45 degrees).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delineate import WaveMeasurements, compute_axis, delineate_qrs, detect_r_peaks
from .errors import InsufficientPeaks, MissingLead
from .records import EcgRecord, Sex

LIMB_LEADS = ["I", "II", "III", "aVL", "aVF"]
RBBB_PRECORDIAL_LEADS = ["V1", "V2"]


@dataclass(frozen=True)
class CriteriaThresholds:
    wide_qrs_ms: float = 120.0
    late_r_peak_ms: float = 60.0
    max_septal_q_ms: float = 40.0
    left_axis_min_deg: float = -90.0
    left_axis_max_deg: float = -45.0


DEFAULT_THRESHOLDS = CriteriaThresholds()


@dataclass
class ClinicalFeatures:
    rbbb: bool
    lafb: bool
    rmssd: float
    ventricular_rate: float
    qrs_axis: float
    qrs_duration: float  # max over limb leads, ms
    hrv_lead: str
    age: float | None = None
    sex: Sex = Sex.UNKNOWN

    def to_json_dict(self) -> dict:
        """Feature JSON schema shared by the prompt builder and the CLI."""
        return {
            "rbbb": self.rbbb,
            "lafb": self.lafb,
            "rmssd_ms": self.rmssd,
            "ventricular_rate_bpm": self.ventricular_rate,
            "qrs_axis_deg": self.qrs_axis,
            "qrs_duration_ms": self.qrs_duration,
            "hrv_lead": self.hrv_lead,
            "age": self.age,
            "sex": self.sex.name,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ClinicalFeatures":
        return cls(
            rbbb=bool(d["rbbb"]),
            lafb=bool(d["lafb"]),
            rmssd=float(d["rmssd_ms"]),
            ventricular_rate=float(d["ventricular_rate_bpm"]),
            qrs_axis=float(d["qrs_axis_deg"]),
            qrs_duration=float(d["qrs_duration_ms"]),
            hrv_lead=str(d.get("hrv_lead", "V5")),
            age=None if d.get("age") is None else float(d["age"]),
            sex=Sex[d["sex"]] if d.get("sex") in Sex.__members__ else Sex.UNKNOWN,
        )


def _require(m: dict[str, WaveMeasurements], leads: list[str]) -> None:
    missing = [l for l in leads if l not in m]
    if missing:
        raise MissingLead(f"measurements missing leads {missing}")


def detect_rbbb(m: dict[str, WaveMeasurements],
                thresholds: CriteriaThresholds = DEFAULT_THRESHOLDS) -> bool:
    """Complete right bundle branch block.

    Wide QRS (>= 120 ms) in at least one limb lead, plus a V1/V2 pattern:
    either a secondary R' taller than R, or a positive net deflection with
    a late R peak (>= 60 ms after onset).
    """
    _require(m, LIMB_LEADS + RBBB_PRECORDIAL_LEADS)
    wide = any(m[l].qrs_duration >= thresholds.wide_qrs_ms for l in LIMB_LEADS)
    if not wide:
        return False
    for lead in RBBB_PRECORDIAL_LEADS:
        meas = m[lead]
        if meas.r_prime_amplitude > meas.r_amplitude:
            return True
        if meas.net_deflection > 0 and meas.r_peak_duration >= thresholds.late_r_peak_ms:
            return True
    return False


def detect_lafb(m: dict[str, WaveMeasurements], axis: float,
                thresholds: CriteriaThresholds = DEFAULT_THRESHOLDS) -> bool:
    """Left anterior fascicular block.

    Narrow QRS (< 120 ms) in every limb lead, left axis deviation within
    [-90, -45] degrees, and a small septal Q in aVL (0 < duration <= 40 ms).
    """
    _require(m, LIMB_LEADS)
    if any(m[l].qrs_duration >= thresholds.wide_qrs_ms for l in LIMB_LEADS):
        return False
    if not (thresholds.left_axis_min_deg <= axis <= thresholds.left_axis_max_deg):
        return False
    q = m["aVL"].q_duration
    return 0.0 < q <= thresholds.max_septal_q_ms


def compute_hrv(r_peaks: list[int], fs: float) -> tuple[float, float]:
    """Ventricular rate (bpm) and RMSSD (ms) from R-peak sample indices.

    Needs at least 3 peaks (2 RR intervals). RMSSD is the root mean square
    of successive RR differences, accumulated in double precision.
    """
    if len(r_peaks) < 3:
        raise InsufficientPeaks(f"need >= 3 peaks, got {len(r_peaks)}")
    rr_ms = np.diff(np.asarray(r_peaks, dtype=np.float64)) * (1000.0 / fs)
    rate = 60000.0 / float(np.mean(rr_ms))
    diffs = np.diff(rr_ms)
    rmssd = float(np.sqrt(np.mean(diffs * diffs)))
    return rate, rmssd


def extract_features(rec: EcgRecord, hrv_lead: str = "V5",
                     thresholds: CriteriaThresholds = DEFAULT_THRESHOLDS) -> ClinicalFeatures:
    """Full feature set for one preprocessed record."""
    measurements = delineate_qrs(rec)
    axis = compute_axis(measurements)
    rbbb = detect_rbbb(measurements, thresholds)
    lafb = detect_lafb(measurements, axis, thresholds)

    peaks = detect_r_peaks(rec.lead(hrv_lead), rec.fs)
    rate, rmssd = compute_hrv(peaks, rec.fs)

    return ClinicalFeatures(
        rbbb=rbbb,
        lafb=lafb,
        rmssd=rmssd,
        ventricular_rate=rate,
        qrs_axis=axis,
        qrs_duration=max(measurements[l].qrs_duration for l in LIMB_LEADS),
        hrv_lead=hrv_lead,
        age=rec.age,
        sex=rec.sex,
    )
