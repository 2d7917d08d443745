"""Parameterized synthetic 12-lead ECGs.

Records are assembled from per-lead wave templates with known amplitudes
and durations, so delineation and rule tests can compare measurements
against the construction parameters. QRS waves are triangles (constant
slope, unambiguous onset/offset corners); T waves are raised-cosine bumps
placed well outside the +/-100 ms measurement window.

Frontal-plane morphologies can be generated for a target electrical axis
by projecting the axis onto each limb lead's hexaxial angle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .records import LEAD_NAMES, EcgRecord, Label, Sex, Source

LIMB_ANGLES_DEG = {"I": 0.0, "II": 60.0, "III": 120.0,
                   "aVR": -150.0, "aVL": -30.0, "aVF": 90.0}

DEFAULT_FS = 400
DEFAULT_SAMPLES = 2800


@dataclass(frozen=True)
class Wave:
    """One triangular deflection: amplitude (mV, signed), duration (ms),
    apex position as a fraction of the duration."""

    amplitude: float
    duration_ms: float
    apex_frac: float = 0.5


@dataclass
class LeadMorphology:
    """QRS wave sequence plus an optional T wave."""

    waves: list[Wave] = field(default_factory=list)
    t_amplitude: float = 0.0
    t_duration_ms: float = 160.0
    t_delay_ms: float = 120.0  # gap between QRS offset and T onset

    @property
    def qrs_duration_ms(self) -> float:
        return sum(w.duration_ms for w in self.waves)


def monophasic(amp: float, dur_ms: float, apex_frac: float = 0.5,
               t_amp: float = 0.0) -> LeadMorphology:
    return LeadMorphology(waves=[Wave(amp, dur_ms, apex_frac)], t_amplitude=t_amp)


def qr(q_amp: float, q_ms: float, r_amp: float, r_ms: float,
       t_amp: float = 0.0) -> LeadMorphology:
    return LeadMorphology(waves=[Wave(-abs(q_amp), q_ms), Wave(r_amp, r_ms)],
                          t_amplitude=t_amp)


def rs(r_amp: float, r_ms: float, s_amp: float, s_ms: float,
       t_amp: float = 0.0) -> LeadMorphology:
    return LeadMorphology(waves=[Wave(r_amp, r_ms), Wave(-abs(s_amp), s_ms)],
                          t_amplitude=t_amp)


def rsr_prime(r_amp: float, r_ms: float, s_amp: float, s_ms: float,
              rp_amp: float, rp_ms: float, t_amp: float = 0.0) -> LeadMorphology:
    return LeadMorphology(
        waves=[Wave(r_amp, r_ms), Wave(-abs(s_amp), s_ms), Wave(rp_amp, rp_ms)],
        t_amplitude=t_amp)


def _render_wave(amp: float, n: int, apex_frac: float) -> np.ndarray:
    if n < 2:
        return np.full(n, amp)
    apex = min(n - 1, max(1, int(round(apex_frac * (n - 1)))))
    y = np.empty(n)
    y[:apex + 1] = np.linspace(0.0, amp, apex + 1)
    y[apex:] = np.linspace(amp, 0.0, n - apex)
    return y


def _render_beat(m: LeadMorphology, fs: float) -> tuple[np.ndarray, int]:
    """Render one beat; returns (samples, index of the QRS temporal center).

    Beats are aligned across leads on the QRS center so that every lead's
    complex is simultaneous, as electrical activation is.
    """
    parts = []
    for w in m.waves:
        n = max(2, int(round(w.duration_ms * fs / 1000.0)))
        parts.append(_render_wave(w.amplitude, n, w.apex_frac))
    qrs = np.concatenate(parts) if parts else np.zeros(1)

    if m.t_amplitude != 0.0:
        gap = np.zeros(int(round(m.t_delay_ms * fs / 1000.0)))
        nt = int(round(m.t_duration_ms * fs / 1000.0))
        t = m.t_amplitude * 0.5 * (1 - np.cos(2 * np.pi * np.arange(nt) / max(1, nt - 1)))
        beat = np.concatenate([qrs, gap, t])
    else:
        beat = qrs
    return beat, qrs.size // 2


def make_record(morphologies: dict[str, LeadMorphology],
                rr_ms: list[float] | float = 750.0,
                record_id: str = "synthetic",
                fs: float = DEFAULT_FS,
                n_samples: int = DEFAULT_SAMPLES,
                first_beat_s: float = 0.5,
                noise_mv: float = 0.0,
                age: float | None = None,
                sex: Sex = Sex.UNKNOWN,
                label: Label = Label.UNLABELED,
                rng: np.random.Generator | None = None) -> EcgRecord:
    """Place identical beats on every lead at the given RR schedule.

    ``rr_ms`` is either a constant interval or a pattern cycled until the
    record is full. Beat times mark each QRS temporal center.
    """
    if isinstance(rr_ms, (int, float)):
        rr_pattern = [float(rr_ms)]
    else:
        rr_pattern = [float(v) for v in rr_ms]

    beat_times = [first_beat_s]
    i = 0
    while True:
        nxt = beat_times[-1] + rr_pattern[i % len(rr_pattern)] / 1000.0
        if nxt >= n_samples / fs - 0.3:
            break
        beat_times.append(nxt)
        i += 1

    signals = np.zeros((12, n_samples), dtype=np.float64)
    for li, name in enumerate(LEAD_NAMES):
        m = morphologies.get(name)
        if m is None or not m.waves:
            continue
        beat, center = _render_beat(m, fs)
        for t in beat_times:
            start = int(round(t * fs)) - center
            if start < 0 or start + beat.size > n_samples:
                continue
            signals[li, start:start + beat.size] += beat

    if noise_mv > 0.0:
        rng = rng or np.random.default_rng(0)
        signals += rng.normal(0.0, noise_mv, size=signals.shape)

    return EcgRecord(record_id=record_id, source=Source.SYNTHETIC,
                     signals=signals.astype(np.float32), fs=float(fs),
                     age=age, sex=sex, label=label)


def limb_morphologies_for_axis(axis_deg: float, qrs_ms: float = 95.0,
                               scale: float = 1.0,
                               avl_q_ms: float = 0.0,
                               avl_q_amp: float = 0.12) -> dict[str, LeadMorphology]:
    """Limb-lead morphologies whose net deflections point at ``axis_deg``.

    Positive projections render as R (or qR for aVL when a septal Q is
    requested), negative ones as rS with the requested net deflection.
    """
    out: dict[str, LeadMorphology] = {}
    for lead, ang in LIMB_ANGLES_DEG.items():
        proj = scale * math.cos(math.radians(axis_deg - ang))
        if lead == "aVL" and avl_q_ms > 0 and proj > 0:
            q_amp = avl_q_amp
            out[lead] = qr(q_amp, avl_q_ms, r_amp=proj + q_amp,
                           r_ms=qrs_ms - avl_q_ms)  # net = r - q stays on axis
        elif proj >= 0.12:
            out[lead] = monophasic(proj, qrs_ms)
        elif proj > -0.12:
            # near-orthogonal lead: balanced rS, tiny net
            r = 0.25
            out[lead] = rs(r, qrs_ms / 2, abs(r - proj), qrs_ms / 2)
        else:
            r = 0.15
            out[lead] = rs(r, qrs_ms * 0.3, abs(proj) + r, qrs_ms * 0.7)
    return out


# ---------------------------------------------------------------------------
# screening presets
# ---------------------------------------------------------------------------

def normal_record(record_id: str = "normal", rr_ms=(750.0, 790.0),
                  **meta) -> EcgRecord:
    """Narrow QRS, normal axis (~40 degrees), preserved HRV."""
    m = limb_morphologies_for_axis(40.0, qrs_ms=95.0)
    m["V1"] = rs(0.3, 40.0, 0.8, 55.0)
    m["V2"] = rs(0.4, 42.0, 0.7, 53.0)
    m["V3"] = rs(0.5, 45.0, 0.5, 50.0)
    m["V4"] = rs(0.8, 50.0, 0.4, 45.0)
    m["V5"] = qr(0.1, 18.0, 1.4, 77.0, t_amp=0.25)
    m["V6"] = qr(0.1, 18.0, 1.2, 77.0, t_amp=0.2)
    return make_record(m, rr_ms=list(rr_ms), record_id=record_id, **meta)


def rbbb_record(record_id: str = "rbbb", rr_ms=735.0, **meta) -> EcgRecord:
    """Wide QRS with rSR' in V1/V2 and constant RR (low RMSSD)."""
    m = limb_morphologies_for_axis(30.0, qrs_ms=140.0)
    m["V1"] = rsr_prime(0.5, 32.0, 0.6, 42.0, 1.2, 66.0)
    m["V2"] = rsr_prime(0.5, 32.0, 0.5, 42.0, 1.0, 66.0)
    m["V3"] = rs(0.6, 58.0, 0.5, 82.0)
    m["V4"] = rs(0.8, 62.0, 0.4, 78.0)
    m["V5"] = monophasic(1.2, 140.0, t_amp=0.2)
    m["V6"] = monophasic(1.1, 140.0, t_amp=0.2)
    return make_record(m, rr_ms=rr_ms, record_id=record_id, **meta)


def lafb_record(record_id: str = "lafb", rr_ms=(800.0, 840.0), **meta) -> EcgRecord:
    """Narrow QRS, left axis (-60 degrees), small septal Q in aVL."""
    m = limb_morphologies_for_axis(-60.0, qrs_ms=98.0, avl_q_ms=22.0)
    m["V1"] = rs(0.3, 40.0, 0.7, 58.0)
    m["V2"] = rs(0.4, 42.0, 0.6, 56.0)
    m["V3"] = rs(0.5, 45.0, 0.5, 53.0)
    m["V4"] = rs(0.7, 50.0, 0.4, 48.0)
    m["V5"] = qr(0.1, 18.0, 1.2, 80.0, t_amp=0.2)
    m["V6"] = qr(0.1, 18.0, 1.0, 80.0, t_amp=0.2)
    return make_record(m, rr_ms=list(rr_ms), record_id=record_id, **meta)


def low_hrv_record(record_id: str = "lowhrv", **meta) -> EcgRecord:
    """Normal morphology but metronomic rhythm (RMSSD near zero)."""
    m = limb_morphologies_for_axis(40.0, qrs_ms=95.0)
    m["V1"] = rs(0.3, 40.0, 0.8, 55.0)
    m["V5"] = qr(0.1, 18.0, 1.4, 77.0, t_amp=0.25)
    m["V6"] = qr(0.1, 18.0, 1.2, 77.0, t_amp=0.2)
    return make_record(m, rr_ms=700.0, record_id=record_id, **meta)


def random_screening_record(rng: np.random.Generator, record_id: str,
                            label: Label) -> EcgRecord:
    """Randomized positive/negative record for corpus-scale tests.

    Positives draw one of the three mechanisms (RBBB, LAFB, low HRV);
    negatives are normal records with preserved HRV. Ages, sexes and RR
    baselines vary.
    """
    age = float(rng.integers(25, 85))
    sex = Sex.M if rng.random() < 0.5 else Sex.F
    base = float(rng.uniform(650.0, 950.0))
    meta = dict(age=age, sex=sex, label=label)

    if label is Label.POSITIVE:
        kind = rng.choice(["rbbb", "lafb", "lowhrv"])
        if kind == "rbbb":
            return rbbb_record(record_id, rr_ms=base, **meta)
        if kind == "lafb":
            return lafb_record(record_id, rr_ms=(base, base + 42.0), **meta)
        return low_hrv_record(record_id, **meta)
    jitter = float(rng.uniform(35.0, 60.0))
    return normal_record(record_id, rr_ms=(base, base + jitter), **meta)


def pulse_train(freq_hz: float = 1.0, fs: float = DEFAULT_FS,
                duration_s: float = 7.0, amp: float = 1.0,
                width_ms: float = 80.0, first_s: float = 0.5) -> tuple[np.ndarray, list[int]]:
    """Single-lead train of triangular pulses; returns (signal, apex indices)."""
    n = int(round(duration_s * fs))
    x = np.zeros(n)
    apices = []
    half = int(round(width_ms * fs / 2000.0))
    t = first_s
    while t < duration_s - 0.1:
        c = int(round(t * fs))
        lo, hi = c - half, c + half
        if lo >= 0 and hi < n:
            x[lo:c + 1] += np.linspace(0, amp, c - lo + 1)
            x[c:hi + 1] += np.linspace(amp, 0, hi - c + 1)
            x[c] = amp
            apices.append(c)
        t += 1.0 / freq_hz
    return x, apices
