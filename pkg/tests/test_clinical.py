import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardiorag.clinical import (LIMB_LEADS, ClinicalFeatures, compute_hrv,
                                detect_lafb, detect_rbbb, extract_features)
from cardiorag.delineate import WaveMeasurements
from cardiorag.errors import InsufficientPeaks, MissingLead
from cardiorag.records import EcgRecord, Source


def _wm(lead, qrs=100.0, q_dur=0.0, q_amp=0.0, r_dur=60.0, r_amp=1.0,
        vat=30.0, rp_amp=0.0, s_dur=0.0, s_amp=0.0):
    return WaveMeasurements(
        lead=lead, qrs_onset=0, qrs_offset=int(qrs / 2.5),
        qrs_duration=qrs, q_duration=q_dur, q_amplitude=q_amp,
        r_duration=r_dur, r_amplitude=r_amp, r_peak_duration=vat,
        r_prime_amplitude=rp_amp, s_duration=s_dur, s_amplitude=s_amp,
        net_deflection=(r_amp + rp_amp) + (q_amp + s_amp))


def _measurements(limb_qrs=100.0, v1=None, v2=None, avl_q_dur=0.0,
                  axis_sign=1.0):
    m = {}
    for lead in LIMB_LEADS:
        q = avl_q_dur if lead == "aVL" else 0.0
        m[lead] = _wm(lead, qrs=limb_qrs, q_dur=q,
                      q_amp=-0.1 if q else 0.0,
                      r_amp=axis_sign * 1.0 if lead != "aVL" else 1.0)
    m["V1"] = v1 if v1 is not None else _wm("V1", qrs=limb_qrs, r_amp=0.3,
                                            s_amp=-0.8, vat=20.0)
    m["V2"] = v2 if v2 is not None else _wm("V2", qrs=limb_qrs, r_amp=0.3,
                                            s_amp=-0.8, vat=20.0)
    return m


# ---------------------------------------------------------------------------
# RBBB rule, clause by clause
# ---------------------------------------------------------------------------

def test_rbbb_wide_qrs_with_rsr_prime():
    v1 = _wm("V1", qrs=130.0, r_amp=0.5, s_amp=-0.6, rp_amp=1.2)
    assert detect_rbbb(_measurements(limb_qrs=130.0, v1=v1)) is True


def test_rbbb_narrow_qrs_fails_duration_gate():
    v1 = _wm("V1", qrs=100.0, r_amp=0.5, s_amp=-0.6, rp_amp=1.2)
    assert detect_rbbb(_measurements(limb_qrs=100.0, v1=v1)) is False


def test_rbbb_second_conjunct_fails():
    # wide QRS but V1/V2 negative, no R', early R peak
    v1 = _wm("V1", qrs=130.0, r_amp=0.3, s_amp=-1.0, vat=40.0)
    v2 = _wm("V2", qrs=130.0, r_amp=0.3, s_amp=-1.0, vat=40.0)
    assert detect_rbbb(_measurements(limb_qrs=130.0, v1=v1, v2=v2)) is False


def test_rbbb_late_r_peak_with_positive_net():
    v1 = _wm("V1", qrs=130.0, r_amp=1.0, s_amp=-0.2, vat=70.0)
    assert detect_rbbb(_measurements(limb_qrs=130.0, v1=v1)) is True


def test_rbbb_late_r_peak_needs_positive_net():
    v1 = _wm("V1", qrs=130.0, r_amp=0.3, s_amp=-1.0, vat=70.0)
    v2 = _wm("V2", qrs=130.0, r_amp=0.3, s_amp=-1.0, vat=70.0)
    assert detect_rbbb(_measurements(limb_qrs=130.0, v1=v1, v2=v2)) is False


def test_rbbb_v2_alone_sufficient():
    v2 = _wm("V2", qrs=130.0, r_amp=0.4, s_amp=-0.5, rp_amp=0.9)
    assert detect_rbbb(_measurements(limb_qrs=130.0, v2=v2)) is True


def test_rbbb_one_wide_limb_lead_suffices():
    v1 = _wm("V1", qrs=130.0, r_amp=0.5, s_amp=-0.6, rp_amp=1.2)
    m = _measurements(limb_qrs=100.0, v1=v1)
    m["III"] = _wm("III", qrs=125.0)
    assert detect_rbbb(m) is True


def test_rbbb_missing_lead():
    m = _measurements(limb_qrs=130.0)
    del m["V2"]
    with pytest.raises(MissingLead):
        detect_rbbb(m)


# ---------------------------------------------------------------------------
# LAFB rule, clause by clause
# ---------------------------------------------------------------------------

def test_lafb_all_gates_pass():
    m = _measurements(limb_qrs=100.0, avl_q_dur=20.0)
    assert detect_lafb(m, axis=-60.0) is True


def test_lafb_axis_gate():
    m = _measurements(limb_qrs=100.0, avl_q_dur=20.0)
    assert detect_lafb(m, axis=30.0) is False
    assert detect_lafb(m, axis=-30.0) is False
    assert detect_lafb(m, axis=-100.0) is False


def test_lafb_axis_boundaries_inclusive():
    m = _measurements(limb_qrs=100.0, avl_q_dur=20.0)
    assert detect_lafb(m, axis=-45.0) is True
    assert detect_lafb(m, axis=-90.0) is True


def test_lafb_duration_gate_excludes_wide_qrs():
    m = _measurements(limb_qrs=130.0, avl_q_dur=20.0)
    assert detect_lafb(m, axis=-60.0) is False


def test_lafb_one_wide_limb_lead_blocks():
    m = _measurements(limb_qrs=100.0, avl_q_dur=20.0)
    m["III"] = _wm("III", qrs=125.0)
    assert detect_lafb(m, axis=-60.0) is False


def test_lafb_needs_avl_q():
    m = _measurements(limb_qrs=100.0, avl_q_dur=0.0)
    assert detect_lafb(m, axis=-60.0) is False


def test_lafb_avl_q_too_long():
    m = _measurements(limb_qrs=100.0, avl_q_dur=60.0)
    assert detect_lafb(m, axis=-60.0) is False


def test_lafb_avl_q_at_40ms_boundary():
    m = _measurements(limb_qrs=100.0, avl_q_dur=40.0)
    assert detect_lafb(m, axis=-60.0) is True


def test_lafb_missing_lead():
    m = _measurements(limb_qrs=100.0, avl_q_dur=20.0)
    del m["aVF"]
    with pytest.raises(MissingLead):
        detect_lafb(m, axis=-60.0)


# ---------------------------------------------------------------------------
# rule properties
# ---------------------------------------------------------------------------

def _random_measurements(rng):
    m = {}
    for lead in LIMB_LEADS + ["V1", "V2"]:
        r = float(rng.uniform(0, 1.5))
        rp = float(rng.uniform(0, 1.2)) if rng.random() < 0.4 else 0.0
        q = -float(rng.uniform(0, 0.4)) if rng.random() < 0.5 else 0.0
        s = -float(rng.uniform(0, 1.2)) if rng.random() < 0.6 else 0.0
        m[lead] = _wm(lead, qrs=float(rng.uniform(60, 170)),
                      q_dur=float(rng.uniform(0, 60)) if q else 0.0,
                      q_amp=q, r_amp=r, vat=float(rng.uniform(0, 90)),
                      rp_amp=rp, s_amp=s)
    return m


def test_rbbb_lafb_never_both(rng):
    hits = 0
    for _ in range(500):
        m = _random_measurements(rng)
        axis = float(rng.uniform(-180, 180))
        rbbb, lafb = detect_rbbb(m), detect_lafb(m, axis)
        assert not (rbbb and lafb)
        hits += rbbb or lafb
    assert hits > 0  # the sample actually exercises both rules


def test_rules_invariant_under_amplitude_scaling(rng):
    for _ in range(100):
        m = _random_measurements(rng)
        axis = float(rng.uniform(-180, 180))
        c = float(rng.uniform(0.2, 5.0))
        scaled = {}
        for lead, w in m.items():
            scaled[lead] = _wm(
                lead, qrs=w.qrs_duration, q_dur=w.q_duration,
                q_amp=c * w.q_amplitude, r_dur=w.r_duration,
                r_amp=c * w.r_amplitude, vat=w.r_peak_duration,
                rp_amp=c * w.r_prime_amplitude, s_dur=w.s_duration,
                s_amp=c * w.s_amplitude)
        assert detect_rbbb(m) == detect_rbbb(scaled)
        assert detect_lafb(m, axis) == detect_lafb(scaled, axis)


def test_rules_deterministic(rng):
    m = _random_measurements(rng)
    assert detect_rbbb(m) == detect_rbbb(m)
    assert detect_lafb(m, -60.0) == detect_lafb(m, -60.0)


# ---------------------------------------------------------------------------
# HRV
# ---------------------------------------------------------------------------

def test_hrv_constant_rr():
    fs = 400.0
    peaks = [int(i * 0.750 * fs) for i in range(9)]  # 8 intervals of 750 ms
    rate, rmssd = compute_hrv(peaks, fs)
    assert rate == pytest.approx(80.0)
    assert rmssd == pytest.approx(0.0)


def test_hrv_direct_formula_example():
    fs = 1000.0
    # RR = 800, 820, 790 ms
    peaks = [0, 800, 1620, 2410]
    rate, rmssd = compute_hrv(peaks, fs)
    assert rmssd == pytest.approx(25.4951, abs=1e-4)
    assert rate == pytest.approx(60000.0 / np.mean([800, 820, 790]))


def test_hrv_needs_three_peaks():
    with pytest.raises(InsufficientPeaks):
        compute_hrv([0, 400], 400.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=40, max_value=800), min_size=2,
                max_size=60))
def test_rmssd_time_reversal_invariant(rr_samples):
    fs = 400.0
    peaks = np.cumsum([0] + rr_samples)
    rev = np.cumsum([0] + rr_samples[::-1])
    _, fwd = compute_hrv(list(peaks), fs)
    _, bwd = compute_hrv(list(rev), fs)
    assert fwd == pytest.approx(bwd, rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=40, max_value=800), min_size=2,
                max_size=60),
       st.floats(min_value=0.1, max_value=8.0))
def test_rmssd_scales_linearly(rr_samples, c):
    # scaling all RR by c: realized by scaling fs down by c instead, which
    # leaves integer peak indices intact
    fs = 400.0
    peaks = list(np.cumsum([0] + rr_samples))
    _, base = compute_hrv(peaks, fs)
    _, scaled = compute_hrv(peaks, fs / c)
    assert scaled == pytest.approx(c * base, rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------------------
# extract_features integration
# ---------------------------------------------------------------------------

def test_extract_features_rbbb_pattern(rbbb_pre):
    f = extract_features(rbbb_pre)
    assert f.rbbb is True and f.lafb is False
    assert f.qrs_duration >= 120.0


def test_extract_features_lafb_pattern(lafb_pre):
    f = extract_features(lafb_pre)
    assert f.lafb is True and f.rbbb is False
    assert -90.0 <= f.qrs_axis <= -45.0


def test_extract_features_normal(normal_pre):
    f = extract_features(normal_pre)
    assert f.rbbb is False and f.lafb is False
    assert f.ventricular_rate == pytest.approx(60000.0 / 770.0, abs=2.0)
    assert f.rmssd == pytest.approx(40.0, abs=5.0)
    assert f.hrv_lead == "V5"
    assert f.age == 50.0


def test_extract_features_flat_record():
    rec = EcgRecord("flat", Source.SYNTHETIC, np.zeros((12, 2800)), fs=400)
    with pytest.raises(InsufficientPeaks):
        extract_features(rec)


def test_features_json_roundtrip(normal_pre):
    f = extract_features(normal_pre)
    d = f.to_json_dict()
    assert set(d) == {"rbbb", "lafb", "rmssd_ms", "ventricular_rate_bpm",
                      "qrs_axis_deg", "qrs_duration_ms", "hrv_lead", "age",
                      "sex"}
    back = ClinicalFeatures.from_json_dict(d)
    assert back == f
