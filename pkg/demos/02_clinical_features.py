"""Clinical feature extraction.

Runs the delineator and the conduction-block rules over three engineered
morphologies: a normal tracing, a complete right bundle branch block, and
a left anterior fascicular block.
"""
from cardiorag import (compute_axis, delineate_qrs, detect_r_peaks,
                       extract_features, preprocess)
from cardiorag.synth import lafb_record, normal_record, rbbb_record

for maker in (normal_record, rbbb_record, lafb_record):
    rec = preprocess(maker(age=60.0))
    peaks = detect_r_peaks(rec.lead("II"), rec.fs)
    m = delineate_qrs(rec)
    axis = compute_axis(m)
    f = extract_features(rec)

    print(f"=== {rec.record_id} ===")
    print(f"  beats on lead II: {len(peaks)}")
    v1 = m["V1"]
    print(f"  V1: QRS {v1.qrs_duration:.0f} ms, R {v1.r_amplitude:.2f} mV, "
          f"R' {v1.r_prime_amplitude:.2f} mV, S {v1.s_amplitude:.2f} mV, "
          f"net {v1.net_deflection:+.2f} mV")
    avl = m["aVL"]
    print(f"  aVL: Q duration {avl.q_duration:.0f} ms, "
          f"Q amplitude {avl.q_amplitude:.2f} mV")
    print(f"  axis {axis:+.0f} deg, max limb QRS {f.qrs_duration:.0f} ms")
    print(f"  rate {f.ventricular_rate:.0f} bpm, "
          f"RMSSD {f.rmssd:.1f} ms (lead {f.hrv_lead})")
    print(f"  -> RBBB: {f.rbbb}, LAFB: {f.lafb}")
    print()
