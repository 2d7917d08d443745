"""ECG record loading, preprocessing and the internal binary format.

Supported inputs:

* WFDB subset: text ``.hea`` header plus a single ``.dat`` signal file in
  storage format 16 (interleaved little-endian int16) or 212 (packed 12-bit
  pairs). Twelve signals with recognized lead names are required; samples
  are converted to millivolts with the per-signal gain/baseline.
* CSV: 12 header-named columns, one row per sample. The sampling rate comes
  from an ``fs=`` argument or a ``<record>.meta.json`` sidecar (keys ``fs``
  and optionally ``age``, ``sex``, ``label``, ``record_id``).
* Internal format "CRE1": self-describing little-endian binary with float32
  samples, designed so write -> load round-trips bit-exactly.

Preprocessing standardizes any valid record to 12 x 2800 float32 samples at
400 Hz: linear-interpolation resample, crop to the first 7 s, zero-phase
high-pass (0.5 Hz) plus powerline notch (50 Hz), then zero padding at the
tail. Padding runs last so a padded tail stays exactly zero and a DC input
leaves no filter transient at the pad boundary.
"""
from __future__ import annotations

import csv
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.signal import freqz, iirnotch

from .errors import (
    BadMagic,
    CorruptFile,
    EmptySignal,
    IoFailure,
    MissingLeads,
    TruncatedFile,
    UnsupportedFormat,
)

LEAD_NAMES = ["I", "II", "III", "aVR", "aVL", "aVF",
              "V1", "V2", "V3", "V4", "V5", "V6"]
_LEAD_INDEX = {name.lower(): i for i, name in enumerate(LEAD_NAMES)}

TARGET_FS = 400
TARGET_SECONDS = 7.0
TARGET_SAMPLES = int(TARGET_FS * TARGET_SECONDS)  # 2800


class Source(Enum):
    SAMITROP = 0
    PTBXL = 1
    CODE15 = 2
    SYNTHETIC = 3
    OTHER = 4


class Sex(Enum):
    M = 0
    F = 1
    UNKNOWN = 2


class Label(Enum):
    POSITIVE = 0
    NEGATIVE = 1
    UNLABELED = 2


class RecordFormat(Enum):
    WFDB = "wfdb"
    CSV = "csv"
    INTERNAL = "internal"


@dataclass
class EcgRecord:
    """A 12-lead ECG in millivolts with demographics.

    ``signals`` is a (12, S) float32 matrix in the canonical lead order
    I, II, III, aVR, aVL, aVF, V1..V6.
    """

    record_id: str
    source: Source
    signals: np.ndarray
    fs: float
    age: float | None = None
    sex: Sex = Sex.UNKNOWN
    label: Label = Label.UNLABELED

    def __post_init__(self):
        sig = np.asarray(self.signals, dtype=np.float32)
        if sig.ndim != 2 or sig.shape[0] != 12:
            raise MissingLeads(f"expected a 12xS signal matrix, got {sig.shape}")
        if sig.shape[1] < 1:
            raise EmptySignal(f"record {self.record_id!r} has no samples")
        if not np.all(np.isfinite(sig)):
            raise CorruptFile(f"record {self.record_id!r} has non-finite samples")
        if not self.fs > 0:
            raise CorruptFile(f"record {self.record_id!r} has fs={self.fs}")
        self.signals = sig

    @property
    def n_samples(self) -> int:
        return self.signals.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def lead(self, name: str) -> np.ndarray:
        return self.signals[_LEAD_INDEX[name.lower()]]

    def is_preprocessed(self) -> bool:
        return self.fs == TARGET_FS and self.n_samples == TARGET_SAMPLES


@dataclass(frozen=True)
class FilterSettings:
    """Cleaning parameters, defaults mirror common ECG toolbox behavior."""

    highpass_hz: float = 0.5
    highpass_order: int = 5
    notch_hz: float = 50.0
    notch_q: float = 30.0


DEFAULT_FILTERS = FilterSettings()


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------

def resample_linear(signals: np.ndarray, fs_in: float, fs_out: float) -> np.ndarray:
    """Per-lead linear interpolation onto a uniform fs_out grid.

    Sample values at timestamps shared by both grids are preserved exactly:
    np.interp returns the original knot value when a query time coincides
    with a source time.
    """
    if fs_in == fs_out:
        return signals.astype(np.float32)
    n_in = signals.shape[1]
    t_in = np.arange(n_in) / float(fs_in)
    n_out = int(math.floor((n_in - 1) * fs_out / fs_in)) + 1
    t_out = np.arange(n_out) / float(fs_out)
    out = np.empty((signals.shape[0], n_out), dtype=np.float32)
    for ch in range(signals.shape[0]):
        out[ch] = np.interp(t_out, t_in, signals[ch].astype(np.float64))
    return out


def _cleaning_mask(n: int, fs: float, settings: FilterSettings) -> np.ndarray:
    """Zero-phase gain of the cleaning chain on the length-n rfft grid.

    Forward-backward filtering applies the squared magnitude of each
    filter with zero phase; evaluating that response spectrally avoids the
    second-long startup transients a 0.5 Hz IIR exhibits in the time
    domain (its slowest poles do not settle within a 7 s record).
    """
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    order2 = 2 * settings.highpass_order
    mask = np.zeros_like(freqs)
    nz = freqs > 0
    ratio = (settings.highpass_hz / freqs[nz]) ** order2
    mask[nz] = 1.0 / (1.0 + ratio)
    if settings.notch_hz < fs / 2:
        b, a = iirnotch(settings.notch_hz, settings.notch_q, fs=fs)
        _, h = freqz(b, a, worN=freqs, fs=fs)
        mask *= np.abs(h) ** 2
    return mask


def _clean_lead(x: np.ndarray, fs: float, settings: FilterSettings) -> np.ndarray:
    mask = _cleaning_mask(x.size, fs, settings)
    return np.fft.irfft(np.fft.rfft(x.astype(np.float64)) * mask, n=x.size)


def preprocess(rec: EcgRecord, settings: FilterSettings = DEFAULT_FILTERS) -> EcgRecord:
    """Standardize a record to 12 x 2800 samples at 400 Hz.

    Steps: resample to 400 Hz (linear), keep the first 7 s when longer,
    high-pass 0.5 Hz + 50 Hz notch (both zero-phase), zero-pad the tail
    when shorter than 7 s.
    """
    if rec.n_samples == 0:
        raise EmptySignal(f"record {rec.record_id!r} is empty")

    sig = resample_linear(rec.signals, rec.fs, TARGET_FS)
    if sig.shape[1] > TARGET_SAMPLES:
        sig = sig[:, :TARGET_SAMPLES]

    cleaned = np.empty_like(sig, dtype=np.float64)
    for ch in range(12):
        cleaned[ch] = _clean_lead(sig[ch], TARGET_FS, settings)

    if cleaned.shape[1] < TARGET_SAMPLES:
        pad = TARGET_SAMPLES - cleaned.shape[1]
        cleaned = np.pad(cleaned, ((0, 0), (0, pad)))

    return replace(rec, signals=cleaned.astype(np.float32), fs=float(TARGET_FS))


# ---------------------------------------------------------------------------
# WFDB subset
# ---------------------------------------------------------------------------

@dataclass
class _WfdbSignalSpec:
    filename: str
    fmt: str
    gain: float
    baseline: int
    lead: str


def _parse_wfdb_header(hea_path: Path) -> tuple[str, float, int, list[_WfdbSignalSpec]]:
    try:
        lines = [ln.strip() for ln in hea_path.read_text().splitlines()]
    except OSError as exc:
        raise IoFailure(f"cannot read header {hea_path}: {exc}") from exc
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise CorruptFile(f"{hea_path}: empty header")

    head = lines[0].split()
    if len(head) < 4:
        raise CorruptFile(f"{hea_path}: record line needs name, n_sig, fs, n_samples")
    record_name = head[0].split("/")[0]
    try:
        n_sig = int(head[1])
        fs = float(head[2])
        n_samples = int(head[3])
    except ValueError as exc:
        raise CorruptFile(f"{hea_path}: bad record line {lines[0]!r}") from exc

    specs = []
    for ln in lines[1 : 1 + n_sig]:
        tok = ln.split()
        if len(tok) < 3:
            raise CorruptFile(f"{hea_path}: bad signal line {ln!r}")
        filename = tok[0]
        fmt = tok[1].split("x")[0].split(":")[0].split("+")[0]

        gain_field = tok[2]
        if "/" in gain_field:
            gain_field = gain_field.split("/")[0]
        baseline = None
        if "(" in gain_field:
            gain_str, base_str = gain_field.split("(")
            baseline = int(base_str.rstrip(")"))
        else:
            gain_str = gain_field
        gain = float(gain_str) if gain_str else 200.0
        if gain == 0:
            gain = 200.0
        if baseline is None:
            # baseline defaults to adc_zero (5th token) when not given inline
            baseline = int(tok[4]) if len(tok) > 4 else 0

        lead = tok[8] if len(tok) > 8 else ""
        specs.append(_WfdbSignalSpec(filename, fmt, gain, baseline, lead))

    if len(specs) != n_sig:
        raise CorruptFile(f"{hea_path}: header declares {n_sig} signals, "
                          f"found {len(specs)} signal lines")
    return record_name, fs, n_samples, specs


def _read_dat_16(path: Path, n_sig: int, n_samples: int) -> np.ndarray:
    raw = path.read_bytes()
    expected = 2 * n_sig * n_samples
    if len(raw) < expected:
        raise CorruptFile(f"{path}: {len(raw)} bytes, header implies {expected}")
    data = np.frombuffer(raw[:expected], dtype="<i2")
    return data.reshape(n_samples, n_sig).T.astype(np.int32)


def _read_dat_212(path: Path, n_sig: int, n_samples: int) -> np.ndarray:
    total = n_sig * n_samples
    expected = (total * 3 + 1) // 2
    raw = path.read_bytes()
    if len(raw) < expected:
        raise CorruptFile(f"{path}: {len(raw)} bytes, header implies {expected}")
    b = np.frombuffer(raw[: ((total + 1) // 2) * 3], dtype=np.uint8).astype(np.int32)
    if b.size % 3:
        b = np.concatenate([b, np.zeros(3 - b.size % 3, dtype=np.int32)])
    trip = b.reshape(-1, 3)
    # byte triplet holds two 12-bit samples: low byte 0 + low nibble of byte 1,
    # then low byte 2 + high nibble of byte 1
    s0 = trip[:, 0] + ((trip[:, 1] & 0x0F) << 8)
    s1 = trip[:, 2] + ((trip[:, 1] & 0xF0) << 4)
    s0 = np.where(s0 > 2047, s0 - 4096, s0)
    s1 = np.where(s1 > 2047, s1 - 4096, s1)
    flat = np.empty(trip.shape[0] * 2, dtype=np.int32)
    flat[0::2] = s0
    flat[1::2] = s1
    return flat[:total].reshape(n_samples, n_sig).T


def _load_wfdb(path: Path) -> EcgRecord:
    hea = path if path.suffix == ".hea" else path.with_suffix(".hea")
    if not hea.exists():
        raise IoFailure(f"header not found: {hea}")
    record_name, fs, n_samples, specs = _parse_wfdb_header(hea)

    if len(specs) != 12:
        raise MissingLeads(f"{hea}: {len(specs)} signals declared, need 12")
    order = []
    for sp in specs:
        idx = _LEAD_INDEX.get(sp.lead.lower())
        if idx is None:
            raise MissingLeads(f"{hea}: unrecognized lead name {sp.lead!r}")
        order.append(idx)
    if sorted(order) != list(range(12)):
        raise MissingLeads(f"{hea}: duplicate or missing lead names")

    fmts = {sp.fmt for sp in specs}
    if not fmts <= {"16", "212"}:
        raise UnsupportedFormat(f"{hea}: storage formats {sorted(fmts)} "
                                "(supported: 16, 212)")
    datfiles = {sp.filename for sp in specs}
    if len(datfiles) != 1 or len(fmts) != 1:
        raise UnsupportedFormat(f"{hea}: multi-file or mixed-format records "
                                "are not supported")

    dat = hea.parent / specs[0].filename
    if not dat.exists():
        raise IoFailure(f"signal file not found: {dat}")
    fmt = specs[0].fmt
    if fmt == "16":
        digital = _read_dat_16(dat, 12, n_samples)
    else:
        digital = _read_dat_212(dat, 12, n_samples)

    physical = np.empty((12, n_samples), dtype=np.float32)
    for row, sp in enumerate(specs):
        physical[order[row]] = (digital[row] - sp.baseline) / sp.gain

    return EcgRecord(record_id=record_name, source=Source.OTHER,
                     signals=physical, fs=fs)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _load_csv(path: Path, fs: float | None) -> EcgRecord:
    meta: dict = {}
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    if sidecar.exists():
        try:
            meta = json.loads(sidecar.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptFile(f"bad sidecar {sidecar}: {exc}") from exc
    if fs is None:
        fs = meta.get("fs")
    if fs is None:
        raise UnsupportedFormat(
            f"{path}: sampling rate unknown; pass fs= or add a "
            f"{sidecar.name} sidecar with an 'fs' key")

    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise EmptySignal(f"{path}: empty file")
            rows = [row for row in reader if row]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(header) != 12:
        raise MissingLeads(f"{path}: {len(header)} columns, need 12")
    order = []
    for name in header:
        idx = _LEAD_INDEX.get(name.strip().lower())
        if idx is None:
            raise MissingLeads(f"{path}: unrecognized lead column {name!r}")
        order.append(idx)
    if sorted(order) != list(range(12)):
        raise MissingLeads(f"{path}: duplicate or missing lead columns")
    if not rows:
        raise EmptySignal(f"{path}: no sample rows")

    try:
        arr = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise CorruptFile(f"{path}: non-numeric sample") from exc
    if arr.shape[1] != 12:
        raise CorruptFile(f"{path}: ragged rows")

    signals = np.empty((12, arr.shape[0]), dtype=np.float32)
    for col, idx in enumerate(order):
        signals[idx] = arr[:, col]

    return EcgRecord(
        record_id=str(meta.get("record_id", path.stem)),
        source=Source.OTHER,
        signals=signals,
        fs=float(fs),
        age=float(meta["age"]) if meta.get("age") is not None else None,
        sex=Sex[meta["sex"]] if meta.get("sex") in Sex.__members__ else Sex.UNKNOWN,
        label=Label[meta["label"]] if meta.get("label") in Label.__members__
        else Label.UNLABELED,
    )


# ---------------------------------------------------------------------------
# internal CRE1 format
# ---------------------------------------------------------------------------

_CRE_MAGIC = b"CRE1"
_CRE_VERSION = 1


def write_internal(rec: EcgRecord, path: str | os.PathLike) -> None:
    """Serialize a record; loads back bit-exactly (float32 samples)."""
    path = Path(path)
    if rec.fs != int(rec.fs):
        raise IoFailure(f"internal format stores integer fs, got {rec.fs}")
    rid = rec.record_id.encode("utf-8")
    if len(rid) > 0xFFFF:
        raise IoFailure("record_id longer than 65535 bytes")
    age = float("nan") if rec.age is None else float(rec.age)
    header = b"".join([
        _CRE_MAGIC,
        struct.pack("<H", _CRE_VERSION),
        struct.pack("<H", len(rid)), rid,
        struct.pack("<B", rec.source.value),
        struct.pack("<H", int(rec.fs)),
        struct.pack("<I", rec.n_samples),
        struct.pack("<B", rec.sex.value),
        struct.pack("<f", age),
        struct.pack("<B", rec.label.value),
    ])
    body = np.ascontiguousarray(rec.signals, dtype="<f4").tobytes()
    try:
        write_atomic(path, header + body)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _load_internal(path: Path) -> EcgRecord:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    view = memoryview(raw)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise TruncatedFile(f"{path}: ended at byte {len(view)}, "
                                f"needed {pos + n}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != _CRE_MAGIC:
        raise BadMagic(f"{path}: not an internal record file")
    (version,) = struct.unpack("<H", take(2))
    if version != _CRE_VERSION:
        raise UnsupportedFormat(f"{path}: version {version}")
    (rid_len,) = struct.unpack("<H", take(2))
    record_id = bytes(take(rid_len)).decode("utf-8")
    (source_v,) = struct.unpack("<B", take(1))
    (fs,) = struct.unpack("<H", take(2))
    (n_samples,) = struct.unpack("<I", take(4))
    (sex_v,) = struct.unpack("<B", take(1))
    (age,) = struct.unpack("<f", take(4))
    (label_v,) = struct.unpack("<B", take(1))

    n_floats = 12 * n_samples
    body = take(4 * n_floats)
    signals = np.frombuffer(body, dtype="<f4").reshape(12, n_samples).copy()

    return EcgRecord(
        record_id=record_id,
        source=Source(source_v),
        signals=signals,
        fs=float(fs),
        age=None if math.isnan(age) else age,
        sex=Sex(sex_v),
        label=Label(label_v),
    )


# ---------------------------------------------------------------------------
# entry point + helpers
# ---------------------------------------------------------------------------

def load_record(path: str | os.PathLike, fmt: RecordFormat | str,
                fs: float | None = None) -> EcgRecord:
    """Load one record in any supported format, in canonical lead order."""
    fmt = RecordFormat(fmt) if not isinstance(fmt, RecordFormat) else fmt
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"no such file: {path}")
    if fmt is RecordFormat.WFDB:
        return _load_wfdb(path)
    if fmt is RecordFormat.CSV:
        return _load_csv(path, fs)
    return _load_internal(path)


def write_atomic(path: str | os.PathLike, data: bytes | str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
