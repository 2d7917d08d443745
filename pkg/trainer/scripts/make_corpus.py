"""Generate the 64-record training corpus as internal-format files.

Uses the installed cardiorag package purely as a record producer; the
trainer itself only reads the resulting .cre files.
"""
from pathlib import Path

import numpy as np

from cardiorag.records import Label, preprocess, write_internal
from cardiorag.synth import random_screening_record

OUT = Path(__file__).resolve().parent.parent / "artifacts" / "corpus"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240501)
    for i in range(64):
        label = Label.POSITIVE if i % 2 else Label.NEGATIVE
        rec = preprocess(random_screening_record(rng, f"train{i:03d}", label))
        write_internal(rec, OUT / f"{rec.record_id}.cre")
    print(f"wrote 64 records to {OUT}")


if __name__ == "__main__":
    main()
