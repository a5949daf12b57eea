"""Convert the Veterans, Whas500 and GBSG2 ARFF files shipped in the
scikit-survival wheel into the plain CSVs under ``data/``.

Usage::

    pip download scikit-survival --no-deps -d /tmp/sksurv
    python scripts/fetch_datasets.py /tmp/sksurv/scikit_survival-*.whl

Categorical columns are written as integer codes so the CSV loader only
ever sees numbers; each code follows the order of the ARFF nominal domain.
"""
from __future__ import annotations

import csv
import io
import re
import sys
import zipfile
from pathlib import Path

DATA_DIR = Path(__file__).resolve().parents[1] / "data"

# output name -> (arff member, time column, event column, event "true" value, rename map)
DATASETS = {
    "veterans": ("veteran.arff", "Survival_in_days", "Status", "dead", {}),
    "whas500": ("whas500.arff", "lenfol", "fstat", "1", {}),
    "gbsg2": ("GBSG2.arff", "time", "cens", "1", {}),
}


def parse_arff(text: str) -> tuple[list[tuple[str, list[str] | None]], list[list[str]]]:
    attrs: list[tuple[str, list[str] | None]] = []
    rows: list[list[str]] = []
    in_data = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        if in_data:
            rows.append(next(csv.reader([line], quotechar="'", skipinitialspace=True)))
            continue
        low = line.lower()
        if low.startswith("@attribute"):
            m = re.match(r"@attribute\s+('[^']+'|\S+)\s+(.*)", line, re.IGNORECASE)
            name, kind = m.group(1).strip("'"), m.group(2).strip()
            if kind.startswith("{"):
                domain = [v.strip().strip("'") for v in kind.strip("{}").split(",")]
                attrs.append((name, domain))
            else:
                attrs.append((name, None))
        elif low.startswith("@data"):
            in_data = True
    return attrs, rows


def convert(wheel: Path) -> None:
    DATA_DIR.mkdir(exist_ok=True)
    with zipfile.ZipFile(wheel) as zf:
        for out, (member, tcol, ecol, event_val, _) in DATASETS.items():
            text = zf.read(f"sksurv/datasets/data/{member}").decode("utf-8")
            attrs, rows = parse_arff(text)
            names = [a for a, _ in attrs]
            feats = [i for i, a in enumerate(names) if a not in (tcol, ecol)]
            ti, ei = names.index(tcol), names.index(ecol)
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["time", "event"] + [names[i] for i in feats])
            for r in rows:
                vals = []
                for i in feats:
                    dom = attrs[i][1]
                    v = r[i].strip("'")
                    if v in ("?", ""):
                        vals.append("")
                    elif dom is not None and not _is_number(v):
                        vals.append(str(dom.index(v)))
                    else:
                        vals.append(v)
                ev = "1" if r[ei].strip("'") == event_val else "0"
                w.writerow([r[ti], ev] + vals)
            (DATA_DIR / f"{out}.csv").write_text(buf.getvalue(), encoding="utf-8")
            print(f"{out}: {len(rows)} rows, {len(feats)} features")


def _is_number(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


if __name__ == "__main__":
    convert(Path(sys.argv[1]))
