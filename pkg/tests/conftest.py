import csv
import os
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parents[1]


def heart_dataset_path():
    """Location of the published heart-attack CSV, if present.

    Set HEART_CSV or drop the file at data/Medicaldataset.csv.
    """
    candidates = [os.environ.get("HEART_CSV"), REPO / "data" / "Medicaldataset.csv"]
    for c in candidates:
        if c and Path(c).is_file():
            return Path(c)
    return None


def write_heart_like_csv(path, n=120, seed=0):
    """Small table in the published column layout with textual categories.

    Labels follow a troponin/CK-MB rule so the classes are learnable.
    """
    rng = np.random.default_rng(seed)
    tro = np.exp(rng.normal(-3.0, 1.5, n))
    ck = np.exp(rng.normal(1.0, 0.8, n))
    y = ((tro > 0.05) | (ck > 8.0)).astype(int)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Age", "Gender", "Heart rate", "Systolic blood pressure",
                    "Diastolic blood pressure", "Blood sugar", "CK-MB", "Troponin", "Result"])
        for i in range(n):
            w.writerow([int(rng.integers(25, 90)), ["female", "male"][rng.integers(0, 2)],
                        int(rng.integers(50, 120)), int(rng.integers(90, 180)),
                        int(rng.integers(50, 100)), int(rng.integers(70, 300)),
                        round(float(ck[i]), 3), round(float(tro[i]), 4),
                        ["negative", "positive"][y[i]]])
    return Path(path)


@pytest.fixture
def heart_like_csv(tmp_path):
    return write_heart_like_csv(tmp_path / "heart.csv")


def write_config(path, **sections):
    lines = []
    for section, entries in sections.items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {v}" for k, v in entries.items()]
        lines.append("")
    Path(path).write_text("\n".join(lines))
    return Path(path)


_ACCEPTANCE = []


def record(criterion, name, passed, detail=""):
    _ACCEPTANCE.append((criterion, name, "PASS" if passed else "FAIL", detail))


def record_skip(criterion, name, reason):
    _ACCEPTANCE.append((criterion, name, "SKIP", reason))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, name, status, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"[{status}] {criterion:>2}. {name}: {detail}")
