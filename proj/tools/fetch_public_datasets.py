#!/usr/bin/env python3
"""Download the public COMPAS and Adult datasets into data/.

Both files ship inside the MIT-licensed `responsibly` wheel on PyPI, so a
plain `pip download` is enough (no network access beyond the package index).

    python3 tools/fetch_public_datasets.py [--out data]

Writes:
    compas.csv  6172 rows; age, race, sex, priors_count, length_of_stay,
                c_charge_degree, label (two_year_recid)
    adult.csv   32561 rows; the 14 UCI features, label (income >50K)
"""

import argparse
import csv
import datetime as dt
import glob
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

WHEEL = "responsibly==0.1.2"
COMPAS_MEMBER = "responsibly/dataset/compas/compas-scores-two-years.csv"
ADULT_MEMBER = "responsibly/dataset/adult/adult.data"

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country",
]


def fetch_wheel(tmp: Path) -> zipfile.ZipFile:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--quiet", WHEEL, "-d", str(tmp)],
        check=True,
    )
    wheels = glob.glob(str(tmp / "responsibly-*.whl"))
    if not wheels:
        sys.exit("pip download produced no wheel")
    return zipfile.ZipFile(wheels[0])


def stay_days(jail_in: str, jail_out: str) -> str:
    if not jail_in or not jail_out:
        return ""
    fmt = "%Y-%m-%d %H:%M:%S"
    delta = dt.datetime.strptime(jail_out, fmt) - dt.datetime.strptime(jail_in, fmt)
    return str(delta.days)


def write_compas(text: str, path: Path) -> int:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        # ProPublica's filtering of the two-year file.
        if r["days_b_screening_arrest"] == "" or abs(int(r["days_b_screening_arrest"])) > 30:
            continue
        if r["is_recid"] == "-1" or r["c_charge_degree"] == "O" or r["score_text"] == "N/A":
            continue
        rows.append([r["age"], r["race"], r["sex"], r["priors_count"],
                     stay_days(r["c_jail_in"], r["c_jail_out"]), r["c_charge_degree"],
                     r["two_year_recid"]])
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["age", "race", "sex", "priors_count", "length_of_stay", "c_charge_degree", "label"])
        w.writerows(rows)
    return len(rows)


def write_adult(text: str, path: Path) -> int:
    n = 0
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(ADULT_COLUMNS + ["label"])
        for line in text.splitlines():
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(ADULT_COLUMNS) + 1:
                continue
            cells[-1] = "1" if cells[-1].startswith(">50K") else "0"
            w.writerow(cells)
            n += 1
    return n


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        wheel = fetch_wheel(Path(tmp))
        n_compas = write_compas(wheel.read(COMPAS_MEMBER).decode(), args.out / "compas.csv")
        n_adult = write_adult(wheel.read(ADULT_MEMBER).decode(), args.out / "adult.csv")
    print(f"compas.csv: {n_compas} rows")
    print(f"adult.csv: {n_adult} rows")


if __name__ == "__main__":
    main()
