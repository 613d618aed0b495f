#!/usr/bin/env python3
"""Convert the UCI Adult, UCI German credit and ProPublica COMPAS raw files
into the header-row CSVs under data/.

The raw files ship inside the `responsibly` wheel on PyPI:

    pip download --no-deps responsibly==0.1.2 -d /tmp/wheel
    python3 scripts/prepare_datasets.py /tmp/wheel/responsibly-0.1.2-py3-none-any.whl

Missing values ("?" in Adult) are written as empty cells; the loader drops
those rows and reports the count.
"""
import csv
import io
import sys
import zipfile
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data"

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]

GERMAN_COLUMNS = [
    "checking_status", "duration", "credit_history", "purpose", "credit_amount",
    "savings", "employment", "installment_rate", "personal_status", "other_debtors",
    "residence_since", "property", "age", "other_installment_plans", "housing",
    "existing_credits", "job", "num_dependents", "telephone", "foreign_worker", "credit",
]

COMPAS_COLUMNS = [
    "sex", "age", "age_cat", "race", "juv_fel_count", "juv_misd_count",
    "juv_other_count", "priors_count", "c_charge_degree", "two_year_recid",
]


def read(zf, name):
    return zf.read(f"responsibly/dataset/{name}").decode("utf-8")


def adult(zf):
    rows = []
    for name in ("adult/adult.data", "adult/adult.test"):
        for line in read(zf, name).splitlines():
            if not line.strip() or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            cells[-1] = cells[-1].rstrip(".")
            rows.append(["" if c == "?" else c for c in cells])
    write("adult.csv", ADULT_COLUMNS, rows)


def german(zf):
    female = {"A92", "A95"}
    rows = []
    for line in read(zf, "german/german.data").splitlines():
        cells = line.split()
        if not cells:
            continue
        cells[8] = "female" if cells[8] in female else "male"
        cells[-1] = "good" if cells[-1] == "1" else "bad"
        rows.append(cells)
    header = list(GERMAN_COLUMNS)
    header[8] = "sex"
    write("german.csv", header, rows)


def compas(zf):
    reader = csv.DictReader(io.StringIO(read(zf, "compas/compas-scores-two-years.csv")))
    rows = [[r[c] for c in COMPAS_COLUMNS] for r in reader]
    write("compas.csv", COMPAS_COLUMNS, rows)


def write(name, header, rows):
    with open(OUT / name, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"{name}: {len(rows)} rows")


def main():
    with zipfile.ZipFile(sys.argv[1]) as zf:
        adult(zf)
        german(zf)
        compas(zf)


if __name__ == "__main__":
    main()
