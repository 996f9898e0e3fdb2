"""Generate the synthetic three-firm price/dividend panel in data/panel.csv."""

import csv
import math
import random
from pathlib import Path

SEED = 20240601
QUARTERS = 120
TICKERS = ["AAA", "BBB", "CCC"]
MEANS = [(0.15, 0.06, 0.15), (0.04, 0.03, 0.02), (-0.07, -0.14, -0.05)]
SDS = [(0.047, 0.098, 0.096), (0.052, 0.055, 0.066), (0.054, 0.022, 0.083)]
TRANSITION = [(0.85, 0.10, 0.05), (0.08, 0.84, 0.08), (0.20, 0.20, 0.60)]
YIELD_SD = (0.092, 0.094, 0.133)


def main():
    rng = random.Random(SEED)
    price = [40.0, 25.0, 60.0]
    log_yield = [math.log(0.025), math.log(0.03), math.log(0.02)]
    state = 1
    rows = []
    year, quarter = 1990, 1
    for _ in range(QUARTERS):
        u = rng.random()
        acc = 0.0
        for j, p in enumerate(TRANSITION[state]):
            acc += p
            if u < acc:
                state = j
                break
        row = {"date": f"{year}-Q{quarter}"}
        for i, t in enumerate(TICKERS):
            log_yield[i] = -3.7 + 0.9 * (log_yield[i] + 3.7) + YIELD_SD[i] * rng.gauss(0.0, 1.0)
            k = MEANS[state][i] + SDS[state][i] * rng.gauss(0.0, 1.0)
            d = price[i] * math.exp(log_yield[i])
            price[i] = price[i] * (1.0 + k) - d
            row[f"price_{t}"] = f"{price[i]:.6f}"
            row[f"dividend_{t}"] = f"{d:.6f}"
        rows.append(row)
        quarter += 1
        if quarter > 4:
            year, quarter = year + 1, 1
    # the first row only anchors the previous price
    first = rows[0]
    for t in TICKERS:
        first[f"dividend_{t}"] = "0.000000"
    out = Path(__file__).resolve().parent.parent / "data" / "panel.csv"
    fields = ["date"] + [f"price_{t}" for t in TICKERS] + [f"dividend_{t}" for t in TICKERS]
    with out.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
