#!/usr/bin/env python3
"""Writes fixtures/rank_summary_scores.jsonl: per-column method means for the
seven evaluation columns of the rank summary, each column encoded as two
score reports per method whose mean is the column value."""
import json
from pathlib import Path

METHODS = ["Original", "Summary", "Highlight", "HS", "AVHS"]
# (subset, metric, values in METHODS order)
COLUMNS = [
    ("gpt-3.5", "SimulationCorrelation", [0.1718, 0.2123, 0.1893, 0.2065, 0.1974]),
    ("gpt-3.5", "AdaCS", [0.8469, 0.8798, 0.8727, 0.8799, 0.8719]),
    ("gpt-3.5-puzzles", "AdaCS", [0.8418, 0.8495, 0.8414, 0.8514, 0.8490]),
    ("gpt-3.5", "HumanRating", [3.487, 4.308, 4.054, 4.196, 3.842]),
    ("gpt-4", "SimulationCorrelation", [0.1745, 0.1742, 0.1737, 0.1681, 0.1715]),
    ("gpt-4-puzzles", "AdaCS", [0.8560, 0.8657, 0.8601, 0.8636, 0.8640]),
    ("gpt-4", "HumanRating", [4.367, 4.396, 4.271, 4.350, 4.312]),
]

out = Path(__file__).resolve().parent.parent / "fixtures" / "rank_summary_scores.jsonl"
lines = []
for subset, metric, values in COLUMNS:
    delta = 0.25 if metric == "HumanRating" else 0.0625
    for m, v in zip(METHODS, values):
        for i, d in enumerate((-delta, delta)):
            lines.append(json.dumps({"layer": i, "neuron": 0, "subset": subset, "method": m, "metric": metric,
                                     "value": round(v + d, 6), "stderr": None, "detail": {}}))
out.write_text("\n".join(lines) + "\n")
