#!/usr/bin/env python3
"""Writes fixtures/user_study_ratings.jsonl, a ratings store whose aggregate
matches a target table of (mean, SEM, best count) per method.

For each method a rating histogram over 1..5 is searched so that 240 ratings
have the target sum and their SEM rounds to the target at 3 decimals. Ratings
are then dealt to 240 submissions (5 raters x 48 layers) with a shuffled slot
order per submission.
"""
import argparse
import json
import math
import random
from pathlib import Path

METHODS = ["Original", "Summary", "Highlight", "HS", "AVHS"]
N = 240

# tag -> method -> (mean shown at 3 dp, SEM shown at 3 dp, submissions choosing it as best)
TARGETS = {
    "gpt-3.5-turbo": {
        "Original": ("3.487", "0.075", 34),
        "Summary": ("4.308", "0.048", 78),
        "Highlight": ("4.054", "0.056", 43),
        "HS": ("4.196", "0.058", 49),
        "AVHS": ("3.842", "0.066", 36),
    },
    "gpt-4": {
        "Original": ("4.367", "0.048", 49),
        "Summary": ("4.396", "0.047", 49),
        "Highlight": ("4.271", "0.054", 43),
        "HS": ("4.350", "0.050", 52),
        "AVHS": ("4.312", "0.052", 47),
    },
}


def sem(hist):
    total = sum(v * c for v, c in zip(range(1, 6), hist))
    mean = total / N
    ss = sum(c * (v - mean) ** 2 for v, c in zip(range(1, 6), hist))
    return math.sqrt(ss / (N - 1)) / math.sqrt(N)


def find_histogram(mean_txt, sem_txt):
    sums = [s for s in range(N, 5 * N + 1) if "%.3f" % (s / N) == mean_txt]
    best = None
    for s in sums:
        for c1 in range(N + 1):
            for c2 in range(N + 1 - c1):
                for c3 in range(N + 1 - c1 - c2):
                    # c4 and c5 follow from the count and the sum.
                    rest = N - c1 - c2 - c3
                    partial = c1 + 2 * c2 + 3 * c3
                    c5 = s - partial - 4 * rest
                    c4 = rest - c5
                    if c4 < 0 or c5 < 0:
                        continue
                    h = (c1, c2, c3, c4, c5)
                    if "%.3f" % sem(h) != sem_txt:
                        continue
                    # Prefer unimodal-looking histograms with few extreme low ratings.
                    cost = c1 * 4 + c2
                    if best is None or cost < best[0]:
                        best = (cost, h)
    if best is None:
        raise SystemExit(f"no histogram for mean {mean_txt} sem {sem_txt}")
    return best[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--out", type=Path,
                    default=Path(__file__).resolve().parent.parent / "fixtures" / "user_study_ratings.jsonl")
    args = ap.parse_args()
    rng = random.Random(args.seed)
    lines = []
    for tag, table in TARGETS.items():
        ratings = {}
        for m in METHODS:
            h = find_histogram(table[m][0], table[m][1])
            vals = [v for v, c in zip(range(1, 6), h) for _ in range(c)]
            rng.shuffle(vals)
            ratings[m] = vals
        best = [m for m in METHODS for _ in range(table[m][2])]
        assert len(best) == N
        rng.shuffle(best)
        for i in range(N):
            rater, layer = divmod(i, 48)
            order = METHODS[:]
            rng.shuffle(order)
            lines.append(json.dumps({
                "session_id": f"{tag}-session-{rater + 1}",
                "rater_id": f"rater-{rater + 1}",
                "explainer_tag": tag,
                "layer": layer,
                "neuron": rng.randrange(6400),
                "slot_ratings": [ratings[m][i] for m in order],
                "best_slot": order.index(best[i]),
                "slot_methods": order,
                "submitted_at": "2023-10-01T00:00:00Z",
            }))
    args.out.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
