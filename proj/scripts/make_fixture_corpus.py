#!/usr/bin/env python3
"""Writes the synthetic neuron corpus under fixtures/.

Each neuron has a theme: a handful of trigger words that get high activations
inside otherwise low-activation filler text. Output is deterministic for a
given --seed.
"""
import argparse
import json
import random
from pathlib import Path

THEMES = [
    ("weather and rain", ["rain", "storm", "cloud", "thunder", "drizzle", "wind"]),
    ("numbers written as digits", ["12", "45", "300", "7", "1999", "64"]),
    ("family members", ["mother", "father", "sister", "brother", "aunt", "cousin"]),
    ("cooking verbs", ["bake", "fry", "boil", "stir", "roast", "chop"]),
    ("colors", ["red", "blue", "green", "yellow", "purple", "orange"]),
    ("the end of a quotation", ["\"", "'", "said", "replied", "asked", "shouted"]),
    ("body parts", ["hand", "knee", "shoulder", "elbow", "finger", "ankle"]),
    ("months of the year", ["January", "March", "June", "August", "October", "December"]),
    ("musical instruments", ["piano", "violin", "guitar", "drum", "flute", "cello"]),
    ("words about money", ["price", "cost", "dollar", "budget", "fee", "salary"]),
    ("negation words", ["not", "never", "no", "nothing", "nobody", "neither"]),
    ("animals on a farm", ["cow", "sheep", "goat", "horse", "pig", "chicken"]),
    ("programming terms", ["function", "variable", "loop", "compiler", "array", "pointer"]),
    ("place names in Europe", ["Paris", "Berlin", "Madrid", "Vienna", "Lisbon", "Prague"]),
    ("emotions", ["happy", "angry", "afraid", "proud", "lonely", "calm"]),
    ("units of time", ["minute", "hour", "week", "second", "decade", "year"]),
]

FILLER = (
    "the a of and to in was that it for on with as at by from this they had were be "
    "which one all there when would their some into more other what could about only "
    "people after first also new then over through where much before right too any same "
    "day around long while still both just down might most town road house window letter "
    "morning evening table garden street field paper story plan idea yesterday together "
    "afternoon important remember something neighbours station government building "
    "question children outside everything community although finally carefully"
).split()

PUNCT = [",", ".", ";"]


def sentence(rng, triggers, trigger_rate):
    n = rng.randint(7, 14)
    words = []
    for _ in range(n):
        if rng.random() < trigger_rate:
            words.append(("t", rng.choice(triggers)))
        else:
            words.append(("f", rng.choice(FILLER)))
    words[0] = (words[0][0], words[0][1].capitalize() if words[0][0] == "f" else words[0][1])
    tokens = []
    kinds = []
    for i, (kind, w) in enumerate(words):
        lead = "" if i == 0 else " "
        # Long words become two subword pieces, as a BPE vocabulary would split them.
        if len(w) >= 6 and rng.random() < 0.7:
            cut = rng.randint(2, len(w) - 3)
            tokens += [lead + w[:cut], w[cut:]]
            kinds += [kind, kind]
        else:
            tokens.append(lead + w)
            kinds.append(kind)
        if i + 1 < n and rng.random() < 0.08:
            tokens.append(rng.choice(PUNCT[:2]))
            kinds.append("p")
    tokens.append(".")
    kinds.append("p")
    return tokens, kinds


def excerpt(rng, triggers, scale, trigger_rate, length=64):
    tokens, kinds = [], []
    while len(tokens) < length:
        t, k = sentence(rng, triggers, trigger_rate)
        if tokens:
            t[0] = " " + t[0]
        tokens += t
        kinds += k
    tokens, kinds = tokens[:length], kinds[:length]
    acts = []
    for k in kinds:
        if k == "t":
            acts.append(round(scale * rng.uniform(0.55, 1.0), 3))
        elif rng.random() < 0.25:
            acts.append(round(scale * rng.uniform(0.0, 0.12), 3))
        else:
            acts.append(0.0)
    return {"tokens": tokens, "activations": acts}


def neuron(rng, layer, index, theme):
    name, triggers = theme
    scale = round(rng.uniform(2.0, 9.0), 2)
    top = [excerpt(rng, triggers, scale, 0.12) for _ in range(5)]
    # Random excerpts mostly miss the theme.
    rnd = [excerpt(rng, triggers, scale, 0.02) for _ in range(5)]
    for e in rnd:
        if not any(a > 0 for a in e["activations"]):
            e["activations"][rng.randrange(len(e["activations"]))] = round(scale * 0.05, 3)
    return {
        "layer": layer,
        "neuron": index,
        "top_excerpts": top,
        "random_excerpts": rnd,
        "baseline_explanation": name + ".",
        "baseline_score": round(rng.uniform(0.05, 0.85), 4),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20231001)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "fixtures")
    args = ap.parse_args()
    rng = random.Random(args.seed)
    records = []
    used = set()
    for i in range(50):
        layer = (i * 48) // 50
        idx = rng.randrange(6400)
        while (layer, idx) in used:
            idx = rng.randrange(6400)
        used.add((layer, idx))
        records.append(neuron(rng, layer, idx, THEMES[i % len(THEMES)]))
    args.out.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(r, ensure_ascii=False) for r in records]
    (args.out / "neurons_50.jsonl").write_text("\n".join(lines) + "\n")
    (args.out / "neurons_10.jsonl").write_text("\n".join(lines[:10]) + "\n")


if __name__ == "__main__":
    main()
