#!/usr/bin/env python3
# Copyright 2026 The trajlab Authors
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the bundled fixture corpora under data/corpus/.

Output is fully determined by the seed; rerunning produces identical files.
"""
import argparse
import pathlib
import random

DET_SG = ["the", "a", "this", "that", "every"]
DET_PL = ["the", "some", "these", "those", "many"]
ADJ = ["small", "old", "red", "quiet", "happy", "tall", "young", "bright", "lazy", "clever",
       "green", "heavy", "strange", "gentle", "famous"]
NOUN = [("dog", "dogs"), ("cat", "cats"), ("child", "children"), ("teacher", "teachers"),
        ("farmer", "farmers"), ("bird", "birds"), ("doctor", "doctors"), ("king", "kings"),
        ("sailor", "sailors"), ("writer", "writers"), ("horse", "horses"), ("baker", "bakers")]
OBJ = ["ball", "house", "river", "garden", "letter", "bridge", "window", "road", "song",
       "story", "tree", "boat", "market", "village", "book", "door"]
VERB_T = [("sees", "see", "saw"), ("likes", "like", "liked"), ("finds", "find", "found"),
          ("paints", "paint", "painted"), ("builds", "build", "built"), ("reads", "read", "read"),
          ("watches", "watch", "watched"), ("follows", "follow", "followed")]
VERB_I = [("sleeps", "sleep", "slept"), ("sings", "sing", "sang"), ("runs", "run", "ran"),
          ("waits", "wait", "waited"), ("laughs", "laugh", "laughed"), ("works", "work", "worked")]
PREP = ["near", "behind", "under", "across", "beside", "inside"]
ADV = ["slowly", "quickly", "often", "again", "quietly", "happily"]
TIME = ["in the morning", "at night", "after the rain", "before dinner", "every day",
        "on sunday", "during the storm"]
CONJ = ["and then", "because", "while", "but"]


def noun_phrase(rng, plural=None):
    if plural is None:
        plural = rng.random() < 0.4
    det = rng.choice(DET_PL if plural else DET_SG)
    noun = rng.choice(NOUN)[1 if plural else 0]
    words = [det]
    if rng.random() < 0.5:
        words.append(rng.choice(ADJ))
    words.append(noun)
    return words, plural


def object_phrase(rng):
    words = [rng.choice(["the", "a", "her", "his", "our"])]
    if rng.random() < 0.4:
        words.append(rng.choice(ADJ))
    words.append(rng.choice(OBJ))
    return words


def clause(rng):
    subj, plural = noun_phrase(rng)
    tense = rng.random()
    if rng.random() < 0.6:
        verb = rng.choice(VERB_T)
        form = verb[2] if tense < 0.3 else verb[1 if plural else 0]
        words = subj + [form] + object_phrase(rng)
    else:
        verb = rng.choice(VERB_I)
        form = verb[2] if tense < 0.3 else verb[1 if plural else 0]
        words = subj + [form]
        if rng.random() < 0.5:
            words.append(rng.choice(ADV))
    if rng.random() < 0.4:
        words += [rng.choice(PREP)] + object_phrase(rng)
    return words


def sentence(rng):
    words = clause(rng)
    if rng.random() < 0.3:
        words += rng.choice(CONJ).split() + clause(rng)
    if rng.random() < 0.3:
        words += rng.choice(TIME).split()
    return words + ["."]


def document(rng):
    words = []
    for _ in range(rng.randint(1, 3)):
        words += sentence(rng)
    return " ".join(words)


def roundtrip_line(rng, i):
    # Mixed whitespace, punctuation and multi-byte UTF-8 for byte-level round trips.
    extras = ["  ", "\t", "café", "naïve", "über", "日本", "—", "!?", "(x)"]
    parts = [" ".join(sentence(rng))]
    for _ in range(rng.randint(0, 3)):
        parts.append(rng.choice(extras))
    return f"{i:05d} " + " ".join(parts)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "corpus"))
    ap.add_argument("--seed", type=int, default=20260101)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)
    (out / "train.txt").write_text("\n".join(document(rng) for _ in range(2000)) + "\n")
    (out / "valid.txt").write_text("\n".join(document(rng) for _ in range(200)) + "\n")
    (out / "roundtrip_10k.txt").write_text(
        "\n".join(roundtrip_line(rng, i) for i in range(10000)) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
