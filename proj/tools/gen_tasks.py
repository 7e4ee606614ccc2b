#!/usr/bin/env python3
# Copyright 2026 The trajlab Authors
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the multiple-choice task fixtures under data/tasks/.

Stems and options reuse the fixture grammar's vocabulary so every option is
scoreable by the bundled backends.
"""
import argparse
import json
import pathlib
import random

from gen_fixtures import ADJ, ADV, DET_PL, DET_SG, NOUN, OBJ, PREP, VERB_I, VERB_T

TIME_TAIL = {"morning": "in the", "night": "at", "rain": "after the", "dinner": "before",
             "sunday": "on", "storm": "during the", "day": "every"}


def agreement(rng):
    plural = rng.random() < 0.5
    det = rng.choice(DET_PL if plural else DET_SG)
    noun = rng.choice(NOUN)[1 if plural else 0]
    verb = rng.choice(VERB_I)
    good, bad = (verb[1], verb[0]) if plural else (verb[0], verb[1])
    adv = rng.choice(ADV)
    options = [f"{good} {adv} .", f"{bad} {adv} ."]
    rng.shuffle(options)
    return {"stem": f"{det} {rng.choice(ADJ)} {noun}", "options": options,
            "correct": options.index(f"{good} {adv} .")}


def noun_number(rng):
    det = rng.choice(["many", "these", "those", "some"])
    nouns = rng.sample(NOUN, 2)
    good = nouns[0][1]
    options = [good, nouns[0][0], nouns[1][0], rng.choice(ADV)]
    rng.shuffle(options)
    return {"stem": f"{det}", "options": options, "correct": options.index(good)}


def verb_object(rng):
    noun = rng.choice(NOUN)[0]
    verb = rng.choice(VERB_T)[0]
    good = rng.choice(OBJ)
    options = [good, rng.choice(ADV), rng.choice(PREP), rng.choice(VERB_I)[0]]
    rng.shuffle(options)
    return {"stem": f"the {noun} {verb} the", "options": options, "correct": options.index(good)}


def time_phrase(rng):
    word = rng.choice(sorted(TIME_TAIL))
    head = TIME_TAIL[word]
    wrong = [w for w in sorted(TIME_TAIL) if TIME_TAIL[w] != head]
    options = [word] + rng.sample(wrong, 3)
    rng.shuffle(options)
    noun = rng.choice(NOUN)[0]
    verb = rng.choice(VERB_I)[0]
    return {"stem": f"the {noun} {verb} {head}", "options": options, "correct": options.index(word)}


TASKS = {
    "subject_verb_agreement": agreement,
    "plural_after_determiner": noun_number,
    "object_after_verb": verb_object,
    "time_phrase_completion": time_phrase,
}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "tasks"))
    parser.add_argument("--seed", type=int, default=20260102)
    parser.add_argument("--instances", type=int, default=40)
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for offset, (name, make) in enumerate(TASKS.items()):
        rng = random.Random(args.seed + offset)
        instances, seen = [], set()
        while len(instances) < args.instances:
            inst = make(rng)
            key = (inst["stem"], tuple(inst["options"]))
            if key in seen or len(set(inst["options"])) != len(inst["options"]):
                continue
            seen.add(key)
            instances.append(inst)
        with open(out / f"{name}.json", "w", encoding="utf-8") as f:
            json.dump({"name": name, "instances": instances}, f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main()
