#!/usr/bin/env python3
"""Regenerates the bundled desk-scale sentiment corpus.

Output is deterministic. Run from any directory:
    python3 data/sentiment/make_corpus.py
"""
import pathlib
import random

OUT = pathlib.Path(__file__).resolve().parent

GENERIC = {
    1: ["great", "good", "excellent", "love", "wonderful", "happy", "recommend", "nice"],
    0: ["bad", "terrible", "awful", "poor", "disappointing", "hate", "waste", "worse"],
}

SOURCE = {
    "filler": ["movie", "film", "scene", "actor", "director", "story", "watched", "cinema",
               "character", "sequel", "screen", "cast", "minutes", "theater", "the", "a", "was"],
    1: ["brilliant acting", "funny", "gripping plot", "beautiful soundtrack", "stunning visuals"],
    0: ["dull script", "predictable ending", "wooden acting", "fell asleep", "too long"],
}

TOPICS = {
    "electronics": {
        "filler": ["phone", "charger", "cable", "device", "screen", "bought", "usb", "speaker",
                   "headphones", "box", "the", "a", "it", "was", "after", "week"],
        1: ["battery lasts", "works perfectly", "fast charging", "crisp sound", "easy setup"],
        0: ["stopped working", "battery died", "overheats", "returned it", "no signal"],
    },
    "jewelry": {
        "filler": ["ring", "necklace", "watch", "bracelet", "gold", "silver", "gift", "chain",
                   "clasp", "wife", "the", "a", "it", "was", "wore", "box"],
        1: ["it is the best", "sparkles", "fits nicely", "elegant design", "looks expensive"],
        0: ["turned green", "clasp broke", "tarnished", "cheap looking", "stone fell out"],
    },
    "kitchen": {
        "filler": ["pan", "knife", "blender", "pot", "lid", "kitchen", "cook", "dinner",
                   "handle", "dishwasher", "the", "a", "it", "was", "used", "daily"],
        1: ["heats evenly", "stays sharp", "easy to clean", "sturdy handle", "nonstick works"],
        0: ["started rusting", "handle melted", "leaks everywhere", "coating peeled", "dull blade"],
    },
}


def make_doc(rng, label, domain, generic_rate, off_rate):
    words = [rng.choice(domain["filler"]) for _ in range(rng.randint(8, 14))]
    for _ in range(rng.randint(1, 2)):
        words.insert(rng.randrange(len(words) + 1), rng.choice(domain[label]))
    if rng.random() < off_rate:
        words.insert(rng.randrange(len(words) + 1), rng.choice(domain[1 - label]))
    if rng.random() < generic_rate:
        words.insert(rng.randrange(len(words) + 1), rng.choice(GENERIC[label]))
    if rng.random() < 0.15:
        words.insert(rng.randrange(len(words) + 1), rng.choice(GENERIC[1 - label]))
    return " ".join(words)


def make_split(rng, n, domain, generic_rate, off_rate):
    labels = [i % 2 for i in range(n)]
    rng.shuffle(labels)
    return [(y, make_doc(rng, y, domain, generic_rate, off_rate)) for y in labels]


def write_tsv(path, rows, header):
    with open(path, "w") as f:
        f.write(f"# {header}\n")
        for y, text in rows:
            f.write(f"{y}\t{text}\n")


def write_rules(path, topic, rows, domain):
    # Sample ids are 1-based line numbers, counting the header comment.
    lines = []
    n = 0
    for label in (1, 0):
        verdict = "positive" if label == 1 else "negative"
        for phrase in domain[label]:
            anchor = next(i for i, (y, t) in enumerate(rows) if y == label and phrase in t)
            if phrase == "it is the best":
                text = f'matches("(it\'s|it is) the best") => {verdict}'
            else:
                text = f'contains("{phrase}") => {verdict}'
            lines.append(f"{topic}-{n}\tsimulated\t{anchor + 2}\t{text}")
            n += 1
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def main():
    rng = random.Random(20240611)
    write_tsv(OUT / "source_movies.tsv", make_split(rng, 400, SOURCE, 0.7, 0.05),
              "label<TAB>text, source domain (movie reviews)")
    for topic, domain in TOPICS.items():
        train = make_split(rng, 200, domain, 0.25, 0.1)
        evaluation = make_split(rng, 200, domain, 0.25, 0.1)
        write_tsv(OUT / f"{topic}_train.tsv", train, f"label<TAB>text, {topic} pool")
        write_tsv(OUT / f"{topic}_eval.tsv", evaluation, f"label<TAB>text, {topic} held out")
        write_rules(OUT / f"{topic}_rules.log", topic, train, domain)


if __name__ == "__main__":
    main()
