#!/usr/bin/env python3
"""Regenerate the bundled plain-text corpus (src/permuteflip/data/corpus.txt).

Deterministic pseudo-English: seeded sentence templates over a fixed lexicon,
sized a little above 1.2 MB.  The output is committed; rerunning this script
reproduces it byte for byte.
"""

from __future__ import annotations

import os

import numpy as np

SEED = 20240601
TARGET_BYTES = 1_250_000

NOUNS = """
time year people way day man thing woman life child world school state family
student group country problem hand part place case week company system program
question work government number night point home water room mother area money
story fact month lot right study book eye job word business issue side kind
head house service friend father power hour game line end member law car city
community name president team minute idea body information back parent face
others level office door health person art war history party result change
morning reason research girl guy moment air teacher force education foot boy
age policy process music market sense nation plan college interest death
experience effect use class control care field development role effort rate
heart drug show leader light voice wife whole police mind finally return free
price report decision son view relationship town road arm difference value
building action model season society tax director position player record paper
space ground form event official matter center couple site project activity
star table need court produce american oil situation cost industry figure
street image phone data picture practice piece land product doctor wall
patient worker news test movie north love support technology window machine
dream river mountain forest island garden bridge village harbor castle tower
journey signal pattern method theory engine circuit lattice crystal spectrum
""".split()

VERBS = """
be have do say get make go know take see come think look want give use find
tell ask work seem feel try leave call keep provide hold turn follow begin
show hear play run move like live believe bring happen write sit stand lose
pay meet include continue set learn change lead understand watch stop create
speak read spend grow open walk win teach offer remember consider appear buy
serve die send build stay fall cut reach kill raise pass sell decide return
explain hope develop carry break receive agree support hit produce eat cover
catch draw choose wait observe measure compute balance wander drift gather
assemble repair design launch trace encode sample shuffle permute calibrate
""".split()

ADJECTIVES = """
good new first last long great little own other old right big high different
small large next early young important few public bad same able local sure
free low late hard major better economic strong possible whole true federal
international full special easy clear recent certain personal open red
difficult available likely short single medical current wrong private past
foreign fine common poor natural significant similar hot dead central happy
serious ready simple left physical general environmental financial blue
democratic dark various entire close legal religious cold final main green
nice huge popular traditional cultural bright quiet distant gentle curious
steady random uniform stable noisy exact smooth sparse dense formal hidden
""".split()

ADVERBS = """
quickly slowly carefully quietly suddenly finally usually together almost
nearly often never always sometimes rarely gently firmly barely deeply
eventually certainly probably clearly exactly roughly uniformly randomly
steadily softly widely narrowly openly honestly brightly early late soon
""".split()

PREPOSITIONS = "in on at by with from into over under between among across beyond near through around".split()
DETERMINERS = "the a the the a this that each every some any the the".split()
CONJUNCTIONS = "and but so yet while although because before after when since".split()


def sentence(rng: np.random.Generator) -> str:
    def noun_phrase() -> str:
        det = DETERMINERS[rng.integers(len(DETERMINERS))]
        words = [det]
        if rng.random() < 0.55:
            words.append(ADJECTIVES[rng.integers(len(ADJECTIVES))])
        words.append(NOUNS[rng.integers(len(NOUNS))])
        return " ".join(words)

    def clause() -> str:
        words = [noun_phrase(), VERBS[rng.integers(len(VERBS))]]
        if rng.random() < 0.45:
            words.append(ADVERBS[rng.integers(len(ADVERBS))])
        if rng.random() < 0.7:
            words.append(noun_phrase())
        if rng.random() < 0.4:
            words.append(PREPOSITIONS[rng.integers(len(PREPOSITIONS))])
            words.append(noun_phrase())
        return " ".join(words)

    parts = [clause()]
    while rng.random() < 0.3 and len(parts) < 3:
        parts.append(CONJUNCTIONS[rng.integers(len(CONJUNCTIONS))])
        parts.append(clause())
    text = " ".join(parts)
    mark = "." if rng.random() < 0.86 else ("?" if rng.random() < 0.5 else "!")
    return text[0].upper() + text[1:] + mark


def main() -> None:
    rng = np.random.default_rng(SEED)
    pieces: list[str] = []
    size = 0
    sentences_in_par = 0
    par_len = int(rng.integers(3, 9))
    while size < TARGET_BYTES:
        s = sentence(rng)
        sep = " "
        sentences_in_par += 1
        if sentences_in_par >= par_len:
            sep = "\n\n"
            sentences_in_par = 0
            par_len = int(rng.integers(3, 9))
        pieces.append(s + sep)
        size += len(s) + len(sep)
    corpus = "".join(pieces).rstrip() + "\n"
    out = os.path.join(
        os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
        "src", "permuteflip", "data", "corpus.txt",
    )
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(corpus)
    print(f"wrote {len(corpus.encode('utf-8'))} bytes to {out}")


if __name__ == "__main__":
    main()
