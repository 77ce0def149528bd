"""Seeded synthetic corpora for tests, demos and benchmarks."""
from __future__ import annotations

import numpy as np

# each synthetic origin: (first-name syllables, surname syllables, surname suffix)
NAME_GENERATORS = {
    "slavic": (("iv", "an", "bor", "is", "vla", "dim", "ser", "gei"), ("pet", "rom", "smir", "kuz", "vol", "mor"), "ov"),
    "nordic": (("er", "ik", "lars", "ol", "af", "sven", "nil"), ("and", "jo", "han", "pe", "ter", "karl"), "son"),
    "turkic": (("meh", "met", "ah", "ay", "se", "mus", "ta", "fa"), ("kara", "yil", "diz", "han", "ca", "dem"), "oglu"),
    "italic": (("gio", "van", "ni", "lu", "ca", "mar", "co"), ("ros", "bel", "man", "cin", "sar", "tor"), "elli"),
}


def _word(rng, syllables, lo, hi):
    k = int(rng.integers(lo, hi + 1))
    return "".join(syllables[int(i)] for i in rng.integers(0, len(syllables), size=k))


def synthetic_names(n: int, seed: int = 0, origins=None):
    """Return ``(names, labels, origin_names)`` with labels cycling over origins.

    Names look like ``"<first> <surname><suffix>"``; capitalisation is random
    so the codec's case folding is exercised.
    """
    origins = list(origins or NAME_GENERATORS)
    rng = np.random.default_rng(seed)
    names, labels = [], []
    for i in range(n):
        k = i % len(origins)
        first_syl, last_syl, suffix = NAME_GENERATORS[origins[k]]
        first = _word(rng, first_syl, 1, 3)
        last = _word(rng, last_syl, 1, 2) + suffix
        name = f"{first} {last}"
        if rng.random() < 0.5:
            name = name.title()
        names.append(name)
        labels.append(k)
    order = rng.permutation(n)
    return [names[i] for i in order], np.asarray(labels)[order], origins
