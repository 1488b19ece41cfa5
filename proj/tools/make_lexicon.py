#!/usr/bin/env python3
"""Regenerates assets/lexicon.json from the xkcd color survey names.

The survey's name/RGB table (CC0) ships with matplotlib. We keep the labels
built from a fixed color vocabulary and convert the survey RGB to CIELAB.
"""
import json
import re
import sys

import matplotlib.colors as mc
import numpy as np

BASE = set(
    "red orange yellow green blue purple pink brown grey teal cyan magenta violet "
    "lavender olive maroon navy turquoise aqua lime tan beige black white mint salmon "
    "peach gold mauve lilac indigo cream khaki rose burgundy coral plum periwinkle sky "
    "sea forest royal cobalt crimson scarlet ochre mustard rust sand emerald jade "
    "chartreuse fuchsia slate charcoal taupe silver ivory lemon apricot brick wine".split())
MOD = set(
    "light dark pale deep bright dull dusty pastel vivid muted medium greenish bluish "
    "reddish yellowish purplish pinkish brownish greyish orangish".split())
SPREAD = [6.0, 6.0, 6.0]

WHITE = np.array([0.95047, 1.0, 1.08883])
M = np.array([[0.4124564, 0.3575761, 0.1804375],
              [0.2126729, 0.7151522, 0.0721750],
              [0.0193339, 0.1191920, 0.9503041]])


def rgb_to_lab(rgb):
    c = np.asarray(rgb, float)
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = M @ lin / WHITE
    d = 6 / 29
    f = np.where(xyz > d ** 3, np.cbrt(xyz), xyz / (3 * d * d) + 4 / 29)
    return [116 * f[1] - 16, 500 * (f[0] - f[1]), 200 * (f[1] - f[2])]


def main(path):
    terms = []
    for key, hexval in mc.XKCD_COLORS.items():
        name = key[len("xkcd:"):]
        if not re.fullmatch(r"[a-z]+( [a-z]+)?", name):
            continue
        words = name.split()
        if words[-1] not in BASE:
            continue
        if len(words) == 2 and words[0] not in MOD | BASE:
            continue
        lab = rgb_to_lab(mc.to_rgb(hexval))
        terms.append({
            "id": name.replace(" ", "_"),
            "label": name,
            "center": [round(v, 3) for v in lab],
            "spread": SPREAD,
        })
    # survey order is least-to-most frequent; put the common names first
    terms.reverse()
    with open(path, "w") as f:
        f.write("[\n")
        f.write(",\n".join(" " + json.dumps(t) for t in terms))
        f.write("\n]\n")
    print(f"wrote {len(terms)} terms to {path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "assets/lexicon.json")
