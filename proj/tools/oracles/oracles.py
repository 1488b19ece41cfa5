"""Reference values for the C++ tests, computed independently with numpy/skimage.

Run: python3 tools/oracles/oracles.py
"""
import itertools
import json
import math
from pathlib import Path

import numpy as np
from skimage.color import rgb2lab

ROOT = Path(__file__).resolve().parents[2]


def noisy_finger():
    p = np.array([1.0, 0.0, 0.0])
    e = np.exp(4.5 * p)
    return e / e.sum()


def posterior(*factors):
    acc = np.ones(3)
    for f in factors:
        acc = acc * np.asarray(f)
    return acc / acc.sum()


def dirichlet_misrank(alpha=0.05, p=(0.8, 0.15, 0.05), n=100_000, seed=0):
    rng = np.random.default_rng(seed)
    # log-space Gamma draws: G(a) = G(a+1) * U^(1/a)
    a = alpha * np.asarray(p) + 1e-6
    logs = np.log(rng.gamma(a + 1.0, size=(n, 3))) + np.log(rng.uniform(size=(n, 3))) / a
    return float(np.mean(np.argmax(logs, axis=1) != 0))


def adam_first_step(lr=0.1):
    w = np.array([1.0, 1.0])
    g = 2 * w
    m = 0.1 * g
    v = 0.001 * g * g
    mh = m / (1 - 0.9)
    vh = v / (1 - 0.999)
    return w - lr * mh / (np.sqrt(vh) + 1e-8)


def mini_mdp_q(gamma=0.95):
    # states 0,1; action a in 0..5. From s0: a=0 -> s1 reward 0; a=1 -> terminal reward 1;
    # others -> terminal reward 0. From s1: a=0 -> terminal reward 2; others -> s0 reward 0.1.
    q = np.zeros((2, 6))
    for _ in range(10_000):
        v = q.max(axis=1)
        new = np.zeros_like(q)
        new[0, 0] = 0 + gamma * v[1]
        new[0, 1] = 1.0
        new[0, 2:] = 0.0
        new[1, 0] = 2.0
        new[1, 1:] = 0.1 + gamma * v[0]
        if np.max(np.abs(new - q)) < 1e-15:
            q = new
            break
        q = new
    return q


def lexicon():
    return json.loads((ROOT / "assets" / "lexicon.json").read_text())


def applicability(term, lab):
    c = np.asarray(term["center"])
    s = np.asarray(term["spread"])
    return float(np.exp(-0.5 * np.sum(((lab - c) / s) ** 2)))


def clarification_term(patches, a, b):
    labs = [rgb2lab(np.array([[p]]))[0, 0] for p in patches]
    best, best_v = None, -1.0
    for t in lexicon():
        v = applicability(t, labs[a]) * (1 - applicability(t, labs[b]))
        if v > best_v:
            best, best_v = t["id"], v
    return best


def parse_probability(rule_probs, n_terms):
    return math.prod(rule_probs) / n_terms


def main():
    out = {}
    out["noisy_finger_1_0_0_tau4.5"] = noisy_finger().round(6).tolist()
    out["posterior_0.8_then_0.6"] = posterior((0.8, 0.1, 0.1), (0.6, 0.1, 0.3)).round(6).tolist()
    out["posterior_two_factors"] = posterior((0.6, 0.3, 0.1), (0.5, 0.4, 0.1)).round(6).tolist()
    out["dirichlet_misrank_alpha0.05"] = dirichlet_misrank()
    out["adam_first_step"] = adam_first_step().tolist()
    out["mini_mdp_qstar"] = mini_mdp_q().round(9).tolist()
    patches = [(0.1, 0.3, 0.7), (0.15, 0.35, 0.6), (0.8, 0.2, 0.2)]
    out["clarification_term_0_vs_1"] = clarification_term(patches, 0, 1)
    n = len(lexicon())
    # S->CLARIFY_TERM .5, CLARIFY_TERM->Q NP .4, Q->is it .5, NP->the TERM one .6, TERM->@term 1
    out["parse_prob_is_it_the_teal_one"] = parse_probability([0.5, 0.4, 0.5, 0.6], n)
    # S->CLARIFY_TERM .5, CLARIFY_TERM->NP .3, NP->the TERM .4 vs S->DESCRIBE .1, DESCRIBE->NP 1, NP->the TERM .4
    out["parse_prob_the_dark_blue"] = [parse_probability([0.5, 0.3, 0.4], n), parse_probability([0.1, 1.0, 0.4], n)]
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
