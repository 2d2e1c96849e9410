"""Straight-from-definition loop implementations used as test oracles.

Deliberately naive: no numpy, no shared helpers with the package.
"""

import math
import random


def entropy(seq):
    vals = [a for a in seq if a is not None]
    if not vals:
        return 0.0
    h = 0.0
    for v in set(vals):
        p = vals.count(v) / len(vals)
        h -= p * math.log2(p)
    return h


def pearson(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    num = 0.0
    sx = 0.0
    sy = 0.0
    for i in range(n):
        num += (x[i] - mx) * (y[i] - my)
        sx += (x[i] - mx) ** 2
        sy += (y[i] - my) ** 2
    if sx == 0 or sy == 0:
        return math.nan
    return num / math.sqrt(sx * sy)


def mae(a_rows, t_rows):
    k = len(a_rows[0])
    out = []
    for j in range(k):
        total = 0.0
        for i in range(len(a_rows)):
            total += abs(a_rows[i][j] - t_rows[i][j])
        out.append(total / len(a_rows))
    return out


def following(seq, pace):
    hits = 0
    for i in range(len(seq)):
        if seq[i] is not None and seq[i] == pace[i]:
            hits += 1
    return hits / len(seq)


def fixing(seq):
    hits = 0
    for i in range(1, len(seq)):
        if seq[i] is not None and seq[i] == seq[i - 1]:
            hits += 1
    return hits / (len(seq) - 1)


def random_aoi_sequence(rng: random.Random, n, k=None, none_rate=0.15):
    k = k or rng.randint(1, 6)
    return [None if rng.random() < none_rate else rng.randint(1, k) for _ in range(n)]


def random_vector(rng: random.Random, n):
    if rng.random() < 0.05:
        return [rng.choice([0.0, 1.0, 2.5])] * n
    return [rng.uniform(-5, 5) for _ in range(n)]
