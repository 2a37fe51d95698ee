"""Slow reference implementations used to cross-check the vectorized code.

Written with plain loops and Python floats so they share no code path with the
library.
"""

import math


def brute_knn(points, query, k):
    """Sort every other index by (squared distance, index)."""
    q = points[query]
    scored = []
    for j, p in enumerate(points):
        if j == query:
            continue
        d2 = sum((float(a) - float(b)) ** 2 for a, b in zip(p, q))
        scored.append((d2, j))
    scored.sort()
    return [j for _, j in scored[:k]]


def brute_fps(points, m):
    n = len(points)
    centroid = [sum(float(p[c]) for p in points) / n for c in range(3)]

    def d2(a, b):
        return sum((float(x) - float(y)) ** 2 for x, y in zip(a, b))

    best, first = -1.0, 0
    for i, p in enumerate(points):
        r = d2(p, centroid)
        if r > best:
            best, first = r, i
    chosen = [first]
    min_d = [d2(p, points[first]) for p in points]
    while len(chosen) < m:
        best, nxt = -1.0, 0
        for i, v in enumerate(min_d):
            if v > best:
                best, nxt = v, i
        chosen.append(nxt)
        min_d = [min(v, d2(points[i], points[nxt])) for i, v in enumerate(min_d)]
    return chosen


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _unit(a):
    length = math.sqrt(_dot(a, a))
    return tuple(x / length for x in a)


def reference_pair_feature(pq, nq, pk, nk):
    d = tuple(float(b) - float(a) for a, b in zip(pq, pk))
    dist = math.sqrt(_dot(d, d))
    dh = tuple(x / dist for x in d)

    def frame(n):
        u = _cross(d, n)
        if math.sqrt(_dot(u, u)) < 1e-9:
            axis = min(range(3), key=lambda i: (abs(n[i]), i))
            a = tuple(1.0 if i == axis else 0.0 for i in range(3))
            u = _cross(a, n)
        u = _unit(u)
        return u, _unit(_cross(u, n))

    uq, vq = frame(nq)
    uk, vk = frame(nk)
    return [dist, _dot(dh, nq), _dot(dh, nk), _dot(nq, nk), _dot(uq, uk),
            _dot(vq, vk), _dot(uq, vk), _dot(vq, uk)]
