"""Regenerates inner_tick_golden.txt: 100 (state, action) -> next state records.

Each line holds position, velocity, action, next position, next velocity, with
the reals written as C99 hex floats so they round-trip exactly.
"""
import math
import random

MIN_P, MAX_P, MAX_V = -1.2, 0.6, 0.07


def tick(p, v, a):
    v = v + 0.001 * (float(a) - 1.0) - 0.0025 * math.cos(3.0 * p)
    v = min(max(v, -MAX_V), MAX_V)
    p = min(max(p + v, MIN_P), MAX_P)
    if p <= MIN_P:
        v = 0.0
    return p, v


def main():
    rng = random.Random(20240611)
    cases = [
        (MIN_P, -MAX_V, 0), (MIN_P, 0.0, 1), (MIN_P + 1e-3, -0.01, 0),
        (MAX_P, MAX_V, 2), (0.59, 0.069, 2), (-0.5235987755982988, 0.0, 1),
        (0.0, MAX_V, 2), (0.0, -MAX_V, 0), (-1.19, -0.05, 0), (0.45, 0.04, 2),
    ]
    while len(cases) < 100:
        cases.append((rng.uniform(MIN_P, MAX_P), rng.uniform(-MAX_V, MAX_V), rng.randrange(3)))
    with open("inner_tick_golden.txt", "w") as out:
        out.write("# position velocity action next_position next_velocity\n")
        for p, v, a in cases:
            np_, nv = tick(p, v, a)
            out.write(f"{p.hex()} {v.hex()} {a} {np_.hex()} {nv.hex()}\n")


if __name__ == "__main__":
    main()
