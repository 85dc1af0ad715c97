"""Regenerates golden_stencil.json from first principles with scipy.

One-dimensional lattice weights: the second difference divided by y^2 is
interpolated by hat functions on the lattice and integrated against
y^(1-2s); the hat at 0 contributes to the nearest-neighbour offsets.
Rows are for a single control with constant kernel k and zero exterior data.
"""
import json
import math

from scipy import integrate


def hat_moment(m, h, s, half):
    a, b = (m - 1) * h, (m + 1) * h
    f_left = lambda y: (y - a) / h * y ** (1 - 2 * s)
    f_right = lambda y: (b - y) / h * y ** (1 - 2 * s)
    if m == 1:
        left = integrate.quad(lambda y: y / h, 0, h, weight="alg", wvar=(1 - 2 * s, 0),
                              epsabs=0, epsrel=1e-13)[0]
    else:
        left = integrate.quad(f_left, a, m * h, epsabs=0, epsrel=1e-13)[0]
    right = 0.0 if half else integrate.quad(f_right, m * h, b, epsabs=0, epsrel=1e-13)[0]
    return left + right


def core_moment(h, s):
    # (1 - y/h) y^(1-2s) on (0, h); algebraic end-point weight handles y^(1-2s).
    return integrate.quad(lambda y: 1 - y / h, 0, h, weight="alg", wvar=(1 - 2 * s, 0),
                          epsabs=0, epsrel=1e-13)[0]


def weights(h, s, far):
    M = int(math.floor(far / h + 1e-9))
    w = {}
    for m in range(1, M + 1):
        w[m] = hat_moment(m, h, s, m == M) / (m * h) ** 2
    core = core_moment(h, s) / h ** 2
    w[1] += core
    return w, core, M


def row(h, s, far, R, k, node_m):
    w, core, M = weights(h, s, far)
    n = int(math.floor(R / h + 1e-9))
    tail = 2.0 * (M * h) ** (-2 * s) / (2 * s)
    entries = {}
    exterior = 2 * k * tail
    diag = -2 * k * tail
    for m in range(-M, M + 1):
        if m == 0:
            continue
        t = 2 * k * w[abs(m)]
        diag -= t
        target = node_m + m
        if abs(target) <= n:
            entries[target] = entries.get(target, 0.0) + t
        else:
            exterior += t
    return {"node": node_m, "diagonal": diag, "exterior_mass": exterior,
            "entries": [[t, entries[t]] for t in sorted(entries)]}


def main():
    out = {"spacing": 0.25, "far_radius": 2.0, "grid_radius": 1.0, "cases": []}
    for s in (0.6, 0.75, 0.9):
        w, core, M = weights(0.25, s, 2.0)
        k = 2 - 2 * s
        out["cases"].append({
            "s": s,
            "kernel": k,
            "core_coefficient": core,
            "weights": [w[m] for m in range(1, M + 1)],
            "rows": [row(0.25, s, 2.0, 1.0, k, m) for m in (0, -4, 3)],
        })
    with open("golden_stencil.json", "w") as f:
        json.dump(out, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
