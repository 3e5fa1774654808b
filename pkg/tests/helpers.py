"""Independent oracles shared by the unit and acceptance tests."""

import numpy as np

from fracbessel import FiberCoefficients

SCAN = np.geomspace(1e-8, 1e8, 40001)

# (sign of lambda*B, sign of C, p range, q range)
REGIMES = {
    "concave-convex B+ C+": (1, 1, (1.1, 1.9), (2.1, 6.0)),
    "concave-convex B+ C-": (1, -1, (1.1, 1.9), (2.1, 6.0)),
    "concave-convex B- C+": (-1, 1, (1.1, 1.9), (2.1, 6.0)),
    "concave-convex B- C-": (-1, -1, (1.1, 1.9), (2.1, 6.0)),
    "superlinear B+ C+": (1, 1, (2.1, 5.0), (2.2, 6.0)),
    "superlinear B- C+": (-1, 1, (2.1, 5.0), (2.2, 6.0)),
}


def random_fiber(rng, regime):
    sb, sc, (p_lo, p_hi), (q_lo, q_hi) = REGIMES[regime]
    p = rng.uniform(p_lo, p_hi)
    q = rng.uniform(max(q_lo, p + 0.05), q_hi)
    mag = lambda: 10 ** rng.uniform(-1.5, 1.5)
    return FiberCoefficients(mag(), sb * mag(), sc * mag(), p, q, lam=rng.uniform(0.05, 2.0))


def scan_sign_changes(fc, ts=SCAN):
    """Intervals (t_i, t_{i+1}) of a dense log grid where g = Dphi/t changes sign."""
    g = fc.A - fc.lam * fc.B * ts ** (fc.p - 2) - fc.C * ts ** (fc.q - 2)
    s = np.sign(g)
    keep = s != 0
    t_kept, s_kept = ts[keep], s[keep]
    idx = np.flatnonzero(s_kept[:-1] != s_kept[1:])
    return [(t_kept[i], t_kept[i + 1]) for i in idx]


def dphi_scale(fc, t):
    return t * max(fc.A, abs(fc.lam * fc.B) * t ** (fc.p - 2), abs(fc.C) * t ** (fc.q - 2))


def check_roots_against_scan(fc, roots):
    """Return a list of problems (empty when the root list agrees with the scan)."""
    problems = []
    for a, b in scan_sign_changes(fc):
        if not any(a <= r.t <= b for r in roots):
            problems.append(f"missed sign change in [{a:.3e}, {b:.3e}]")
    for r in roots:
        d = r.t * fc.A - fc.lam * fc.B * r.t ** (fc.p - 1) - fc.C * r.t ** (fc.q - 1)
        if abs(d) > 1e-10 * dphi_scale(fc, r.t):
            problems.append(f"|Dphi({r.t:.6e})| = {abs(d):.3e} exceeds tolerance")
    return problems
