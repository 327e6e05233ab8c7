# Independent mpmath evaluation of the Aubin test-function quotient on a geodesic ball
# with density 1 - S0 s^2/(6n). Usage: python3 aubin_quotient_oracle.py n r S0 beta eps
import sys
from mpmath import mp, mpf, pi, gamma, exp, cos, sin, diff, quad, sqrt

mp.dps = 25

def psi(t):
    if t <= 0: return mpf(0)
    if t >= 1: return mpf(1)
    a = exp(-1 / t); b = exp(-1 / (1 - t)); return a / (a + b)

def Q(n, r, S0, beta, eps):
    p = mpf(2 * n) / (n - 2); a = mpf(4 * (n - 1)) / (n - 2)
    om = 2 * pi ** (mpf(n) / 2) / gamma(mpf(n) / 2)
    if n == 3:
        phi = lambda s: cos(pi * s / 2); dphi = lambda s: -pi / 2 * sin(pi * s / 2)
    else:
        phi = lambda s: psi((r - s) / (r / 2))
        dphi = lambda s: -diff(psi, (r - s) / (r / 2)) / (r / 2) if r / 2 < s < r else mpf(0)
    e = mpf(n - 2) / 2
    u = lambda s: phi(s) / (eps + s * s) ** e
    du = lambda s: dphi(s) / (eps + s * s) ** e - (n - 2) * phi(s) * s / (eps + s * s) ** (e + 1)
    w = lambda s: (1 - S0 * s * s / (6 * n)) * s ** (n - 1)
    pts = [0, sqrt(eps), 10 * sqrt(eps), r / 2, r]
    N = om * quad(lambda s: (du(s) ** 2 + (S0 + beta) / a * u(s) ** 2) * w(s), pts)
    D = om * quad(lambda s: u(s) ** p * w(s), pts)
    return N / D ** (2 / p)

n, r, S0, beta, eps = int(sys.argv[1]), mpf(sys.argv[2]), mpf(sys.argv[3]), mpf(sys.argv[4]), mpf(sys.argv[5])
print(Q(n, r, S0, beta, eps))
# frozen in tests/test_quotient.cpp:
#   5 0.1 -1 -1 1e-4            -> 14.96191344900008415923824
#   3 1 -19.739208802178716 -1 1e-4 -> 5.624372861630755263931212
