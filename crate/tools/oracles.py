"""High-precision reference values frozen into the Rust test suite.

Run with `python3 tools/oracles.py`; requires mpmath.
"""
from mpmath import mp, mpf, gamma, pi, sqrt, quad, inf, power, hyp2f1

mp.dps = 40


def params(n, lam):
    n = mpf(n)
    lam = mpf(lam)
    p = (2 * n - lam) / (n - 2)
    return n, lam, p


def sharp_constant(n, lam):
    n, lam, p = params(n, lam)
    hls = (1 / (2 * sqrt(pi))) ** (n - lam) * gamma(lam / 2) / gamma(n - lam / 2) \
        * (gamma(n) / gamma(n / 2)) ** ((n - lam) / n)
    sob = n * (n - 2) / 4 * power(2, 2 / n) * pi ** ((n + 1) / n) * gamma((n + 1) / 2) ** (-2 / n)
    root = hls ** (1 / (2 * p)) * sob ** mpf(-0.5)
    return root ** 2


def amplitude(n, lam):
    n, lam, p = params(n, lam)
    return (n * (n - 2) * 2 ** (n - lam) * gamma(n - lam / 2) / gamma(lam / 2)) ** (1 / (2 * p - 2))


def sphere(n):
    return 2 * pi ** (mpf(n) / 2) / gamma(mpf(n) / 2)


def kinetic_quadrature(n, lam):
    nn, _, _ = params(n, lam)
    b = amplitude(n, lam)
    dw = lambda r: b * (nn - 2) * r * (1 + r * r) ** (-nn / 2)
    return sphere(n) * quad(lambda r: dw(r) ** 2 * r ** (nn - 1), [0, 1, 10, inf])


def riesz_direct(n, lam, r):
    """(I_lambda * W^p)(r) by direct radial/angular integration."""
    nn, ll, p = params(n, lam)
    b = amplitude(n, lam)
    c = gamma(ll / 2) / (pi ** (nn / 2) * gamma((nn - ll) / 2) * 2 ** (nn - ll))
    wp = lambda s: (b * (1 + s * s) ** (-(nn - 2) / 2)) ** p
    om1 = sphere(n - 1)

    def avg(s):
        f = lambda t: (r * r + s * s - 2 * r * s * t) ** (-ll / 2) * (1 - t * t) ** ((nn - 3) / 2)
        return om1 * quad(f, [-1, 0, 1])

    return c * quad(lambda s: wp(s) * avg(s) * s ** (nn - 1), [0, r, 2 * r + 1, inf])


if __name__ == "__main__":
    for n, lam in [(6, 4), (5, 4), (3, 2), (4, 2), (7, 3)]:
        _, _, p = params(n, lam)
        c = sharp_constant(n, lam)
        print(f"({n},{lam}) p={p} C={mp.nstr(c, 30)} kinetic={mp.nstr(c ** (-p / (p - 1)), 30)} "
              f"beta={mp.nstr(amplitude(n, lam), 30)}")
    print("int (1+r^2)^-6 over R^6:", mp.nstr(sphere(6) * quad(lambda r: r ** 5 * (1 + r * r) ** -6, [0, inf]), 30),
          "pi^3/60 =", mp.nstr(pi ** 3 / 60, 30))
    for n, lam in [(6, 4), (5, 4), (3, 2)]:
        print(f"kinetic by quadrature ({n},{lam}):", mp.nstr(kinetic_quadrature(n, lam), 30))
    mp.dps = 20
    for n, lam, r in [(5, 4, mpf('0.5')), (5, 4, mpf(2)), (6, 4, mpf(1))]:
        nn, ll, p = params(n, lam)
        b = amplitude(n, lam)
        closed = nn * (nn - 2) * b ** (2 - p) * (1 + r * r) ** (-ll / 2)
        print(f"riesz direct ({n},{lam}) r={r}:", mp.nstr(riesz_direct(n, lam, r), 15), "closed:", mp.nstr(closed, 15))
