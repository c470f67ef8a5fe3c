"""Reference values for the Rust oracle tests, computed with scipy quadrature."""
import numpy as np
from scipy import integrate, stats


def mixture_mi(m, s=1.0):
    # X ~ Bernoulli(1/2), C | X ~ N(+-m, s^2); I(X;C) = H(C) - H(C|X)
    def p(c):
        return 0.5 * stats.norm.pdf(c, m, s) + 0.5 * stats.norm.pdf(c, -m, s)

    def integrand(c):
        v = p(c)
        return -v * np.log(v) if v > 0 else 0.0

    h_c, _ = integrate.quad(integrand, -m - 40 * s, m + 40 * s, epsabs=1e-13, epsrel=1e-13, limit=500)
    h_cx = 0.5 * np.log(2 * np.pi * np.e * s * s)
    return h_c - h_cx


def plugin_mi(table):
    t = np.asarray(table, float)
    px, py = t.sum(1, keepdims=True), t.sum(0, keepdims=True)
    nz = t > 0
    return float((t[nz] * np.log(t[nz] / (px @ py)[nz])).sum())


if __name__ == "__main__":
    print(f"MIXTURE_MI_5 = {mixture_mi(5.0)!r}")
    print(f"MIXTURE_MI_HALF = {mixture_mi(0.5)!r}")
    print(f"GAUSS_MI_09 = {-0.5 * np.log(1 - 0.81)!r}")
    print(f"PLUGIN_MI = {plugin_mi([[0.4, 0.1], [0.1, 0.4]])!r}")
    print(f"BCE_LOGIT_10 = {np.log1p(np.exp(-10.0))!r}")
    print(f"NORMAL_MASS_3 = {integrate.quad(lambda c: stats.norm.pdf(c, 0.3, 0.7), -20, 20, epsabs=1e-14)[0]!r}")
