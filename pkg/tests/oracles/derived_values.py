"""Independent calculator for the constants frozen into the test suite.

Uses only ``math`` and ``mpmath``, never the package under test. Run it
directly to print the values:

    python tests/oracles/derived_values.py
"""

import math

import mpmath

mpmath.mp.dps = 40


def switching_time(tau0, delta, ratio):
    return tau0 * mpmath.exp(delta * (1 - ratio) ** 2)


def gaussian_cpt(mean=8, variance=4):
    w = [mpmath.exp(-(mpmath.mpf(v) - mean) ** 2 / (2 * variance)) for v in range(16)]
    z = mpmath.fsum(w)
    pmf = [x / z for x in w]
    entries = []
    for level in range(4):
        width = 16 >> level
        for prefix in range(1 << level):
            block = pmf[prefix * width:(prefix + 1) * width]
            entries.append(mpmath.fsum(block[width // 2:]) / mpmath.fsum(block))
    return pmf, entries


def main():
    tau = switching_time(mpmath.mpf("1e-9"), 40, mpmath.mpf("0.9"))
    print("tau(0.9 ic0) [s]      ", mpmath.nstr(tau, 15))
    print("P(5 ns)               ", mpmath.nstr(1 - mpmath.exp(-mpmath.mpf("5e-9") / tau), 15))
    print("exp(0.3)              ", mpmath.nstr(mpmath.exp(mpmath.mpf("0.3")), 15))
    print("q1 defaults           ", mpmath.nstr(1 - mpmath.exp(-mpmath.mpf(200) * mpmath.mpf("0.5") / 1600), 15))
    # streaming across the slab at |omega| = 15/16 through the 1.0-wide source
    print("streaming score       ", mpmath.nstr(mpmath.mpf("0.015") * 1 / (mpmath.mpf(15) / 16), 15))
    pmf, entries = gaussian_cpt()
    print("gaussian pmf          ", [mpmath.nstr(p, 17) for p in pmf])
    print("gaussian cpt          ", [mpmath.nstr(e, 17) for e in entries])
    # two bins off by +-0.01: mean of squares over 16 bins
    print("pmf mse example       ", 2 * 0.01**2 / 16)
    print("truncnorm sd          ", truncated_sd(0.03, 0.15))


def truncated_sd(sigma, half_width):
    a = half_width / sigma
    phi = math.exp(-a * a / 2) / math.sqrt(2 * math.pi)
    mass = math.erf(a / math.sqrt(2))
    return sigma * math.sqrt(1 - 2 * a * phi / mass)


if __name__ == "__main__":
    main()
