"""Chi-squared distribution (PDF, CDF, inverse CDF) for 2 and 3 degrees of freedom.

Only the workspace dimensions 2 and 3 are supported, which keeps every formula
in closed form: the 2-dof chi-squared is an exponential distribution and the
3-dof CDF reduces to an error-function expression.
"""

import math

SUPPORTED_DOF = (2, 3)

# Probabilities are clamped below this ceiling before inversion so that the
# quantile stays finite; certificates built from a clamped value remain
# conservative.
P_CEILING = 1.0 - 1e-15

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _check_dof(n):
    if n not in SUPPORTED_DOF:
        raise ValueError(f"degrees of freedom must be 2 or 3, got {n!r}")


def chi2_pdf(x, n):
    """Density of the chi-squared distribution with ``n`` degrees of freedom."""
    _check_dof(n)
    if x < 0:
        raise ValueError(f"chi2_pdf requires x >= 0, got {x}")
    if n == 2:
        return 0.5 * math.exp(-0.5 * x)
    return _SQRT_2_OVER_PI * 0.5 * math.sqrt(x) * math.exp(-0.5 * x)


def chi2_cdf(x, n):
    """P(X <= x) for X ~ chi-squared with ``n`` degrees of freedom."""
    _check_dof(n)
    if x < 0:
        raise ValueError(f"chi2_cdf requires x >= 0, got {x}")
    if n == 2:
        return -math.expm1(-0.5 * x)
    # 3 dof: P(x) = erf(sqrt(x/2)) - sqrt(2/pi) * sqrt(x) * exp(-x/2)
    s = math.sqrt(0.5 * x)
    return math.erf(s) - _SQRT_2_OVER_PI * math.sqrt(x) * math.exp(-0.5 * x)


def chi2_sf(x, n):
    """Survival function P(X > x), accurate in the far tail."""
    _check_dof(n)
    if x < 0:
        raise ValueError(f"chi2_sf requires x >= 0, got {x}")
    if n == 2:
        return math.exp(-0.5 * x)
    s = math.sqrt(0.5 * x)
    return math.erfc(s) + _SQRT_2_OVER_PI * math.sqrt(x) * math.exp(-0.5 * x)


def chi2_inv_cdf(p, n):
    """Quantile x with chi2_cdf(x, n) == p.

    ``p`` must lie in [0, 1); values above ``P_CEILING`` are clamped to it.
    """
    _check_dof(n)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"chi2_inv_cdf requires 0 <= p < 1, got {p}")
    p = min(p, P_CEILING)
    if p == 0.0:
        return 0.0
    if n == 2:
        return -2.0 * math.log1p(-p)

    # 3 dof: bracket then bisect, with a Newton polish using the density.
    lo, hi = 0.0, 1.0
    while chi2_cdf(hi, 3) < p:
        lo, hi = hi, hi * 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, 3) < p:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(4):
        f = chi2_cdf(x, 3) - p
        d = chi2_pdf(x, 3)
        if d <= 0.0:
            break
        step = f / d
        x_new = x - step
        if x_new <= 0.0:
            break
        x = x_new
    return x
