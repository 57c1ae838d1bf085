"""Reference computations that share no code with the package.

The distribution oracle evaluates the raw-incentive formula directly in
50-digit arithmetic; the threshold oracle brute-forces a dense grid in the
naive (non-log) form.
"""

import mpmath
import numpy as np

mpmath.mp.dps = 50

# SHA-256 of 0x0000000000000000_4563918244f40000 || 32 zero bytes || b"a",
# computed with coreutils sha256sum and openssl dgst over the raw bytes.
DIGEST_5ETH_ZERO_NONCE_A = "48d159af70416e046dfca57d0555335b9d2570f3fa9089390e774327b31bc3d3"


def incentive_hp(filled, total_limit):
    f = mpmath.mpf(filled)
    return mpmath.e ** (f - mpmath.mpf(total_limit)) / f


def distribution_hp(fills, total_limit, amount):
    """(raw incentives, fractions, finals) as mpf lists."""
    raw = [incentive_hp(f, total_limit) for f in fills]
    lsum = mpmath.fsum(raw)
    fractions = [r / lsum for r in raw]
    finals = [q * mpmath.mpf(amount) for q in fractions]
    return raw, fractions, finals


def naive_distribution(fills, total_limit, amount):
    """Double-precision direct evaluation; None when everything underflows."""
    raw = [np.exp(f - total_limit) / f for f in fills]
    lsum = sum(raw)
    if lsum == 0.0:
        return None
    return [r / lsum * amount for r in raw]


def brute_force_crossings(background, total_limit, price_start, price_end, margin, lo, hi, n=10**6):
    """Sign changes of (pool - hold) on an n-point grid, linearly interpolated."""
    x = np.linspace(lo, hi, n)
    bg = np.asarray(background, dtype=float)
    own = np.exp(x - total_limit) / x
    others = np.sum(np.exp(bg - total_limit) / bg)
    diff = margin * own / (own + others) - x * (price_end - price_start)
    idx = np.nonzero(np.signbit(diff[:-1]) != np.signbit(diff[1:]))[0]
    return [float(x[i] - diff[i] * (x[i + 1] - x[i]) / (diff[i + 1] - diff[i])) for i in idx]
