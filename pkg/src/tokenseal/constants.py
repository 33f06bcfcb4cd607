"""Frozen arithmetic constants for the keyed hash.

Every value here is part of the detection contract: two parties can only
detect each other's watermarks if they share this exact table (see
VECTORS.md at the repository root for the published golden vectors).
Do not edit values without bumping CONSTANTS_VERSION.

All hash arithmetic is wrapping unsigned 64-bit, so results are identical
on every platform.  The window primes are distinct 61-bit primes, which
makes the hash order-sensitive in the window tokens; the two mixer primes
are the first 61-bit primes above windows cut from the hexadecimal
expansions of pi and e.
"""

CONSTANTS_VERSION = "tokenseal-prf-v1"

#: Maximum supported watermark context window length.
K_MAX = 8

#: Per-position window primes q_1..q_8 (distinct 61-bit primes).
WINDOW_PRIMES = (
    0x111111111111115F,
    0x122222222222226D,
    0x1333333333333345,
    0x1444444444444445,
    0x1555555555555571,
    0x16666666666666AF,
    0x177777777777779B,
    0x1123456789ABCE4F,
)

#: Multiplier for the candidate token id.
TOKEN_PRIME = 0x13579135791357CB
#: Multiplier for the secret key.
KEY_PRIME = 0x1468024680246841
#: Outer multiplier applied to the accumulated sum.
OUTER_PRIME = 0x1F0F0F0F0F0F0F7B
#: Finalizer round 1 multiplier (from hex digits of pi).
MIX_PRIME_1 = 0x113198A2E03707BF
#: Finalizer round 2 multiplier (from hex digits of e).
MIX_PRIME_2 = 0x1BF7158809CF4F53
#: Finalizer round 3 multiplier (from hex digits of sqrt(2)).
MIX_PRIME_3 = 0x12CBEC4D9BAA5679
#: Salt multiplier that derives per-layer keys for tournament sampling.
LAYER_PRIME = 0x1FF00FF00FF00FF3

#: Output modulus M: hashes are integers in [0, M).
OUTPUT_MODULUS = 1 << 32
#: Finalizer fold shifts.
FOLD_SHIFT_1 = 29
FOLD_SHIFT_2 = 32
FOLD_SHIFT_3 = 30

#: Wrapping mask for 64-bit arithmetic.
MASK_64 = (1 << 64) - 1
