"""
Application constants.
"""
from fractions import Fraction

# Certificate file headers
CERT_HEADER = "EGS-CERT v1"
DUAL_HEADER = "EGS-DUAL v1"
WEIGHTS_HEADER = "D:"

# Output formats
FORMAT_TEXT = "text"
FORMAT_JSON = "json"
FORMAT_CSV = "csv"

# Prime counting bounds: pi(x) >= x/log x + x/log^2 x for x >= 599,
# pi(x) <= x/log x + 1.2762 x/log^2 x for x > 1
PI_LOWER_THRESHOLD = 599
PI_UPPER_COEFF = Fraction(12762, 10000)

# Error majorant E(x) = 0.95 sqrt(x) + 3.83e-9 x, valid for sums over primes above 1423
E_SQRT_COEFF = Fraction(95, 100)
E_LINEAR_COEFF = Fraction(383, 10**11)
PRIME_SUM_MIN_Y = 1423

# Rows (n1, m1, n2, m2) bounding the log-gap to the next 3-smooth number
KAPPA_ROWS = [
    (1, 1, 1, 0),
    (1, 1, 2, 1),
    (3, 2, 2, 1),
    (3, 2, 5, 3),
    (3, 2, 8, 5),
    (11, 7, 8, 5),
    (19, 12, 8, 5),
    (19, 12, 27, 17),
    (19, 12, 46, 29),
]

# Greedy search
GREEDY_SEARCH_MAX_ITER = 200
T1_UPPER_MARGIN = 2

# Known values of t(N) for N = 1..14
T_SEQUENCE_PREFIX = [1, 1, 1, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 4]

# Hint chain start for the N/3 target
HINT_CHAIN_START = 67425
HINT_CHAIN_MIN_START = 43632

# Split example at N = 3*10^5, t = N/3: two printed offsets M(N, t) - N, at most one correct
SPLIT_EXAMPLE = (3 * 10**5, 10**5)
SPLIT_PRINTED_OFFSETS = (445, 455)

# Rearrangement certificate for the quarter threshold
QUARTER_C2 = Fraction(2, 32)
QUARTER_C3 = Fraction(3, 32)
QUARTER_W1 = Fraction(2, 32)
QUARTER_W = Fraction(1, 32)
QUARTER_MAX_NU2 = 2
QUARTER_MAX_NU3 = 9
QUARTER_EPSILON = Fraction(218038591, 4458050224128)
QUARTER_C = Fraction(1559, 24)
QUARTER_THRESHOLD = 1328148

# Repair defaults for the N/3 target at N >= 10^11
REPAIR_A = 189
REPAIR_K = 293
REPAIR_L = Fraction(9, 2)
REPAIR_INTERVALS = [
    (10**11, 5 * 10**11),
    (5 * 10**11, 10**14),
    (10**14, 10**20),
    (10**20, 10**70),
]
REPAIR_TAIL_START = 10**70
REPAIR_DELTA_TOTAL = Fraction(9740, 10000)
REPAIR_ALPHA_TOTAL = Fraction(9452, 10000)

# Reference ledger values under the defaults; delta entries in units of delta.
# Strings keep the displayed precision.
REPAIR_REFERENCE_POINT = {
    "delta1": "0.241447",
    "delta2": "0.504735",
    "delta3": "0.051574",
    "delta5": "0.06203",
    "delta7": "0.11359",
    "alpha2": "0.269878",
    "alpha3": "0.361121",
    "alpha5": "0.31418",
}
REPAIR_REFERENCE_TAIL = {
    "delta2": "0.060410",
    "delta5": "0.077301",
    "delta7": "0.02212",
    "alpha5": "0.184975",
}

# Prefix threshold and block identity for the K'-sum check
KB_THRESHOLD = Fraction(2, 5)
KB_PREFIX_LIMIT = 100

# Asymptotic constants (centre values; enclosures come from src.egs.constants)
C0_REFERENCE = Fraction(30441901, 10**8)
C1_REFERENCE = Fraction(75554808, 10**8)
C1_PRIME_REFERENCE = Fraction(3702015, 10**7)
C1_PRIME_ALT = Fraction(3702051, 10**7)
C1_DOUBLE_PRIME_REFERENCE = Fraction(1679578996, 10**9)
C1_FINAL_ALT = Fraction(7554808, 10**7)
