"""Plain-loop reference for the 128-bucket / 1-byte-checksum fuzzy digest.

Deliberately naive transliteration of the published construction (sliding
5-byte window, six Pearson-hashed triplets per step, quartile-coded bucket
counts).  Used only as a test oracle against poisonsim.lsh; kept free of
numpy so the two code paths share nothing but the permutation table and
the published constants.
"""

import math

# Pearson's permutation table, as used by the published digest.
PERM = [
    1, 87, 49, 12, 176, 178, 102, 166, 121, 193, 6, 84, 249, 230, 44, 163,
    14, 197, 213, 181, 161, 85, 218, 80, 64, 239, 24, 226, 236, 142, 38, 200,
    110, 177, 104, 103, 141, 253, 255, 50, 77, 101, 81, 18, 45, 96, 31, 222,
    25, 107, 190, 70, 86, 237, 240, 34, 72, 242, 20, 214, 244, 227, 149, 235,
    97, 234, 57, 22, 60, 250, 82, 175, 208, 5, 127, 199, 111, 62, 135, 248,
    174, 169, 211, 58, 66, 154, 106, 195, 245, 171, 17, 187, 182, 179, 0, 243,
    132, 56, 148, 75, 128, 133, 158, 100, 130, 126, 91, 13, 153, 246, 216, 219,
    119, 68, 223, 78, 83, 88, 201, 99, 122, 11, 92, 32, 136, 114, 52, 10,
    138, 30, 48, 183, 156, 35, 61, 26, 143, 74, 251, 94, 129, 162, 63, 152,
    170, 7, 115, 167, 241, 206, 3, 150, 55, 59, 151, 220, 90, 53, 23, 131,
    125, 173, 15, 238, 79, 95, 89, 16, 105, 137, 225, 224, 217, 160, 37, 123,
    118, 73, 2, 157, 46, 116, 9, 145, 134, 228, 207, 212, 202, 215, 69, 229,
    27, 188, 67, 124, 168, 252, 42, 4, 29, 108, 21, 247, 19, 205, 39, 203,
    233, 40, 186, 147, 198, 192, 155, 33, 164, 191, 98, 204, 165, 180, 117, 76,
    140, 36, 210, 172, 41, 54, 159, 8, 185, 232, 113, 196, 231, 47, 146, 120,
    51, 65, 28, 144, 254, 221, 93, 189, 194, 139, 112, 43, 71, 109, 184, 209,
]

MIN_LENGTH = 50


def _b_mapping(salt, b0, b1, b2):
    h = PERM[salt]
    h = PERM[h ^ b0]
    h = PERM[h ^ b1]
    h = PERM[h ^ b2]
    return h


def _capture_length(n):
    if n <= 656:
        i = math.floor(math.log(n) / math.log(1.5))
    elif n <= 3199:
        i = math.floor(math.log(n) / math.log(1.3) - 8.72777)
    else:
        i = math.floor(math.log(n) / math.log(1.1) - 62.5472)
    return i & 0xFF


def _swap_nibbles(b):
    return ((b & 0x0F) << 4) | (b >> 4)


def reference_digest_parts(data):
    """Return (checksum, lvalue, q1_ratio, q2_ratio, code_bytes)."""
    n = len(data)
    if n < MIN_LENGTH:
        raise ValueError("need at least %d bytes" % MIN_LENGTH)

    buckets = [0] * 256
    checksum = 0
    for i in range(4, n):
        b0 = data[i]
        b1 = data[i - 1]
        b2 = data[i - 2]
        b3 = data[i - 3]
        b4 = data[i - 4]
        checksum = _b_mapping(0, b0, b1, checksum)
        buckets[_b_mapping(2, b0, b1, b2)] += 1
        buckets[_b_mapping(3, b0, b1, b3)] += 1
        buckets[_b_mapping(5, b0, b2, b3)] += 1
        buckets[_b_mapping(7, b0, b2, b4)] += 1
        buckets[_b_mapping(11, b0, b1, b4)] += 1
        buckets[_b_mapping(13, b0, b3, b4)] += 1

    ranked = sorted(buckets[:128])
    q1, q2, q3 = ranked[31], ranked[63], ranked[95]
    q1_ratio = (q1 * 100 // q3) % 16 if q3 else 0
    q2_ratio = (q2 * 100 // q3) % 16 if q3 else 0

    code = []
    for i in range(32):
        byte = 0
        for j in range(4):
            count = buckets[4 * i + j]
            if count > q3:
                cell = 3
            elif count > q2:
                cell = 2
            elif count > q1:
                cell = 1
            else:
                cell = 0
            byte += cell << (2 * j)
        code.append(byte)

    return checksum, _capture_length(n), q1_ratio, q2_ratio, code


def reference_digest(data):
    """Canonical 72-char rendering: 'T1' + 70 uppercase hex chars."""
    checksum, lvalue, q1_ratio, q2_ratio, code = reference_digest_parts(data)
    out = [
        _swap_nibbles(checksum),
        _swap_nibbles(lvalue),
        (q1_ratio << 4) | q2_ratio,
    ]
    out.extend(reversed(code))
    return "T1" + "".join("%02X" % b for b in out)


def _mod_diff(a, b, span):
    d = abs(a - b)
    return min(d, span - d)


def reference_distance(parts_a, parts_b):
    """Score two digests produced by reference_digest_parts."""
    ca, la, q1a, q2a, code_a = parts_a
    cb, lb, q1b, q2b, code_b = parts_b

    diff = 0
    ldiff = _mod_diff(la, lb, 256)
    if ldiff > 1:
        diff += ldiff * 12
    else:
        diff += ldiff

    for qa, qb in ((q1a, q1b), (q2a, q2b)):
        qdiff = _mod_diff(qa, qb, 16)
        if qdiff <= 1:
            diff += qdiff
        else:
            diff += (qdiff - 1) * 12

    if ca != cb:
        diff += 1

    for xa, xb in zip(code_a, code_b):
        for shift in (0, 2, 4, 6):
            da = (xa >> shift) & 3
            db = (xb >> shift) & 3
            d = abs(da - db)
            diff += 6 if d == 3 else d
    return diff
