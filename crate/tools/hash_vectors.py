#!/usr/bin/env python3
"""Reference implementation of the context hash; prints the test-vector fixture.

Usage: python3 tools/hash_vectors.py > crates/core/tests/fixtures/context_hash_vectors.txt
"""

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def fmix(x):
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & MASK
    x ^= x >> 31
    return x


def context_hash(tokens, key):
    h = fmix((key + GOLDEN) & MASK)
    for t in tokens:
        h = fmix(((h ^ t) + GOLDEN) & MASK)
    return h


CASES = [
    (0, []),
    (1, []),
    (0, [5]),
    (1, [5]),
    (42, [0]),
    (42, [255]),
    (42, [256]),
    (42, [3, 7]),
    (42, [7, 3]),
    (0xDEADBEEF, [1, 2, 3, 4]),
    (MASK, [0]),
    (MASK, [1023, 1024]),
    (12345678901234567, [65535, 0, 17]),
]


def main():
    print("# key context hash  (decimal key, comma-separated tokens or '-', hex hash)")
    for key, tokens in CASES:
        ctx = ",".join(str(t) for t in tokens) if tokens else "-"
        print(f"{key} {ctx} {context_hash(tokens, key):016x}")


if __name__ == "__main__":
    main()
