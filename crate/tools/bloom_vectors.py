#!/usr/bin/env python3
"""Reference implementation of the flow-key Bloom hash.

Emits the cross-implementation conformance fixture consumed by the Rust
test suite (crates/core/tests/data/bloom_vectors.json).

    h  = fmix64(0x243F6A8885A308D3 + hash_id * 0x9E3779B97F4A7C15)
    h  = fmix64(h ^ a_ip);  h = fmix64(h ^ b_ip)
    h  = fmix64(h ^ (a_port << 16 | b_port))
    ix = h & (m - 1)

fmix64 is the MurmurHash3 64-bit finalizer. IPs are big-endian u32.
"""
import json
import random
import sys

MASK = (1 << 64) - 1


def fmix64(x):
    x ^= x >> 33
    x = (x * 0xFF51AFD7ED558CCD) & MASK
    x ^= x >> 33
    x = (x * 0xC4CEB9FE1A85EC53) & MASK
    x ^= x >> 33
    return x


def ip_u32(s):
    a, b, c, d = (int(x) for x in s.split("."))
    return (a << 24) | (b << 16) | (c << 8) | d


def bloom_hash(key, hash_id, m):
    a_ip, b_ip, a_port, b_port = key
    h = fmix64((0x243F6A8885A308D3 + hash_id * 0x9E3779B97F4A7C15) & MASK)
    for w in (ip_u32(a_ip), ip_u32(b_ip), (a_port << 16) | b_port):
        h = fmix64(h ^ w)
    return h & (m - 1)


def main():
    rng = random.Random(20240601)
    keys = [
        ["10.0.1.1", "10.0.3.3", 1000, 80],
        ["10.0.1.1", "10.0.3.3", 1000, 81],
        ["10.0.1.1", "10.0.3.3", 50000, 5001],
        ["10.0.2.2", "10.0.7.7", 49152, 22],
        ["0.0.0.0", "0.0.0.0", 0, 0],
        ["255.255.255.255", "255.255.255.255", 65535, 65535],
    ]
    for _ in range(24):
        keys.append([
            ".".join(str(rng.randrange(256)) for _ in range(4)),
            ".".join(str(rng.randrange(256)) for _ in range(4)),
            rng.randrange(65536),
            rng.randrange(65536),
        ])
    vectors = []
    for key in keys:
        for hash_id in (1, 2, 3):
            for m in (1024, 4096, 65536):
                vectors.append({
                    "key": key,
                    "hash_id": hash_id,
                    "m": m,
                    "expected_index": bloom_hash(key, hash_id, m),
                })
    sys.stdout.write("[\n")
    sys.stdout.write(",\n".join(" " + json.dumps(v) for v in vectors))
    sys.stdout.write("\n]\n")


if __name__ == "__main__":
    main()
