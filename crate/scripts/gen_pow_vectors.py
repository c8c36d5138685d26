#!/usr/bin/env python3
"""Generate fixtures/pow_vectors.json with hashlib, independently of the Rust code.

Preimage = lowercase hex of the 16-byte salt followed by the decimal nonce,
encoded as UTF-8, no separator.
"""
import hashlib
import json
import random
import sys


def preimage(salt: bytes, nonce: int) -> bytes:
    return (salt.hex() + str(nonce)).encode("utf-8")


def lzb(digest: bytes) -> int:
    bits = 0
    for b in digest:
        if b == 0:
            bits += 8
            continue
        bits += 8 - b.bit_length()
        break
    return bits


def row(salt: bytes, nonce: int) -> dict:
    d = hashlib.sha256(preimage(salt, nonce)).digest()
    return {
        "salt_hex": salt.hex(),
        "nonce": nonce,
        "preimage": preimage(salt, nonce).decode(),
        "digest_hex": d.hex(),
        "leading_zero_bits": lzb(d),
    }


def min_nonce(salt: bytes, bits: int, limit: int = 1 << 16):
    for n in range(limit):
        if lzb(hashlib.sha256(preimage(salt, n)).digest()) >= bits:
            return n
    return None


def main(out: str) -> None:
    rng = random.Random(20240611)
    salts = [bytes(16), bytes([0xFF] * 16), bytes(range(0x01, 0x11)),
             bytes.fromhex("0123456789abcdef0123456789abcdef")]
    salts += [bytes(rng.getrandbits(8) for _ in range(16)) for _ in range(12)]
    nonces = [0, 1, 9, 10, 255, 65535, 65536, 1 << 32, (1 << 53) - 1]
    vectors = [row(s, n) for s in salts[:4] for n in nonces]
    vectors += [row(s, rng.randrange(0, 1 << 40)) for s in salts[4:]]
    solutions = []
    for s in salts:
        for bits in (4, 8, 10):
            n = min_nonce(s, bits)
            if n is not None:
                solutions.append({"salt_hex": s.hex(), "difficulty_bits": bits,
                                  "min_nonce": n,
                                  "digest_hex": row(s, n)["digest_hex"]})
    doc = {
        "version": 1,
        "encoding": "utf8(lowercase_hex(salt) || decimal(nonce))",
        "hash": "sha256",
        "vectors": vectors,
        "min_solutions": solutions,
    }
    with open(out, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/pow_vectors.json")
