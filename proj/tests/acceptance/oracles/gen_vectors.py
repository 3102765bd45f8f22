#!/usr/bin/env python3
"""Freezes reference data for the acceptance binary.

Uses the `cryptography` package (OpenSSL-backed) as an implementation that
shares no code with the C++ cipher. Rerun only to regenerate the files:

    python3 tests/acceptance/oracles/gen_vectors.py tests/acceptance/data
"""
import base64
import json
import random
import sys
import unicodedata
from pathlib import Path

from cryptography.hazmat.primitives import padding
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

PREFIX = {"PERSON": "Person", "LOCATION": "Location", "PHONE": "Phone", "ID_NUMBER": "ID",
          "BANK_CARD": "Card", "DATE": "Date", "ORG": "Org", "OTHER": "Ent"}
TOKEN_KEY = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")


def ecb(key, data):
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(data) + enc.finalize()


def aes_vectors(rng):
    out = []
    for key_len in (16, 24, 32):
        for _ in range(40):
            key = bytes(rng.randrange(256) for _ in range(key_len))
            pt = bytes(rng.randrange(256) for _ in range(16 * rng.randint(1, 4)))
            out.append({"key": key.hex(), "plaintext": pt.hex(), "ciphertext": ecb(key, pt).hex()})
    return out


def surface(rng):
    pools = ["abcdefghijklmnopqrstuvwxyz", "ABCDEFGHIJKLMNOPQRSTUVWXYZ", "0123456789",
             "张王李赵刘陈杨黄周吴北京上海杭州", "éüßøñ", " -."]
    while True:
        s = "".join(rng.choice(rng.choice(pools)) for _ in range(rng.randint(1, 40)))
        s = unicodedata.normalize("NFC", s).strip()
        if s:
            return s


def tokens(rng, n):
    out = []
    for _ in range(n):
        s = surface(rng)
        t = rng.choice(list(PREFIX))
        padder = padding.PKCS7(128).padder()
        data = padder.update(s.encode()) + padder.finalize()
        payload = base64.b64encode(ecb(TOKEN_KEY, data)).decode()
        out.append({"surface": s, "type": t, "rendering": f"{PREFIX[t]}_[{payload}]"})
    return out


def main(dest):
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20240611)
    (dest / "aes_vectors.json").write_text(json.dumps(aes_vectors(rng), indent=1) + "\n")
    (dest / "tokens_ecb.json").write_text(
        json.dumps({"key": TOKEN_KEY.hex(), "tokens": tokens(rng, 1000)}, ensure_ascii=False, indent=1) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data")
