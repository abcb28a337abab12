"""Receipt sealing: public-key encryption of (time, data, case) tuples.

``X25519Sealer`` is an ephemeral-static X25519 box: a fresh key pair per
message, HKDF-SHA256 over the shared secret, ChaCha20-Poly1305 for the body.
``IdentitySealer`` leaves the plaintext in the clear and exists for tests and
benchmarks where the crypto cost would drown out the contract logic.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Protocol

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .core import PublicKey

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw
_RAW_PRIV = serialization.PrivateFormat.Raw
_NO_ENC = serialization.NoEncryption()
_INFO = b"provledger-seal-v1"


@dataclass(frozen=True)
class SealedPayload:
    recipient: bytes  # fingerprint of the recipient key
    ciphertext: bytes


def encode_receipt(time: int, data: bytes, case: str | None) -> bytes:
    return json.dumps({"time": time, "data": data.hex(), "case": case},
                      sort_keys=True, separators=(",", ":")).encode()


def decode_receipt(plaintext: bytes) -> tuple[int, bytes, str | None]:
    d = json.loads(plaintext)
    return d["time"], bytes.fromhex(d["data"]), d["case"]


class Sealer(Protocol):
    def seal(self, recipient: PublicKey, plaintext: bytes) -> SealedPayload: ...

    def open(self, payload: SealedPayload, private_key: bytes) -> bytes: ...


class IdentitySealer:
    def seal(self, recipient: PublicKey, plaintext: bytes) -> SealedPayload:
        return SealedPayload(recipient.fingerprint, plaintext)

    def open(self, payload: SealedPayload, private_key: bytes) -> bytes:
        return payload.ciphertext


def generate_keypair() -> tuple[bytes, PublicKey]:
    """Return (raw private key, public key) for a new X25519 identity."""
    sk = X25519PrivateKey.generate()
    pk = sk.public_key().public_bytes(_RAW, _RAW_PUB)
    return sk.private_bytes(_RAW, _RAW_PRIV, _NO_ENC), PublicKey(pk)


def public_from_private(private_key: bytes) -> PublicKey:
    sk = X25519PrivateKey.from_private_bytes(private_key)
    return PublicKey(sk.public_key().public_bytes(_RAW, _RAW_PUB))


def _derive(shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    hkdf = HKDF(algorithm=hashes.SHA256(), length=32, salt=eph_pub + recipient_pub, info=_INFO)
    return hkdf.derive(shared)


class X25519Sealer:
    def seal(self, recipient: PublicKey, plaintext: bytes) -> SealedPayload:
        eph = X25519PrivateKey.generate()
        eph_pub = eph.public_key().public_bytes(_RAW, _RAW_PUB)
        shared = eph.exchange(X25519PublicKey.from_public_bytes(recipient.data))
        key = _derive(shared, eph_pub, recipient.data)
        nonce = os.urandom(12)
        body = ChaCha20Poly1305(key).encrypt(nonce, plaintext, recipient.fingerprint)
        return SealedPayload(recipient.fingerprint, eph_pub + nonce + body)

    def open(self, payload: SealedPayload, private_key: bytes) -> bytes:
        sk = X25519PrivateKey.from_private_bytes(private_key)
        own_pub = sk.public_key().public_bytes(_RAW, _RAW_PUB)
        eph_pub, nonce, body = payload.ciphertext[:32], payload.ciphertext[32:44], payload.ciphertext[44:]
        shared = sk.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        key = _derive(shared, eph_pub, own_pub)
        return ChaCha20Poly1305(key).decrypt(nonce, body, payload.recipient)
