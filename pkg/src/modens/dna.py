"""8-mer DNA encoding and reverse-complement canonicalization.

Sequences are length-8 strings over A/C/G/T. One-hot encoding is
position-major: 8 blocks of 4 entries ordered A, C, G, T. A sequence and
its reverse complement describe the same double-stranded molecule, so the
canonical universe keeps the lexicographically smaller of each pair.
"""

from __future__ import annotations

import functools

import numpy as np

from .errors import ParseError

ALPHABET = "ACGT"
_INDEX = {c: i for i, c in enumerate(ALPHABET)}
_COMPLEMENT = {"A": "T", "C": "G", "G": "C", "T": "A"}
SEQUENCE_LENGTH = 8
ENCODED_LENGTH = 4 * SEQUENCE_LENGTH


def _check(sequence: str) -> str:
    if len(sequence) != SEQUENCE_LENGTH:
        raise ParseError(f"expected a length-{SEQUENCE_LENGTH} sequence, got {sequence!r}")
    for c in sequence:
        if c not in _INDEX:
            raise ParseError(f"invalid base {c!r} in {sequence!r}")
    return sequence


def encode_dna(sequence: str) -> np.ndarray:
    """One-hot encode a sequence into a length-32 float vector."""
    _check(sequence)
    out = np.zeros(ENCODED_LENGTH)
    for pos, c in enumerate(sequence):
        out[4 * pos + _INDEX[c]] = 1.0
    return out


def decode_dna(onehot: np.ndarray) -> str:
    """Inverse of ``encode_dna``."""
    onehot = np.asarray(onehot)
    if onehot.shape != (ENCODED_LENGTH,):
        raise ParseError(f"expected shape ({ENCODED_LENGTH},), got {onehot.shape}")
    chars = []
    for pos in range(SEQUENCE_LENGTH):
        block = onehot[4 * pos:4 * pos + 4]
        hot = np.flatnonzero(block == 1.0)
        if len(hot) != 1 or block.sum() != 1.0:
            raise ParseError(f"block {pos} is not one-hot: {block}")
        chars.append(ALPHABET[hot[0]])
    return "".join(chars)


def reverse_complement(sequence: str) -> str:
    _check(sequence)
    return "".join(_COMPLEMENT[c] for c in reversed(sequence))


def canonical(sequence: str) -> str:
    """The representative of {s, revcomp(s)}: the lexicographically smaller."""
    rc = reverse_complement(sequence)
    return sequence if sequence <= rc else rc


def gc_content(sequence: str) -> float:
    """Fraction of positions that are G or C."""
    _check(sequence)
    return sum(1 for c in sequence if c in "GC") / SEQUENCE_LENGTH


def gc_content_onehot(points: np.ndarray) -> np.ndarray:
    """GC fraction per row of one-hot encoded sequences."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    blocks = points.reshape(points.shape[0], SEQUENCE_LENGTH, 4)
    return blocks[:, :, 1:3].sum(axis=(1, 2)) / SEQUENCE_LENGTH


@functools.lru_cache(maxsize=1)
def enumerate_canonical_8mers() -> tuple[str, ...]:
    """All canonical 8-mers, lexicographically sorted (32,896 sequences)."""
    out = []
    for code in range(4 ** SEQUENCE_LENGTH):
        chars = []
        c = code
        for _ in range(SEQUENCE_LENGTH):
            chars.append(ALPHABET[c & 3])
            c >>= 2
        seq = "".join(reversed(chars))
        if seq <= reverse_complement(seq):
            out.append(seq)
    return tuple(out)


@functools.lru_cache(maxsize=1)
def encoded_canonical_universe() -> np.ndarray:
    """One-hot matrix of the canonical universe, rows aligned with the enumeration."""
    universe = enumerate_canonical_8mers()
    out = np.zeros((len(universe), ENCODED_LENGTH))
    for i, seq in enumerate(universe):
        for pos, c in enumerate(seq):
            out[i, 4 * pos + _INDEX[c]] = 1.0
    return out
