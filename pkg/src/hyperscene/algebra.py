"""Holographic reduced representation algebra on real-valued hypervectors.

Binding is circular convolution, computed as an elementwise product in the
frequency domain. Superposition is plain elementwise addition. The approximate
inverse of a vector under binding is its index-reversal involution, which is an
exact inverse for unitary vectors. Axis vectors are constructed with a
unit-magnitude spectrum so that fractional exponents (continuous positions) are
well defined, real-valued, and obey the group law X^a (*) X^b = X^(a+b).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEFAULT_DIM",
    "HyperVector",
    "UnitaryAxisVector",
    "bind",
    "derive_seed",
    "fractional_power",
    "identity_vector",
    "involution",
    "make_unitary_axis",
    "random_sp",
    "similarity",
    "superpose",
    "unbind",
]

DEFAULT_DIM = 1024

# Hypervectors are plain 1-d float arrays; every operation validates shape
# instead of wrapping them in a class.
HyperVector = np.ndarray


def derive_seed(root: int, *tags: object) -> int:
    """Derive a stable 64-bit sub-seed from a root seed and a tag sequence.

    Hash-based so the result depends only on the values, never on call order.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root)).encode())
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest(), "big")


def _check_vector(v: np.ndarray, name: str = "vector") -> None:
    if not isinstance(v, np.ndarray) or v.ndim != 1:
        raise ValueError(f"{name} must be a 1-d array")
    if v.shape[0] < 2:
        raise ValueError(f"{name} must have dimension >= 2, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite components")


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


def identity_vector(d: int) -> HyperVector:
    """Binding identity: a one followed by zeros."""
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    e = np.zeros(d)
    e[0] = 1.0
    return e


def random_sp(d: int, seed: int) -> HyperVector:
    """Draw a random unit-norm semantic pointer of dimension d.

    Components are i.i.d. Gaussian before normalization, so two independent
    draws are nearly orthogonal in high dimension.
    """
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class UnitaryAxisVector:
    """A unitary base vector together with its cached (full) DFT spectrum.

    Every spectrum coefficient has magnitude one, the DC coefficient is +1,
    and (for even d) so is the Nyquist coefficient; both are forced real so
    that fractional powers stay real-valued. Treated as immutable after
    construction.
    """

    base: HyperVector
    spectrum: np.ndarray

    @property
    def d(self) -> int:
        return self.base.shape[0]


def make_unitary_axis(d: int, seed: int) -> UnitaryAxisVector:
    """Construct a random unitary axis vector of dimension d.

    Free spectrum phases are drawn uniformly from (-pi, pi); conjugate
    symmetry makes the time-domain base real with unit L2 norm.
    """
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    rng = np.random.default_rng(seed)
    half = (d - 1) // 2
    spectrum = np.ones(d, dtype=np.complex128)
    phases = rng.uniform(-np.pi, np.pi, half)
    spectrum[1 : half + 1] = np.exp(1j * phases)
    if half > 0:
        spectrum[-half:] = np.conj(spectrum[half:0:-1])
    if d % 2 == 0:
        # A -1 here would turn fractional powers complex; +1 keeps them real.
        spectrum[d // 2] = 1.0
    base = np.fft.ifft(spectrum).real
    return UnitaryAxisVector(base=base, spectrum=spectrum)


def bind(a: HyperVector, b: HyperVector) -> HyperVector:
    """Bind two hypervectors by circular convolution."""
    _check_vector(a, "a")
    _check_vector(b, "b")
    _check_same_dim(a, b)
    d = a.shape[0]
    return np.fft.irfft(np.fft.rfft(a) * np.fft.rfft(b), n=d)


def involution(a: HyperVector) -> HyperVector:
    """Index-reversal involution: the approximate inverse under binding."""
    _check_vector(a, "a")
    return np.concatenate((a[:1], a[:0:-1]))


def unbind(m: HyperVector, key: HyperVector) -> HyperVector:
    """Unbind key from m by binding with the involution of key."""
    return bind(m, involution(key))


def fractional_power(axis: UnitaryAxisVector, exponent: float) -> HyperVector:
    """Raise a unitary axis vector to a real exponent.

    Implemented by exponentiating the cached spectrum, which multiplies every
    phase by the exponent. Exponent 0 yields the binding identity; exponent 1
    yields the base vector.
    """
    if not np.isfinite(exponent):
        raise ValueError(f"exponent must be finite, got {exponent}")
    return np.fft.ifft(axis.spectrum**exponent).real


def superpose(vectors: list[HyperVector]) -> HyperVector:
    """Sum a non-empty list of same-dimension hypervectors. No normalization."""
    if len(vectors) == 0:
        raise ValueError("superpose needs at least one vector")
    out = np.array(vectors[0], dtype=float, copy=True)
    _check_vector(out, "vectors[0]")
    for v in vectors[1:]:
        _check_vector(v, "vector")
        _check_same_dim(out, v)
        out += v
    return out


def similarity(a: HyperVector, b: HyperVector, kind: str = "cosine") -> float:
    """Similarity between two hypervectors.

    kind="dot" is used for cleanup ranking, kind="cosine" for thresholded
    decisions. The cosine of a zero vector against anything is defined as 0.
    """
    _check_vector(a, "a")
    _check_vector(b, "b")
    _check_same_dim(a, b)
    dot = float(np.dot(a, b))
    if kind == "dot":
        return dot
    if kind == "cosine":
        na = np.linalg.norm(a)
        nb = np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            return 0.0
        return dot / float(na * nb)
    raise ValueError(f"unknown similarity kind: {kind!r}")
