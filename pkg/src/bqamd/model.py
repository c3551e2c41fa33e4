"""Channel model, complex QR, and deterministic random streams."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constellation import Modulation, bits_to_symbols

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 step: advance by the golden gamma and avalanche."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """A 64-bit seed from which independent substreams are derived.

    ``RngStream(seed).child(snr_index, trial_index)`` always yields the same
    substream, regardless of the order in which children are requested.
    """

    seed: int

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)

    def child(self, *keys: int) -> "RngStream":
        s = self.seed
        for k in keys:
            s = splitmix64(s ^ splitmix64(int(k) & _MASK64))
        return RngStream(s)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


def snr_to_noise_var(snr_db: float, nt: int) -> float:
    """Noise variance per receive antenna for unit-energy symbols and unit-gain taps."""
    if np.isposinf(snr_db):
        return 0.0
    return nt * 10.0 ** (-snr_db / 10.0)


def complex_normal(gen: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """CN(0, var) samples via complex Box-Muller on the uniform stream."""
    u1 = 1.0 - gen.random(shape)  # (0, 1]
    u2 = gen.random(shape)
    return np.sqrt(-var * np.log(u1)) * np.exp(2j * np.pi * u2)


@dataclass
class DetectionInstance:
    H: np.ndarray
    tx_bits: np.ndarray
    x: np.ndarray
    y: np.ndarray
    sigma2: float
    snr_db: float
    modulation: Modulation
    noise: np.ndarray | None = field(default=None, repr=False)

    @property
    def nt(self) -> int:
        return self.H.shape[1]

    @property
    def nr(self) -> int:
        return self.H.shape[0]

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for a in (self.H, self.tx_bits, self.y):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def generate_instance(
    nt: int, nr: int, modulation, snr_db: float, rng: RngStream
) -> DetectionInstance:
    """Draw one Rayleigh channel use ``y = Hx + n``."""
    if nt < 1 or nr < 1:
        raise ValueError(f"antenna counts must be positive, got nt={nt}, nr={nr}")
    mod = Modulation.parse(modulation)
    gen = rng.generator()
    tx_bits = gen.integers(0, 2, size=nt * mod.bits, dtype=np.int8)
    x = bits_to_symbols(tx_bits, mod)
    H = complex_normal(gen, (nr, nt))
    sigma2 = snr_to_noise_var(snr_db, nt)
    n = complex_normal(gen, nr, sigma2)
    y = H @ x + n
    return DetectionInstance(H, tx_bits, x, y, sigma2, float(snr_db), mod, n)


class RankDeficientError(np.linalg.LinAlgError):
    pass


def qr_decompose(A: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Thin Householder QR with a real nonnegative diagonal in R.

    Raises RankDeficientError if a pivot falls below ``tol * ||A||_F``.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or min(A.shape) < 1:
        raise ValueError(f"expected a nonempty matrix, got shape {A.shape}")
    m, n = A.shape
    if n > m:
        raise RankDeficientError(f"{m}x{n} matrix cannot have full column rank")
    R = A.copy()
    vs = []
    scale = np.linalg.norm(A)
    for k in range(n):
        col = R[k:, k]
        alpha = np.linalg.norm(col)
        if alpha <= tol * scale:
            raise RankDeficientError(f"pivot {k} below rank tolerance")
        phase = col[0] / abs(col[0]) if col[0] != 0 else 1.0
        v = col.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        R[k:, k:] -= 2.0 * np.outer(v, v.conj() @ R[k:, k:])
        vs.append(v)
    Q = np.eye(m, n, dtype=complex)
    for k in reversed(range(n)):
        v = vs[k]
        Q[k:, :] -= 2.0 * np.outer(v, v.conj() @ Q[k:, :])
    R = np.triu(R[:n, :])
    # Householder leaves diag(R) = -phase*alpha; rotate each row to make it real positive.
    d = np.diag(R)
    ph = d / np.abs(d)
    R = R * ph.conj()[:, None]
    Q = Q * ph[None, :]
    R[np.diag_indices(n)] = np.abs(d)
    return Q, R
