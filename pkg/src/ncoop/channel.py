"""Channel realizations for the two-BTS / two-mobile downlink.

Link order everywhere in this package is ``(11, 21, 12, 22)``: index ``jk``
is the link from BTS ``k`` to mobile ``j``.  Noise variance is normalized to
one, so all gains are dimensionless SNR multipliers.

Fading across subcarriers follows a first-order Gauss-Markov (AR(1)) process
on the complex amplitude of every link (and, in MISO mode, of every antenna
entry).  Random numbers come from numpy's PCG64 generator.  The base seed is
expanded with ``numpy.random.SeedSequence(seed).spawn(n)`` into one
independent stream per link (per link and antenna in MISO mode, ordered
link-major); the subcarrier index is the position inside that stream.  Each
stream draws ``L`` standard normal pairs ``(re, im)`` in subcarrier order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import math

import numpy as np

LINKS = ("11", "21", "12", "22")


class ChannelError(ValueError):
    """Invalid channel parameters or degenerate channel input."""


@dataclass(frozen=True)
class NarrowbandGains:
    """Power gains of the four links on one (sub-)channel."""

    g11: float
    g21: float
    g12: float
    g22: float

    def __post_init__(self):
        for name in ("g11", "g21", "g12", "g22"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ChannelError(f"gain {name} must be finite and >= 0, got {v!r}")

    @classmethod
    def from_seq(cls, seq) -> "NarrowbandGains":
        if isinstance(seq, NarrowbandGains):
            return seq
        a = [float(x) for x in seq]
        if len(a) != 4:
            raise ChannelError("expected four gains (g11, g21, g12, g22)")
        return cls(*a)

    def as_array(self) -> np.ndarray:
        return np.array([self.g11, self.g21, self.g12, self.g22])


@dataclass(frozen=True)
class PowerBudget:
    """Per-BTS power limits (narrowband) or per-BTS totals (wideband)."""

    P1: float
    P2: float

    def __post_init__(self):
        for name in ("P1", "P2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ChannelError(f"budget {name} must be finite and >= 0, got {v!r}")

    @classmethod
    def from_seq(cls, seq) -> "PowerBudget":
        if isinstance(seq, PowerBudget):
            return seq
        p1, p2 = (float(x) for x in seq)
        return cls(p1, p2)


def alignment_angle(h_a, h_b) -> float:
    """Angle in ``[0, pi/2]`` between the directions of two complex vectors.

    ``arccos(|h_a^H h_b| / (||h_a|| ||h_b||))``; invariant to complex scaling
    of either argument.
    """
    h_a = np.asarray(h_a, dtype=complex).ravel()
    h_b = np.asarray(h_b, dtype=complex).ravel()
    if h_a.shape != h_b.shape:
        raise ChannelError("vectors must have equal length")
    na = np.linalg.norm(h_a)
    nb = np.linalg.norm(h_b)
    if na == 0 or nb == 0:
        raise ChannelError("alignment angle of a zero vector is undefined")
    c = abs(np.vdot(h_a, h_b)) / (na * nb)
    return float(np.arccos(min(1.0, c)))


@dataclass(frozen=True, eq=False)
class MisoChannel:
    """Complex channel vectors ``h_jk`` (BTS ``k`` -> mobile ``j``), ``Nt >= 2``."""

    h11: np.ndarray
    h21: np.ndarray
    h12: np.ndarray
    h22: np.ndarray

    def __post_init__(self):
        vs = []
        for name in ("h11", "h21", "h12", "h22"):
            v = np.asarray(getattr(self, name), dtype=complex).ravel()
            if not np.all(np.isfinite(v)):
                raise ChannelError(f"{name} has non-finite entries")
            object.__setattr__(self, name, v)
            vs.append(v)
        nt = vs[0].size
        if any(v.size != nt for v in vs):
            raise ChannelError("all channel vectors must have the same length")
        if nt < 2:
            raise ChannelError("MISO channels need Nt >= 2")

    @classmethod
    def from_array(cls, h) -> "MisoChannel":
        h = np.asarray(h, dtype=complex)
        return cls(h[0], h[1], h[2], h[3])

    @property
    def Nt(self) -> int:
        return self.h11.size

    def as_array(self) -> np.ndarray:
        """Stacked vectors, shape ``(4, Nt)`` in link order."""
        return np.stack([self.h11, self.h21, self.h12, self.h22])

    @property
    def gains(self) -> NarrowbandGains:
        g = [float(np.vdot(v, v).real) for v in (self.h11, self.h21, self.h12, self.h22)]
        return NarrowbandGains(*g)

    @property
    def alpha1(self) -> float:
        return alignment_angle(self.h11, self.h21)

    @property
    def alpha2(self) -> float:
        return alignment_angle(self.h12, self.h22)

    def __eq__(self, other):
        if not isinstance(other, MisoChannel):
            return NotImplemented
        return np.array_equal(self.as_array(), other.as_array())


@dataclass(frozen=True, eq=False)
class WidebandChannel:
    """``L`` parallel subcarriers in scalar or MISO mode.

    Scalar mode keeps the complex link amplitudes in ``amplitudes`` (shape
    ``(L, 4)``) when they are known, so coherent baselines can use them; the
    noncoherent schemes only ever look at ``gains``.
    """

    gains: np.ndarray                      # (L, 4) power gains
    mode: str = "scalar"
    vectors: np.ndarray | None = None      # (L, 4, Nt) in MISO mode
    amplitudes: np.ndarray | None = None   # (L, 4) complex, scalar mode
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if g.ndim != 2 or g.shape[1] != 4 or g.shape[0] < 1:
            raise ChannelError("gains must have shape (L, 4) with L >= 1")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ChannelError("gains must be finite and nonnegative")
        object.__setattr__(self, "gains", g)
        if self.mode not in ("scalar", "miso"):
            raise ChannelError(f"unknown channel mode {self.mode!r}")
        if self.mode == "miso":
            if self.vectors is None:
                raise ChannelError("MISO mode needs channel vectors")
            v = np.asarray(self.vectors, dtype=complex)
            if v.ndim != 3 or v.shape[:2] != (g.shape[0], 4) or v.shape[2] < 2:
                raise ChannelError("vectors must have shape (L, 4, Nt) with Nt >= 2")
            object.__setattr__(self, "vectors", v)
        if self.amplitudes is not None:
            a = np.asarray(self.amplitudes, dtype=complex)
            if a.shape != g.shape:
                raise ChannelError("amplitudes must have shape (L, 4)")
            object.__setattr__(self, "amplitudes", a)
        rho = self.meta.get("rho")
        if rho is not None and not (0.0 <= rho < 1.0):
            raise ChannelError("correlation coefficient must lie in [0, 1)")

    @property
    def L(self) -> int:
        return self.gains.shape[0]

    @property
    def Nt(self) -> int | None:
        return None if self.vectors is None else self.vectors.shape[2]

    @property
    def alphas(self) -> np.ndarray:
        """Per-subcarrier ``(alpha1, alpha2)``, shape ``(L, 2)`` (MISO only)."""
        if self.mode != "miso":
            raise ChannelError("alignment angles exist only in MISO mode")
        return miso_alphas(self.vectors)

    def subcarrier(self, l: int):
        if self.mode == "miso":
            return MisoChannel.from_array(self.vectors[l])
        return NarrowbandGains(*self.gains[l])

    def __iter__(self):
        return (self.subcarrier(l) for l in range(self.L))

    def __len__(self):
        return self.L

    @classmethod
    def from_gains(cls, gains, **meta) -> "WidebandChannel":
        g = np.atleast_2d(np.asarray(gains, dtype=float))
        return cls(gains=g, mode="scalar", meta=dict(meta))

    @classmethod
    def from_vectors(cls, vectors, **meta) -> "WidebandChannel":
        v = np.asarray(vectors, dtype=complex)
        if v.ndim == 2:
            v = v[None]
        g = np.sum(np.abs(v) ** 2, axis=2)
        return cls(gains=g, mode="miso", vectors=v, meta=dict(meta))

    def __eq__(self, other):
        if not isinstance(other, WidebandChannel):
            return NotImplemented
        same_v = (self.vectors is None and other.vectors is None) or (
            self.vectors is not None and other.vectors is not None
            and np.array_equal(self.vectors, other.vectors))
        return self.mode == other.mode and np.array_equal(self.gains, other.gains) and same_v

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        doc = {"L": self.L, "mode": self.mode}
        if self.mode == "miso":
            doc["Nt"] = self.Nt
            doc["subcarriers"] = [
                [[[float(z.real), float(z.imag)] for z in vec] for vec in sc]
                for sc in self.vectors
            ]
        else:
            doc["subcarriers"] = self.gains.tolist()
        meta = dict(self.meta)
        if self.amplitudes is not None:
            meta["amplitudes"] = [[[float(z.real), float(z.imag)] for z in row]
                                  for row in self.amplitudes]
        doc["meta"] = meta
        return doc

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc: dict) -> "WidebandChannel":
        try:
            mode = doc["mode"]
            L = int(doc["L"])
            subs = doc["subcarriers"]
        except KeyError as exc:
            raise ChannelError(f"channel document lacks field {exc.args[0]!r}") from None
        if len(subs) != L:
            raise ChannelError(f"channel document declares L={L} but has {len(subs)} subcarriers")
        meta = dict(doc.get("meta", {}))
        amps = meta.pop("amplitudes", None)
        if mode == "miso":
            arr = np.asarray(subs, dtype=float)
            v = arr[..., 0] + 1j * arr[..., 1]
            ch = cls.from_vectors(v, **meta)
            if "Nt" in doc and int(doc["Nt"]) != ch.Nt:
                raise ChannelError("Nt does not match vector lengths")
            return ch
        if mode != "scalar":
            raise ChannelError(f"unknown channel mode {mode!r}")
        a = None
        if amps is not None:
            arr = np.asarray(amps, dtype=float)
            a = arr[..., 0] + 1j * arr[..., 1]
        return cls(gains=np.asarray(subs, dtype=float), mode="scalar", amplitudes=a, meta=meta)

    @classmethod
    def from_json(cls, text: str) -> "WidebandChannel":
        return cls.from_dict(json.loads(text))


def miso_alphas(vectors) -> np.ndarray:
    """Vectorized alignment angles for stacked vectors of shape ``(..., 4, Nt)``."""
    v = np.asarray(vectors, dtype=complex)
    n = np.linalg.norm(v, axis=-1)

    def angle(a, b):
        num = np.abs(np.sum(np.conj(v[..., a, :]) * v[..., b, :], axis=-1))
        den = n[..., a] * n[..., b]
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
        return np.arccos(np.clip(c, 0.0, 1.0))

    return np.stack([angle(0, 1), angle(2, 3)], axis=-1)


def _check_params(L, mean_gains, rho):
    if int(L) != L or L < 1:
        raise ChannelError("L must be a positive integer")
    m = np.asarray(mean_gains, dtype=float)
    if m.shape != (4,):
        raise ChannelError("mean_gains needs four entries (g11, g21, g12, g22)")
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise ChannelError("mean gains must be finite and nonnegative")
    if not (0.0 <= rho < 1.0):
        raise ChannelError(f"correlation coefficient must lie in [0, 1), got {rho}")
    return int(L), m


def _gauss_markov(streams, L, rho, var):
    """One AR(1) unit sequence per stream, scaled to ``var``; shape ``(n, L)``."""
    out = np.empty((len(streams), L), dtype=complex)
    innov = math.sqrt(1.0 - rho * rho)
    for i, ss in enumerate(streams):
        rng = np.random.Generator(np.random.PCG64(ss))
        w = rng.standard_normal((L, 2))
        w = (w[:, 0] + 1j * w[:, 1]) / math.sqrt(2.0)
        c = np.empty(L, dtype=complex)
        c[0] = w[0]
        for l in range(1, L):
            c[l] = rho * c[l - 1] + innov * w[l]
        out[i] = c * math.sqrt(var[i])
    return out


def generate_wideband_scalar(L, mean_gains, rho, seed) -> WidebandChannel:
    """Correlated Rayleigh-faded single-antenna channel over ``L`` subcarriers.

    Each link's complex amplitude is a stationary AR(1) sequence with lag-one
    correlation ``rho`` and variance equal to the link's mean gain, so every
    gain is exponential with that mean.
    """
    L, m = _check_params(L, mean_gains, rho)
    streams = np.random.SeedSequence(int(seed)).spawn(4)
    amps = _gauss_markov(streams, L, rho, m).T                 # (L, 4)
    return WidebandChannel(
        gains=np.abs(amps) ** 2, mode="scalar", amplitudes=amps,
        meta={"mean_gains": m.tolist(), "rho": float(rho), "seed": int(seed)},
    )


def generate_wideband_miso(L, Nt, mean_gains, rho, seed) -> WidebandChannel:
    """Correlated Rayleigh-faded MISO channel.

    Every antenna entry of ``h_jk`` is its own AR(1) sequence with variance
    ``mean_gains[jk]``, hence ``E[g_jk] = Nt * mean_gains[jk]``.  Pass
    ``mean_gain = 1/Nt`` to get unit average link gains.
    """
    if int(Nt) != Nt or Nt < 2:
        raise ChannelError("MISO channels need Nt >= 2")
    L, m = _check_params(L, mean_gains, rho)
    Nt = int(Nt)
    streams = np.random.SeedSequence(int(seed)).spawn(4 * Nt)
    var = np.repeat(m, Nt)
    seq = _gauss_markov(streams, L, rho, var)                  # (4*Nt, L)
    vectors = seq.reshape(4, Nt, L).transpose(2, 0, 1)         # (L, 4, Nt)
    ch = WidebandChannel.from_vectors(
        vectors, mean_gains=m.tolist(), rho=float(rho), seed=int(seed), Nt=Nt)
    return ch
