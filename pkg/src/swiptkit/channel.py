"""Monte Carlo link evaluation: AWGN sampling, ML and learned-decoder SER,
delivered-power measurement, rate-power sweeps, and QAM references.

SNR convention: snr = P_a / sigma^2 where sigma^2 is the total variance of
the complex noise per symbol (so "SNR = 50" is 16.98 dB).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .codebook import Codebook, OnOffBlockCode
from .constellation import Constellation
from .harvester import _harvest_fn

_CHUNK = 100_000


def qfunc(x) -> np.ndarray | float:
    """Gaussian tail probability Q(x)."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


@dataclass
class ChannelSpec:
    """AWGN channel at linear ``snr`` for designs of average power P_a."""

    snr: float
    p_a_uw: float
    seed: int = 0

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError("snr must be positive")

    @property
    def sigma_sq(self) -> float:
        return self.p_a_uw / self.snr


@dataclass
class TradeoffPoint:
    """One row of a rate-power sweep."""

    control: float
    ser: float
    pd_uw: float
    ci_halfwidth: float


@dataclass
class SerResult:
    ser: float
    ci_halfwidth: float
    trials: int
    errors: int
    degenerate: bool = False


def awgn(x: np.ndarray, spec: ChannelSpec, rng) -> np.ndarray:
    """Add complex Gaussian noise, variance sigma_sq/2 per real dimension."""
    x = np.asarray(x, dtype=complex)
    if spec.sigma_sq == 0.0:
        return x.copy()
    sd = math.sqrt(spec.sigma_sq / 2.0)
    return x + rng.normal(0.0, sd, x.shape) + 1j * rng.normal(0.0, sd, x.shape)


def design_codewords(design) -> np.ndarray:
    """Codeword matrix (M, n) of any design object (or a raw array)."""
    if isinstance(design, Constellation):
        return design.points.reshape(-1, 1)
    if isinstance(design, Codebook):
        return design.codewords
    if isinstance(design, OnOffBlockCode):
        return design.codewords()
    cw = np.asarray(design, dtype=complex)
    return cw.reshape(-1, 1) if cw.ndim == 1 else cw


def _chunk_rngs(seed: int, trials: int):
    n_chunks = (trials + _CHUNK - 1) // _CHUNK
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(_CHUNK, trials - i * _CHUNK) for i in range(n_chunks)]
    return [(np.random.default_rng(c), s) for c, s in zip(children, sizes)]


def binomial_ci(ser: float, trials: int) -> float:
    return 3.0 * math.sqrt(max(ser * (1.0 - ser), 0.0) / trials)


def ser_mc(design, spec: ChannelSpec, trials: int, decoder=None) -> SerResult:
    """Symbol (message) error rate by Monte Carlo.

    Uniform messages, AWGN, minimum-distance decoding (ML under AWGN); pass
    a decoder network to use max-softmax decisions instead. A fully
    degenerate design (all codewords identical) short-circuits to the
    expected error rate with a flag.
    """
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    cw = design_codewords(design)
    m = cw.shape[0]
    if m >= 2:
        spread = np.max(np.abs(cw - cw[0]))
        if spread == 0.0:
            ser = (m - 1) / m
            return SerResult(ser, binomial_ci(ser, trials), trials,
                             int(round(ser * trials)), degenerate=True)

    errors = 0
    for rng, size in _chunk_rngs(spec.seed, trials):
        msg = rng.integers(0, m, size)
        y = awgn(cw[msg], spec, rng)
        if decoder is None:
            # |y - c|^2 minimized; expanding avoids the (B, M, n) tensor
            d = (np.abs(y[:, None, :] - cw[None, :, :]) ** 2).sum(axis=2)
            dec = np.argmin(d, axis=1)
        else:
            dec = decoder(y)
        errors += int(np.sum(dec != msg))
    ser = errors / trials
    return SerResult(ser, binomial_ci(ser, trials), trials, errors)


def delivered_power_mc(design, spec: ChannelSpec, harvester, trials: int) -> float:
    """Mean harvested power per symbol over AWGN trials."""
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    cw = design_codewords(design)
    m, n = cw.shape
    f = _harvest_fn(harvester)
    sums = []
    for rng, size in _chunk_rngs(spec.seed, trials):
        msg = rng.integers(0, m, size)
        y = awgn(cw[msg], spec, rng)
        sums.append(float(np.sum(np.asarray(f(np.abs(y) ** 2)))))
    return math.fsum(sums) / (trials * n)


def delivered_power_noiseless(design, harvester) -> float:
    """Exact enumeration of the per-symbol mean harvested power."""
    cw = design_codewords(design)
    f = _harvest_fn(harvester)
    return float(np.mean(np.asarray(f(np.abs(cw) ** 2))))


def rp_sweep(designer, controls, spec: ChannelSpec, harvester,
             trials: int) -> list[TradeoffPoint]:
    """Evaluate (SER, delivered power) per control value, rows in order.

    Each point gets independent substreams derived from the spec seed, so
    the sweep is deterministic per (seed, trials).
    """
    controls = list(controls)
    if not controls:
        raise ValueError("controls must be nonempty")
    rows = []
    for i, c in enumerate(controls):
        design = designer(c)
        pt_seed = np.random.SeedSequence((spec.seed, i)).generate_state(1)[0]
        pt_spec = ChannelSpec(snr=spec.snr, p_a_uw=spec.p_a_uw, seed=int(pt_seed))
        res = ser_mc(design, pt_spec, trials)
        pd = delivered_power_mc(design, pt_spec, harvester, trials)
        rows.append(TradeoffPoint(control=float(c), ser=res.ser, pd_uw=pd,
                                  ci_halfwidth=res.ci_halfwidth))
    return rows


def qam_reference(m: int, p_a_uw: float) -> Constellation:
    """Square QAM scaled to average power P_a; supports M in {4, 16, 64}."""
    if m not in (4, 16, 64):
        raise ValueError("supported QAM sizes: 4, 16, 64")
    side = int(math.isqrt(m))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    pts = pts * math.sqrt(p_a_uw / float(np.mean(np.abs(pts) ** 2)))
    return Constellation(points=pts, m=m, p_a_uw=p_a_uw, rho=0.0)


def write_sweep_csv(path, points: list[TradeoffPoint], snr_db: float,
                    trials: int, seed: int, header_comment: str | None = None) -> None:
    """Sweep CSV: control,ser,ci,pd_uw,snr_db,trials,seed."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["control", "ser", "ci", "pd_uw", "snr_db", "trials", "seed"])
        for p in points:
            w.writerow([repr(p.control), repr(p.ser), repr(p.ci_halfwidth),
                        repr(p.pd_uw), repr(snr_db), trials, seed])
