"""AC magnetometry: phase response to a synchronized AC field, photon
shot-noise readout, minimal detectable field and sensitivity-vs-time scans.

Conventions used throughout the pipeline:
  * the ideal signal is s = cos(dPhi + theta0), and the sensor operates at
    the quadrature point theta0 = pi/2 where |ds/dPhi| = 1;
  * sigma_sn is quoted on the contrast-weighted scale y = contrast * s, the
    same scale as the slope dS = contrast * |d dPhi / dB|, so that
    dB_min = sigma_sn / dS without extra factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import sequence as sq
from .field import GAMMA_E, FieldModel, NVParameters, RngSpec, SinusoidAC, signed_phase
from .fit import DecayFit, fit_power_law

#: laser polarization/readout dead time added to every shot, seconds
DEFAULT_OVERHEAD = 2e-6


@dataclass(frozen=True)
class ReadoutModel:
    """Scalar photon-counting readout.

    photons_per_shot is the mean detected photon number for the bright
    (m_s = 0) state; contrast is the fractional fluorescence dip of the dark
    state.  Both are artifact assumptions, overridable in config.
    """

    photons_per_shot: float = 0.03
    contrast: float = 0.3
    shots_per_point: int = 100_000
    overhead: float = DEFAULT_OVERHEAD  # s per shot on top of the sequence

    def __post_init__(self):
        if not (0 < self.contrast < 1):
            raise ValueError("contrast must be in (0, 1)")
        if self.photons_per_shot <= 0:
            raise ValueError("photons_per_shot must be positive")
        if self.shots_per_point <= 0:
            raise ValueError("shots_per_point must be positive")

    def mean_photons(self, signal: float) -> float:
        """Expected photons per shot when the ideal signal is cos = signal."""
        return self.photons_per_shot * (1.0 - 0.5 * self.contrast * (1.0 - signal))

    def sigma_sn(self, signal: float, shots: float) -> float:
        """Shot-noise std-dev on the contrast-weighted signal scale."""
        lam = self.mean_photons(signal)
        return (2.0 / self.photons_per_shot) * math.sqrt(lam / shots)


@dataclass
class SensitivityResult:
    times: np.ndarray  # total measurement time per point, s
    delta_b_min: np.ndarray  # Tesla
    sigma_sn: np.ndarray
    slope: float  # signal per Tesla
    fit: DecayFit  # coefficient k in T*sqrt(s)

    @property
    def k_nt_per_sqrt_hz(self) -> float:
        return self.fit.params["coefficient"] * 1e9

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("total_time_s,delta_b_min_T,sigma_sn,slope_per_T\n")
            for t, b, s in zip(self.times, self.delta_b_min, self.sigma_sn):
                fh.write(f"{float(t)!r},{float(b)!r},{float(s)!r},{float(self.slope)!r}\n")


def matched_ac(sequence: sq.PulseSequence, amplitude: float) -> SinusoidAC:
    """The AC field a sequence is synchronized to.

    Hahn: f = 1/(2 tau), sine phase (zero field at t = 0).  CPMG with base
    interval tau: f = 1/(4 tau), cosine phase, so the zeros fall on the pulse
    instants and every inter-pulse window accumulates with the same sign.
    """
    if sequence.kind == "fid":
        return SinusoidAC(amplitude, 1.0 / (2.0 * sequence.total_time), 0.0)
    if sequence.kind == "hahn" or (sequence.kind == "cpmg" and sequence.n_pulses == 1):
        tau = sequence.total_time / 2.0
        return SinusoidAC(amplitude, 1.0 / (2.0 * tau), 0.0)
    if sequence.kind == "cpmg":
        tau = sequence.total_time / (2.0 * sequence.n_pulses)
        return SinusoidAC(amplitude, 1.0 / (4.0 * tau), math.pi / 2.0)
    raise ValueError(f"no matched AC field for sequence kind {sequence.kind!r}")


def phase_response(
    sequence: sq.PulseSequence, ac: SinusoidAC, nv: NVParameters = NVParameters()
) -> float:
    """Signed phase picked up from an AC field under the sequence's toggling.

    Closed form; for the matched field this is 4 gamma b tau / pi (Hahn) and
    4 n gamma b tau / pi (CPMG-n).
    """
    if sequence.kind not in ("fid", "hahn", "cpmg", "custom"):
        raise ValueError("phase_response needs a free-evolution sequence")
    tog = sq.toggling(sequence)
    return signed_phase(FieldModel.of(ac), tog, gamma_e=nv.gamma_e)


def simulate_readout(
    signal: float,
    readout: ReadoutModel,
    rng: Optional[RngSpec] = None,
    index: int = 0,
):
    """Estimate the ideal signal from Poisson photon counts.

    Returns (estimate, sigma_sn).  With ``rng=None`` the analytic
    infinite-shot path returns the signal itself with its shot-noise sigma.
    sigma_sn is on the contrast-weighted scale (see module docstring).
    """
    if abs(signal) > 1:
        raise ValueError("|signal| must be <= 1")
    shots = readout.shots_per_point
    sigma = readout.sigma_sn(signal, shots)
    if rng is None:
        return float(signal), sigma
    g = rng.generator(index)
    counts = g.poisson(readout.mean_photons(signal) * shots)
    rate = counts / (shots * readout.photons_per_shot)
    estimate = 1.0 - 2.0 * (1.0 - rate) / readout.contrast
    return float(estimate), sigma


def signal_slope(
    sequence: sq.PulseSequence,
    readout: ReadoutModel,
    nv: NVParameters = NVParameters(),
    envelope: float = 1.0,
) -> float:
    """Contrast-weighted signal slope |dS/dB| at the quadrature point, per Tesla.

    ``envelope`` multiplies in any coherence decay of the sequence at its
    duration (1.0 ignores decoherence).
    """
    dphi_db = abs(phase_response(sequence, matched_ac(sequence, 1.0), nv))
    return readout.contrast * envelope * dphi_db


def min_detectable_field(slope: float, sigma_sn: float) -> float:
    """dB_min = sigma_sn / dS."""
    if slope <= 0:
        raise ValueError("signal slope must be positive")
    return sigma_sn / slope


def sensitivity_scan(
    sequence: sq.PulseSequence,
    readout: ReadoutModel,
    total_times,
    rng: Optional[RngSpec] = None,
    nv: NVParameters = NVParameters(),
    envelope: float = 1.0,
    ac_amplitude_jitter: float = 0.0,
) -> SensitivityResult:
    """dB_min versus total measurement time, with a k/sqrt(t) fit.

    Each point spends its whole budget on repeated shots of duration
    (sequence time + overhead).  With ``rng=None`` the scan is analytic
    (exact -1/2 exponent); otherwise the readout is Poisson-sampled per point.
    ``ac_amplitude_jitter`` optionally inflates sigma_sn by a relative
    AC-amplitude fluctuation floor, mimicking an unstable test field.
    """
    total_times = np.asarray(total_times, dtype=float)
    if total_times.size < 4:
        raise ValueError("need at least 4 scan points")
    shot_duration = sequence.total_time + readout.overhead
    slope = signal_slope(sequence, readout, nv, envelope)
    sigmas = np.empty_like(total_times)
    dbs = np.empty_like(total_times)
    for i, t in enumerate(total_times):
        shots = t / shot_duration
        if rng is None:
            sigma = readout.sigma_sn(0.0, shots)
        else:
            ro = ReadoutModel(
                readout.photons_per_shot, readout.contrast,
                max(1, int(round(shots))), readout.overhead,
            )
            _, sigma = simulate_readout(0.0, ro, rng, index=i)
        if ac_amplitude_jitter > 0.0:
            sigma = math.hypot(sigma, ac_amplitude_jitter * readout.contrast)
        sigmas[i] = sigma
        dbs[i] = min_detectable_field(slope, sigma)
    fit = fit_power_law((total_times, dbs), fixed_exponent=-0.5)
    return SensitivityResult(total_times, dbs, sigmas, slope, fit)
