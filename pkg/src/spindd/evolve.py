"""Coherence decay curves by Monte Carlo phase averaging, plus rotating-frame
Bloch evolution for spin locking and finite-error pulses.

The free-evolution signal at total time T is mean_i cos(dphi_i) times the
spin-lattice envelope exp(-T/T1).  Trajectories are independent work units;
aggregation is chunked with a fixed chunk size and reduced in index order, so
results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from . import sequence as sq
from .field import (
    GAMMA_E,
    FieldModel,
    NVParameters,
    OrnsteinUhlenbeck,
    QuasiStaticGaussian,
    RngSpec,
    ou_chi,
    segment_phases,
    signed_phase_batch,
)

#: trajectories per reduction chunk; fixed so that worker count cannot change
#: the floating-point reduction order.
CHUNK = 4096


@dataclass
class CoherenceCurve:
    """Sampled coherence signal versus total evolution time."""

    times: np.ndarray  # s
    signal: np.ndarray  # dimensionless in [-1, 1]
    std_error: np.ndarray
    n_pulses: np.ndarray
    metadata: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        self.std_error = np.asarray(self.std_error, dtype=float)
        self.n_pulses = np.asarray(self.n_pulses, dtype=int)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("curve times must be strictly increasing")
        if np.any(self.std_error < 0):
            raise ValueError("std_error must be non-negative")

    def to_csv(self, path):
        header = "total_time_s,signal,std_error,n_pulses"
        rows = np.column_stack([self.times, self.signal, self.std_error, self.n_pulses])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for t, s, e, n in rows:
                fh.write(f"{float(t)!r},{float(s)!r},{float(e)!r},{int(n)}\n")


def t1_envelope(t, nv: NVParameters) -> np.ndarray:
    """Spin-lattice ceiling exp(-t/T1)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    return np.exp(-t / nv.t1)


# ---------------------------------------------------------------------------
# Sequence families over a time grid
# ---------------------------------------------------------------------------


def fid_family():
    return ("fid", lambda T: sq.fid(T), 0)


def hahn_family():
    return ("hahn", lambda T: sq.hahn(T), 1)


def cpmg_family(n: int):
    return (f"cpmg-{n}", lambda T: sq.cpmg(n, T), n)


def custom_family(fractions: Sequence[float]):
    """Pulses at fixed fractions of the total time."""
    fr = tuple(fractions)
    return ("custom", lambda T: sq.custom([f * T for f in fr], T), len(fr))


def _chunked_indices(shots: int):
    for start in range(0, shots, CHUNK):
        yield np.arange(start, min(start + CHUNK, shots), dtype=np.int64)


def _mean_cos(model, tog, shots, rng, gamma_e, n_workers):
    def work(idx):
        ph = signed_phase_batch(model, tog, rng, idx, gamma_e)
        c = np.cos(ph)
        return np.sum(c), np.sum(c * c)

    chunks = list(_chunked_indices(shots))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            partials = list(ex.map(work, chunks))
    else:
        partials = [work(c) for c in chunks]
    s1 = float(np.sum(np.array([p[0] for p in partials])))
    s2 = float(np.sum(np.array([p[1] for p in partials])))
    mean = s1 / shots
    var = max(s2 / shots - mean * mean, 0.0)
    return mean, math.sqrt(var / shots)


def coherence_curve(
    model: FieldModel,
    family,
    total_times,
    shots: int,
    rng: RngSpec,
    nv: NVParameters = NVParameters(),
    apply_t1: bool = True,
    n_workers: int = 1,
) -> CoherenceCurve:
    """Monte Carlo coherence signal over a grid of total evolution times.

    ``family`` is one of fid_family(), hahn_family(), cpmg_family(n) or
    custom_family(...).  Deterministic given (model, seed, shots, grid).
    """
    if shots < 100:
        raise ValueError("need at least 100 shots")
    total_times = np.asarray(total_times, dtype=float)
    if total_times.size == 0:
        raise ValueError("empty time grid")
    kind, make, n_pulses = family
    if kind == "spinlock":
        raise ValueError("spin locking is handled by spin_lock_curve")
    sig = np.empty_like(total_times)
    err = np.empty_like(total_times)
    for i, T in enumerate(total_times):
        tog = sq.toggling(make(T))
        mean, se = _mean_cos(model, tog, shots, rng, nv.gamma_e, n_workers)
        env = float(t1_envelope(T, nv)) if apply_t1 else 1.0
        sig[i] = mean * env
        err[i] = se * env
    return CoherenceCurve(
        times=total_times,
        signal=sig,
        std_error=err,
        n_pulses=np.full(total_times.shape, n_pulses),
        metadata={
            "model_digest": model.digest(),
            "sequence": kind,
            "shots": shots,
            "seed": rng.master_seed,
            "t1_envelope": apply_t1,
        },
    )


def ou_coherence_exponent(family, total_times, comp: OrnsteinUhlenbeck,
                          gamma_e: float = GAMMA_E) -> np.ndarray:
    """Analytic chi(T)/2 of an OU bath for a sequence family (no T1)."""
    kind, make, _ = family
    return np.array(
        [0.5 * ou_chi(sq.toggling(make(T)), comp.sigma_b, comp.tau_c, gamma_e)
         for T in np.atleast_1d(total_times)]
    )


# ---------------------------------------------------------------------------
# Rotating-frame Bloch evolution
# ---------------------------------------------------------------------------


def _cross(m, w):
    # m x w for m of shape (N, 3), w of shape (N, 3) or (3,)
    return np.stack(
        [
            m[:, 1] * w[..., 2] - m[:, 2] * w[..., 1],
            m[:, 2] * w[..., 0] - m[:, 0] * w[..., 2],
            m[:, 0] * w[..., 1] - m[:, 1] * w[..., 0],
        ],
        axis=1,
    )


def _rk4_step(m, w, h):
    k1 = _cross(m, w)
    k2 = _cross(m + 0.5 * h * k1, w)
    k3 = _cross(m + 0.5 * h * k2, w)
    k4 = _cross(m + h * k3, w)
    return m + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


class StepSizeError(RuntimeError):
    """Adaptive integrator could not meet tolerance; reports time and index."""


def _advance_constant_omega(m, w, dt, tol):
    """Adaptive RK4 with step doubling over an interval of constant Omega."""
    t = 0.0
    h = dt
    while t < dt * (1 - 1e-15):
        h = min(h, dt - t)
        for _ in range(60):
            full = _rk4_step(m, w, h)
            half = _rk4_step(_rk4_step(m, w, 0.5 * h), w, 0.5 * h)
            err = float(np.max(np.abs(full - half)))
            if err <= tol:
                break
            h *= 0.5
        else:
            bad = int(np.argmax(np.sum(np.abs(full - half), axis=1)))
            raise StepSizeError(f"step collapse at local t={t!r}, trajectory {bad}")
        m = half
        t += h
        if err < tol / 32.0:
            h *= 2.0
    return m


def _ou_component(model: FieldModel):
    ous = [(i, c) for i, c in enumerate(model.components) if isinstance(c, OrnsteinUhlenbeck)]
    if len(ous) > 1:
        raise ValueError("Bloch path supports at most one OU component")
    return ous[0] if ous else (None, None)


def _bloch_run(
    model, omega_callable, sample_times, shots, rng, gamma_e, tol, m0,
):
    """Integrate dm/dt = m x Omega(t) for all trajectories, noise held
    piecewise-constant on a grid no coarser than tau_c/20 and 1/(20 max|Omega_x|).

    Returns m at each sample time, shape (n_samples, shots, 3).
    """
    sample_times = np.asarray(sample_times, dtype=float)
    t_max = sample_times[-1]
    slot, ou = _ou_component(model)
    caps = [t_max / 200.0]
    if ou is not None:
        caps.append(ou.tau_c / 20.0)
    w1 = omega_callable(0.0)
    if w1 > 0:
        caps.append(1.0 / (20.0 * w1))
    h_cap = min(caps)

    # build a global step grid hitting every sample time exactly
    knots = np.concatenate([[0.0], sample_times])
    grid = [0.0]
    for a, b in zip(knots[:-1], knots[1:]):
        nsub = max(1, int(math.ceil((b - a) / h_cap)))
        grid.extend(np.linspace(a, b, nsub + 1)[1:])
    grid = np.asarray(grid)
    steps = np.diff(grid)

    # deterministic part of B at step midpoints
    mid = 0.5 * (grid[:-1] + grid[1:])
    b_det = np.zeros_like(mid)
    from .field import Polynomial, SinusoidAC, StaticOffset  # local to avoid cycle noise

    for comp in model.components:
        if isinstance(comp, StaticOffset):
            b_det += comp.b
        elif isinstance(comp, Polynomial):
            b_det += np.polynomial.polynomial.polyval(mid, comp.coefficients)
        elif isinstance(comp, SinusoidAC):
            b_det += comp.amplitude * np.sin(2 * np.pi * comp.frequency * mid + comp.phi0)

    # stochastic part per trajectory
    n_steps = steps.size
    b_sto = np.zeros((shots, n_steps))
    for comp_slot, comp in enumerate(model.components):
        if isinstance(comp, QuasiStaticGaussian):
            draws = np.empty(shots)
            for i in range(shots):
                draws[i] = rng.generator(i, comp_slot).standard_normal()
            b_sto += comp.sigma_b * draws[:, None]
        elif isinstance(comp, OrnsteinUhlenbeck):
            xi = np.empty((shots, n_steps + 1))
            for i in range(shots):
                xi[i] = rng.generator(i, comp_slot).standard_normal(n_steps + 1)
            decay = np.exp(-steps / comp.tau_c)
            kick = comp.sigma_b * np.sqrt(1.0 - decay**2)
            x = comp.sigma_b * xi[:, 0]
            for j in range(n_steps):
                # hold the value at the step start across the step
                b_sto[:, j] += x
                x = x * decay[j] + kick[j] * xi[:, j + 1]

    m = np.tile(np.asarray(m0, dtype=float), (shots, 1))
    out = np.empty((sample_times.size, shots, 3))
    sample_set = {round(t, 15) for t in sample_times}
    si = 0
    w = np.zeros((shots, 3))
    for j in range(n_steps):
        w[:, 0] = omega_callable(mid[j])
        w[:, 2] = gamma_e * (b_det[j] + b_sto[:, j])
        m = _advance_constant_omega(m, w, steps[j], tol)
        if round(grid[j + 1], 15) in sample_set:
            out[si] = m
            si += 1
    if si != sample_times.size:  # pragma: no cover
        raise RuntimeError("sample grid mismatch")
    return out


def spin_lock_curve(
    model: FieldModel,
    omega1: float,
    total_times,
    shots: int,
    rng: RngSpec,
    nv: NVParameters = NVParameters(),
    apply_t1: bool = True,
    tol: float = 1e-9,
) -> CoherenceCurve:
    """Locked magnetization m_x(t) under continuous drive Omega = (w1, 0, g B(t)).

    The magnetization starts along x (after the initial pi/2); the drive holds
    it there and the residual decay rate is set by the noise spectral density
    at the Rabi frequency.
    """
    if omega1 < 0:
        raise ValueError("omega1 must be non-negative")
    total_times = np.asarray(total_times, dtype=float)
    if np.any(np.diff(total_times) <= 0) or total_times[0] <= 0:
        raise ValueError("total_times must be positive and strictly increasing")
    ms = _bloch_run(
        model, lambda t: omega1, total_times, shots, rng, nv.gamma_e, tol, (1.0, 0.0, 0.0)
    )
    mx = ms[:, :, 0]
    mean = mx.mean(axis=1)
    se = mx.std(axis=1, ddof=0) / math.sqrt(shots)
    env = t1_envelope(total_times, nv) if apply_t1 else 1.0
    return CoherenceCurve(
        times=total_times,
        signal=mean * env,
        std_error=se * np.ones_like(mean) if np.isscalar(env) else se * env,
        n_pulses=np.zeros(total_times.shape, dtype=int),
        metadata={
            "model_digest": model.digest(),
            "sequence": "spinlock",
            "omega1": omega1,
            "shots": shots,
            "seed": rng.master_seed,
            "t1_envelope": apply_t1,
        },
    )


# ---------------------------------------------------------------------------
# Finite-error pulses (rotation composition path)
# ---------------------------------------------------------------------------


def _rot_x(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_z_batch(m, theta):
    # rotate each row of m about z by per-row angle theta (sign per dm/dt = m x Omega)
    c, s = np.cos(theta), np.sin(theta)
    x = c * m[:, 0] + s * m[:, 1]
    y = -s * m[:, 0] + c * m[:, 1]
    return np.stack([x, y, m[:, 2]], axis=1)


def pulse_error_curve(
    model: Optional[FieldModel],
    n: int,
    flip_angle_error: float,
    phase_convention: str,
    total_times,
    shots: int,
    rng: Optional[RngSpec],
    nv: NVParameters = NVParameters(),
    apply_t1: bool = False,
) -> CoherenceCurve:
    """CPMG-timed echo train with pi pulses of angle pi(1 + flip_angle_error).

    phase_convention "cpmg" rotates about x (90 degrees from the initial pi/2
    about y, error-robust for the in-phase component); "cp" rotates about y.
    ``model=None`` runs the noiseless rotation composition. Signal is m_x.
    """
    if abs(flip_angle_error) >= 0.5:
        raise ValueError("|flip_angle_error| must be < 0.5")
    if phase_convention not in ("cp", "cpmg"):
        raise ValueError("phase_convention must be 'cp' or 'cpmg'")
    total_times = np.asarray(total_times, dtype=float)
    angle = math.pi * (1.0 + flip_angle_error)
    pulse = _rot_x(angle) if phase_convention == "cpmg" else _rot_y(angle)
    noiseless = model is None or not model.is_stochastic()
    eff_shots = 1 if noiseless else shots
    sig = np.empty_like(total_times)
    err = np.empty_like(total_times)
    for i, T in enumerate(total_times):
        seq = sq.cpmg(n, T)
        tog = sq.toggling(seq)
        if model is None:
            phases = np.zeros((1, len(tog.signs)))
        else:
            phases = segment_phases(model, tog, rng, range(eff_shots), nv.gamma_e)
        m = np.tile([1.0, 0.0, 0.0], (eff_shots, 1))
        for seg in range(phases.shape[1]):
            m = _rot_z_batch(m, phases[:, seg])
            if seg < phases.shape[1] - 1:
                m = m @ pulse.T
        # read out along the axis the ideal train refocuses to: pi pulses about
        # y send x -> (-1)^n x, pi pulses about x leave it fixed
        axis_sign = 1.0 if phase_convention == "cpmg" else (-1.0) ** n
        mx = m[:, 0] * axis_sign
        env = float(t1_envelope(T, nv)) if apply_t1 else 1.0
        sig[i] = mx.mean() * env
        err[i] = (mx.std(ddof=0) / math.sqrt(eff_shots)) * env
    return CoherenceCurve(
        times=total_times,
        signal=sig,
        std_error=err,
        n_pulses=np.full(total_times.shape, n),
        metadata={
            "sequence": f"cpmg-{n}",
            "phase_convention": phase_convention,
            "flip_angle_error": flip_angle_error,
            "shots": eff_shots,
            "seed": None if rng is None else rng.master_seed,
            "model_digest": None if model is None else model.digest(),
            "t1_envelope": apply_t1,
        },
    )
