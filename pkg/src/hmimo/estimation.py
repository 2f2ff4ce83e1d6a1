"""Compressive pilot model and sparse recovery in a wavenumber/angular dictionary.

Two estimators share the measurement model ``y = S h + n`` with ``h = B x``:

``omp_estimate``
    Greedy orthogonal matching pursuit with a residual-power stopping rule.
``mrf_estimate``
    Turbo loop between a Bernoulli-Gaussian AMP stage and loopy belief
    propagation on an Ising prior over the 4-neighbour lattice graph, so that
    active harmonics are encouraged to come in clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .rng import as_generator, complex_normal


@dataclass(frozen=True)
class MeasurementModel:
    sensing_matrix: np.ndarray = field(repr=False)
    noise_variance: float
    combined_dictionary: np.ndarray = field(repr=False)
    rng_seed: int | None = None

    @property
    def n_measurements(self) -> int:
        return self.sensing_matrix.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.combined_dictionary.shape[1]

    def measure(self, h, rng=None) -> np.ndarray:
        """Noisy pilot observations ``S h + n``."""
        h = np.asarray(getattr(h, "samples", h))
        y = self.sensing_matrix @ h
        if self.noise_variance > 0:
            y = y + complex_normal(as_generator(rng), y.size, self.noise_variance)
        return y


def build_measurement(geometry, basis, compression_ratio: float, snr_db: float, rng_seed=None,
                      channel_power: float | None = None, phases=None) -> MeasurementModel:
    """Random unit-modulus combining with ``ceil(ratio * N)`` rows.

    The noise variance makes ``E||S h||^2 / (M sigma^2)`` equal to the linear
    SNR when ``E||h||^2 = channel_power`` (default ``N``); since every row has
    energy 1, ``E||S h||^2 = M * channel_power / N``. ``snr_db = inf`` gives a
    noiseless model. ``phases`` overrides the random phases (tests).
    """
    n = geometry.n_elements
    if not 0 < compression_ratio <= 1:
        raise ValueError("compression_ratio must be in (0, 1]")
    m = math.ceil(compression_ratio * n - 1e-9)
    if m < 1:
        raise ValueError("compression ratio yields no measurements")
    if phases is None:
        phases = 2 * math.pi * as_generator(rng_seed).random((m, n))
    phases = np.broadcast_to(np.asarray(phases, dtype=float), (m, n))
    sensing = np.exp(1j * phases) / math.sqrt(n)
    power = n if channel_power is None else channel_power
    if math.isinf(snr_db) and snr_db > 0:
        noise = 0.0
    else:
        noise = power / (n * 10 ** (snr_db / 10))
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return MeasurementModel(sensing, float(noise), sensing @ basis.atoms, seed)


@dataclass(frozen=True)
class EstimationResult:
    coefficients: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)
    nmse: float
    iterations: int
    converged: bool
    trace: tuple = ()
    support_probability: np.ndarray | None = field(default=None, repr=False)

    def channel(self, basis) -> np.ndarray:
        return basis.atoms @ self.coefficients

    def scored(self, basis, h_true) -> "EstimationResult":
        """Copy with ``nmse`` filled in against the true channel."""
        return replace(self, nmse=nmse(self.channel(basis), h_true))


def nmse(h_hat, h_true) -> float:
    h_hat = np.asarray(getattr(h_hat, "samples", h_hat))
    h_true = np.asarray(getattr(h_true, "samples", h_true))
    if h_hat.shape != h_true.shape:
        raise ValueError("length mismatch")
    ref = np.vdot(h_true, h_true).real
    if not ref > 0:
        raise ValueError("true channel has zero norm")
    d = h_hat - h_true
    return float(np.vdot(d, d).real / ref)


def nmse_db(h_hat, h_true) -> float:
    return 10 * math.log10(max(nmse(h_hat, h_true), 1e-300))


# ---------------------------------------------------------------------------
# OMP

@dataclass(frozen=True)
class OmpStop:
    power_threshold: float
    max_atoms: int


def default_omp_stop(y, model: MeasurementModel, min_threshold: float = 0.0) -> OmpStop:
    """Residual threshold ``1.1 M sigma^2 / ||y||^2`` (floored at ``min_threshold``), ``M/4`` atoms."""
    m = model.n_measurements
    ey = float(np.vdot(y, y).real)
    thr = 1.1 * m * model.noise_variance / ey if ey > 0 else 0.0
    return OmpStop(max(thr, min_threshold), max(1, m // 4))


def omp_estimate(y, model: MeasurementModel, stop: OmpStop) -> EstimationResult:
    """Orthogonal matching pursuit on ``model.combined_dictionary``.

    Each step adds the column with the largest normalised correlation with
    the residual and refits all selected coefficients by least squares. Stops
    once ``||r||^2 <= power_threshold * ||y||^2`` or ``max_atoms`` columns are in.
    ``trace`` records the residual energy after each step.
    """
    phi = model.combined_dictionary
    if phi.size == 0:
        raise ValueError("empty dictionary")
    y = np.asarray(y, dtype=complex)
    n_atoms = phi.shape[1]
    norms = np.linalg.norm(phi, axis=0)
    norms = np.where(norms > 0, norms, np.inf)

    ey = float(np.vdot(y, y).real)
    target = stop.power_threshold * ey
    coef = np.zeros(n_atoms, dtype=complex)
    chosen: list[int] = []
    resid = y.copy()
    r_energy = ey
    trace = [r_energy]
    available = np.ones(n_atoms, dtype=bool)
    x_s = np.zeros(0, dtype=complex)

    while ey > 0 and r_energy > target and len(chosen) < min(stop.max_atoms, n_atoms):
        corr = np.abs(phi.conj().T @ resid) / norms
        corr[~available] = -1.0
        best = int(np.argmax(corr))
        if corr[best] <= 0:
            break
        chosen.append(best)
        available[best] = False
        x_s, *_ = np.linalg.lstsq(phi[:, chosen], y, rcond=None)
        resid = y - phi[:, chosen] @ x_s
        r_energy = float(np.vdot(resid, resid).real)
        trace.append(r_energy)

    coef[chosen] = x_s
    support = np.zeros(n_atoms, dtype=bool)
    support[chosen] = True
    return EstimationResult(coef, support, float("nan"), len(chosen),
                            r_energy <= target, tuple(trace))


# ---------------------------------------------------------------------------
# MRF / turbo BG-AMP

@dataclass(frozen=True)
class MrfPrior:
    """Ising support prior ``p(s) ~ exp(beta sum_edges s_i s_j + alpha_bias sum_i s_i)``.

    ``edges`` is an (E, 2) array of undirected 4-neighbour pairs over the
    dictionary atoms (see ``WavenumberLattice.neighbor_edges``).
    ``power_floor`` is the power threshold below which nothing is resolved:
    the linear stage never assumes a per-measurement noise power under
    ``power_floor * ||y||^2 / M``, the same relative level at which OMP stops.
    """

    edges: np.ndarray = field(repr=False)
    beta: float = 0.2
    alpha_bias: float = -0.5
    max_turbo_iterations: int = 30
    damping: float = 0.5
    convergence_tol: float = 1e-4
    power_floor: float = 1e-3
    amp_iterations: int = 25
    bp_iterations: int = 30

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0 <= self.damping < 1:
            raise ValueError("damping must be in [0, 1)")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be > 0")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self loops are not allowed")
        object.__setattr__(self, "edges", e)


def _directed(edges):
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    e = edges.shape[0]
    rev = np.concatenate([np.arange(e, 2 * e), np.arange(e)])
    return src, dst, rev


def ising_bp(evidence_llr, prior: MrfPrior, messages=None):
    """Loopy BP on the Ising prior with per-node evidence (LLR of s=+1 vs s=-1).

    Returns ``(prior_llr, messages)`` where ``prior_llr[i]`` is the extrinsic
    prior handed back to the linear stage: the bias term plus all incoming
    messages, without node ``i``'s own evidence.
    """
    n = evidence_llr.size
    bias = 2.0 * prior.alpha_bias
    if prior.beta == 0 or prior.edges.size == 0:
        return np.full(n, bias), messages
    src, dst, rev = _directed(prior.edges)
    m = np.zeros(src.size) if messages is None else messages.copy()
    tb = math.tanh(prior.beta)
    local = evidence_llr + bias
    for _ in range(prior.bp_iterations):
        incoming = np.bincount(dst, weights=m, minlength=n)
        cavity = local[src] + incoming[src] - m[rev]
        new = 2.0 * np.arctanh(tb * np.tanh(cavity / 2.0))
        delta = np.max(np.abs(new - m)) if m.size else 0.0
        m = new
        if delta < 1e-9:
            break
    incoming = np.bincount(dst, weights=m, minlength=n)
    return bias + incoming, m


def _cn_log(r2, var):
    return -np.log(np.pi * var) - r2 / var


def _denoise(r, tau, v, prior_llr):
    """Bernoulli-Gaussian posterior given ``r = x + CN(0, tau)``, ``x ~ (1-p) delta + p CN(0, v)``."""
    r2 = np.abs(r) ** 2
    llr_meas = _cn_log(r2, v + tau) - _cn_log(r2, tau)
    p = expit(llr_meas + prior_llr)
    g = v / (v + tau)
    m1 = g * r
    mean = p * m1
    var = np.maximum(p * (g * tau + np.abs(m1) ** 2) - np.abs(mean) ** 2, 0.0)
    return mean, var, p, llr_meas


@dataclass
class _AmpState:
    x: np.ndarray
    z: np.ndarray
    tau: float
    v: float


def _amp(y, phi_n, noise, state, prior_llr, floor, iterations, damping):
    """BG-AMP on unit-norm columns, warm-started from ``state``; returns last r and stats."""
    m, a = phi_n.shape
    tau_min = max(floor, 1e-12) * float(np.vdot(y, y).real) / m
    x, z = state.x, state.z
    tau = state.tau
    mean = var = p = llr = r = None
    for _ in range(iterations):
        r = x + phi_n.conj().T @ z
        tau = max(float(np.vdot(z, z).real) / m, noise, tau_min)
        mean, var, p, llr = _denoise(r, tau, state.v, prior_llr)
        onsager = (a / m) * float(var.mean()) / tau
        x_new = damping * x + (1 - damping) * mean if damping else mean
        z_new = y - phi_n @ x_new + onsager * z
        step = float(np.max(np.abs(x_new - x))) if x.size else 0.0
        x, z = x_new, z_new
        if step < 1e-10 * max(1.0, float(np.max(np.abs(x)))):
            break
    state.x, state.z, state.tau = x, z, tau
    return r, tau, mean, var, p, llr


def _turbo(y, model: MeasurementModel, prior: MrfPrior, structured: bool):
    phi = model.combined_dictionary
    if phi.size == 0:
        raise ValueError("empty dictionary")
    y = np.asarray(y, dtype=complex)
    m, a = phi.shape
    if structured and prior.edges.size and prior.edges.max() >= a:
        raise ValueError("prior graph refers to atoms outside the dictionary")
    norms = np.linalg.norm(phi, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    phi_n = phi / norms
    noise = model.noise_variance

    ey = float(np.vdot(y, y).real)
    if ey == 0:
        zero = np.zeros(a, dtype=complex)
        return EstimationResult(zero, np.zeros(a, bool), float("nan"), 0, True, (),
                                np.zeros(a))

    prior_llr = np.full(a, 2.0 * prior.alpha_bias)
    pi0 = float(expit(2.0 * prior.alpha_bias))
    v = max(ey - m * noise, 1e-3 * ey) / (a * max(pi0, 1e-3))
    state = _AmpState(np.zeros(a, complex), y.copy(), ey / m, v)
    messages = None
    pi = expit(prior_llr)
    converged = False
    trace = []
    it = 0
    for it in range(1, prior.max_turbo_iterations + 1):
        r, tau, mean, var, p, llr = _amp(y, phi_n, noise, state, prior_llr,
                                         prior.power_floor, prior.amp_iterations, 0.0)
        # EM refresh of the active variance from the active-state posterior
        g1 = state.v / (state.v + tau)
        act = p.sum()
        if act > 1e-9:
            state.v = max(float((p * (g1 * tau + np.abs(g1 * r) ** 2)).sum() / act), 1e-12 * v)
        if structured:
            new_llr, messages = ising_bp(llr, prior, messages)
        else:
            new_llr = np.full(a, 2.0 * prior.alpha_bias)
        new_pi = prior.damping * pi + (1 - prior.damping) * expit(new_llr)
        change = float(np.max(np.abs(new_pi - pi)))
        pi = new_pi
        prior_llr = np.log(np.clip(pi, 1e-300, None)) - np.log(np.clip(1 - pi, 1e-300, None))
        trace.append(change)
        if change < prior.convergence_tol:
            converged = True
            break

    r, tau, mean, var, p, llr = _amp(y, phi_n, noise, state, prior_llr,
                                     prior.power_floor, prior.amp_iterations, 0.0)
    support = p > 0.5
    coef = np.where(support, mean, 0.0) / norms
    return EstimationResult(coef.astype(complex), support, float("nan"), it, converged,
                            tuple(trace), p)


def mrf_estimate(y, model: MeasurementModel, prior: MrfPrior) -> EstimationResult:
    """Turbo BG-AMP / Ising-BP estimate.

    Each turbo iteration runs AMP (Bernoulli-Gaussian denoiser with per-atom
    prior activity) to obtain extrinsic support LLRs, feeds them to loopy BP
    on the Ising prior, and damps the returned activity probabilities. The
    loop ends when the largest activity change drops below
    ``convergence_tol``; otherwise the last iterate is returned with
    ``converged=False``. Coefficients are posterior means on atoms whose
    support probability exceeds 0.5.
    """
    return _turbo(y, model, prior, structured=True)


def bg_estimate(y, model: MeasurementModel, prior: MrfPrior) -> EstimationResult:
    """Same turbo loop with the Ising stage replaced by the flat bias prior."""
    return _turbo(y, model, prior, structured=False)
