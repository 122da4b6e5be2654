"""Mach-Zehnder composition: pulse S-matrices, fringes, contrast.

The three-pulse sequence is the time-ordered product

    S_tot(g, p, T) = B(p3) U(p2) M(p2) U(p1) B(p1)

with quasi-momenta p1 = p, p2 = p + gT/2, p3 = p + gT and the free
propagator diagonal in the bare basis, U(q) = exp[-i(T q^2 + (g T^2/2) q)]
evaluated at q = p + 2k.  Pulse matrices use each pulse's own local
clock; the kinetic phases inside a pulse window are part of its
S-matrix, and U covers the center-to-center separation T.

Detection modes: `unresolved` sums every intermediate path;
`resolved` keeps only the momentum-reversal pairs that stay spatially
closed, index pairs {(0,0), (1,2), (2,1), (3,4), (4,3)} of
(after-first-splitter, after-mirror) bare ports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import curve_fit

from . import grid as grid_mod
from .exceptions import NoExtremaFound, OutOfZone
from .multilevel import propagate_unitaries
from .strategies import StrategySpec
from .units import GaussianWavePacket

PORT_OFFSETS = np.array([0.0, 2.0, -2.0, 4.0, -4.0])
RESOLVED_PAIRS = ((0, 0), (1, 2), (2, 1), (3, 4), (4, 3))


def port_offsets(n_max):
    """Bare-basis momentum offsets {0, +2, -2, ..., +2n, -2n}."""
    n = np.arange(1, n_max + 1, dtype=float)
    return np.concatenate(([0.0], np.stack((2 * n, -2 * n), axis=1).ravel()))


@dataclass(frozen=True)
class PulseSMatrix:
    """Bare-basis transfer matrix of one pulse at quasi-momentum p."""

    p: float
    matrix: np.ndarray

    def unitarity_defect(self):
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


@dataclass(frozen=True)
class MzConfig:
    """One interferometer scenario.

    T may stay None for scan-style use where the grid supplies it.
    epsilon accepts a float or a PolarizationError.
    """

    strategy: StrategySpec
    g: float
    source: GaussianWavePacket
    T: float | None = None
    epsilon: float = 0.0
    detection: str = "unresolved"
    n_max: int = 2
    rtol: float = 1e-9
    n_nodes: int = 64
    p_bin: float = 1e-3
    ideal_pulses: bool = False

    def __post_init__(self):
        if self.detection not in ("unresolved", "resolved"):
            raise ValueError(f"unknown detection mode {self.detection!r}")
        if self.n_max != 2 and (self.detection == "resolved"
                                or self.ideal_pulses):
            raise ValueError("resolved detection and ideal pulses are "
                             "defined on the five-level ladder only")
        eps = self.epsilon
        if hasattr(eps, "epsilon"):
            object.__setattr__(self, "epsilon", float(eps.epsilon))
        if self.T is not None and self.T < 0:
            raise ValueError("interrogation time must be non-negative")


@dataclass(frozen=True)
class FringeScan:
    """Port populations over an interrogation-time grid."""

    t_grid: np.ndarray
    p1: np.ndarray  # central port
    p2: np.ndarray  # +2 hbar k_L port
    p3: np.ndarray  # -2 hbar k_L port
    config: MzConfig

    @property
    def p_sum(self):
        return self.p2 + self.p3


@dataclass(frozen=True)
class ContrastResult:
    contrast: float
    t_max: float
    t_min: float
    method: str = "fringe-fit windowed extrema"


@dataclass(frozen=True)
class FringeFit:
    frequency: float  # vs T^2
    phase: float
    amplitude: float
    offset: float


@dataclass(frozen=True)
class FluctuationResult:
    mean: float
    std: float
    contrasts: tuple
    seed: int


def semiclassical_phase(a, T):
    """Leading-order phase 4 a T^2 for effective momentum 4 k_L."""
    return 4.0 * a * np.asarray(T, dtype=float) ** 2


def ideal_bs_matrix():
    """Lossless splitter: |0> -> -i (|+2> + |-2>)/sqrt2, spectators kept."""
    s = 1.0 / math.sqrt(2.0)
    b = np.zeros((5, 5), dtype=complex)
    b[1, 0] = b[2, 0] = -1j * s
    b[0, 1] = b[0, 2] = -1j * s
    b[1, 1] = b[2, 2] = 0.5
    b[1, 2] = b[2, 1] = -0.5
    b[3, 3] = b[4, 4] = 1.0
    return b


def ideal_mirror_matrix():
    """Perfect inversion |+2> <-> |-2>; central and outer ports untouched."""
    m = np.eye(5, dtype=complex)
    m[1, 1] = m[2, 2] = 0.0
    m[1, 2] = m[2, 1] = -1j
    return m


def pulse_s_matrix(p, pulse, epsilon=0.0, n_max=2, rtol=1e-9):
    """Evolve all bare basis states through one pulse (phases retained)."""
    env, protocol = pulse
    m = propagate_unitaries(p, env, protocol, epsilon, n_max=n_max,
                            rtol=rtol, atol=rtol * 1e-2, basis="bare")
    return PulseSMatrix(float(p), m)


def free_propagator(p, g, T, n_max=2):
    """Diagonal free-fall phases at quasi-momentum p.

    Entry k is exp[-i(T q^2 + (g T^2/2) q)] at q = p + 2k; afterwards the
    ladder is re-centered at p + gT/2.
    """
    q = p + port_offsets(n_max)
    return np.diag(np.exp(-1j * (T * q**2 + 0.5 * g * T**2 * q)))


def _free_phases(p, g, T, n_max=2):
    """Vectorized diagonal of free_propagator for p of shape (N,)."""
    q = np.asarray(p, dtype=float)[:, None] + port_offsets(n_max)[None, :]
    return np.exp(-1j * (T * q**2 + 0.5 * g * T**2 * q))


def _check_zone(config, t_max):
    wp = config.source
    reach = abs(wp.p0) + 6.0 * wp.sigma_p + abs(config.g) * t_max
    if reach >= 1.0:
        raise OutOfZone(
            f"|p| reaches {reach:.3f} >= 1 during the sequence; "
            "reduce g*T or the source spread")


def _compose_columns(b1_cols, u1, m, u2, b3, resolved):
    """Output amplitudes for input port 0, batched over momentum nodes.

    b1_cols: (N,5) first-splitter column; u1, u2: (N,5) free phases; m:
    (N,5,5) mirror; b3: (N,5,5) final splitter.  Resolved mode restricts
    the (after-BS, after-mirror) index pairs to momentum-reversal ones.
    """
    if not resolved:
        v = u1 * b1_cols
        v = np.einsum("nlk,nk->nl", m, v)
        v = u2 * v
        return np.einsum("nil,nl->ni", b3, v)
    out = np.zeros_like(b1_cols)
    for k, l in RESOLVED_PAIRS:
        term = b3[:, :, l] * (u2[:, l] * m[:, l, k] * u1[:, k]
                              * b1_cols[:, k])[:, None]
        out += term
    return out


def three_path_amplitudes(b1, m, b3, g, p, T):
    """Closed-form reduced amplitudes from the three spatially closed paths.

    Writes the output column for input port 0 as three explicit terms,
    one per closed path (stay central; down-then-up; up-then-down),
    with the free-fall phase theta(x) = -(T x^2 + g T^2 x / 2) attached
    to each segment momentum by hand.  Deliberately independent of the
    matrix composition so the two can be compared.
    """
    p2 = p + 0.5 * g * T

    def theta(x):
        return -(T * x**2 + 0.5 * g * T**2 * x)

    paths = (
        (0, 0, theta(p) + theta(p2)),
        (1, 2, theta(p - 2.0) + theta(p2 + 2.0)),
        (2, 1, theta(p + 2.0) + theta(p2 - 2.0)),
    )
    out = np.zeros(b1.shape[0], dtype=complex)
    for l, k, phase in paths:
        out += b3[:, l] * m[l, k] * b1[k, 0] * np.exp(1j * phase)
    return out


def total_s_matrix(config, p, T=None, matrices=None):
    """Full 5x5 sequence matrix at quasi-momentum p.

    matrices optionally supplies pre-built (b1, m, b3) pulse matrices,
    bypassing the solver; useful for cached scans and cross-checks.
    """
    T = config.T if T is None else T
    if T is None:
        raise ValueError("no interrogation time given")
    g = config.g
    _check_zone(config, T)
    p1, p2, p3 = p, p + 0.5 * g * T, p + g * T
    for q in (p1, p2, p3):
        if abs(q) >= 1.0:
            raise OutOfZone(f"quasi-momentum {q:.3f} leaves the first zone")
    if matrices is not None:
        b1, m, b3 = matrices
    elif config.ideal_pulses:
        b1 = ideal_bs_matrix()
        m = ideal_mirror_matrix()
        b3 = ideal_bs_matrix()
    else:
        strat = config.strategy
        b1 = pulse_s_matrix(p1, strat.bs, config.epsilon, config.n_max,
                            config.rtol).matrix
        m = pulse_s_matrix(p2, strat.mirror, config.epsilon, config.n_max,
                           config.rtol).matrix
        b3 = pulse_s_matrix(p3, strat.bs, config.epsilon, config.n_max,
                            config.rtol).matrix
    u1 = free_propagator(p1, g, T, config.n_max)
    u2 = free_propagator(p2, g, T, config.n_max)
    if config.detection == "unresolved":
        return b3 @ u2 @ m @ u1 @ b1
    du1 = np.diag(u1)
    du2 = np.diag(u2)
    out = np.zeros((5, 5), dtype=complex)
    for k, l in RESOLVED_PAIRS:
        out += np.outer(b3[:, l] * du2[l], b1[k, :]) * (m[l, k] * du1[k])
    return out


def port_populations(config, T=None, p=None):
    """(P1, P2, P3) for one shot: central, +2, -2 ports.

    With p given, plane-wave populations at that quasi-momentum;
    otherwise integrated over the source packet by Gauss-Legendre
    quadrature on its support.
    """
    if p is not None:
        s = total_s_matrix(config, p, T)
        return (abs(s[0, 0]) ** 2, abs(s[1, 0]) ** 2, abs(s[2, 0]) ** 2)
    T_val = config.T if T is None else T
    scan = t_scan(config, np.array([T_val]))
    return (float(scan.p1[0]), float(scan.p2[0]), float(scan.p3[0]))


def _binned_matrices(p_values, pulse, epsilon, n_max, rtol, p_bin):
    """Pulse matrices for binned quasi-momenta; returns per-value lookup."""
    binned = np.round(np.asarray(p_values) / p_bin) * p_bin
    uniq, inverse = np.unique(binned, return_inverse=True)
    mats = propagate_unitaries(uniq, pulse[0], pulse[1], epsilon,
                               n_max=n_max, rtol=rtol, atol=rtol * 1e-2,
                               basis="bare")
    return mats[inverse]


def t_scan(config, t_grid):
    """Fringe signals over an ascending grid of interrogation times.

    The first splitter is evaluated once at the quadrature nodes; mirror
    and final splitter depend on shifted quasi-momenta, so their
    matrices are shared across the scan through momentum bins of width
    p_bin (free-propagation phases always use exact momenta).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be non-empty and ascending")
    g = config.g
    _check_zone(config, float(t_grid[-1]))
    wp = config.source
    p_nodes, weights = wp.momentum_quadrature(config.n_nodes)
    n = p_nodes.size
    resolved = config.detection == "resolved"

    if config.ideal_pulses:
        b1 = np.broadcast_to(ideal_bs_matrix(), (n, 5, 5))
        b1_cols = np.ascontiguousarray(b1[:, :, 0])
        mirror_all = np.broadcast_to(ideal_mirror_matrix(),
                                     (t_grid.size, n, 5, 5))
        b3_all = np.broadcast_to(ideal_bs_matrix(), (t_grid.size, n, 5, 5))
    else:
        strat = config.strategy
        b1 = propagate_unitaries(p_nodes, strat.bs[0], strat.bs[1],
                                 config.epsilon, n_max=config.n_max,
                                 rtol=config.rtol, atol=config.rtol * 1e-2,
                                 basis="bare")
        b1_cols = np.ascontiguousarray(b1[:, :, 0])
        p2_all = (p_nodes[None, :] + 0.5 * g * t_grid[:, None]).ravel()
        p3_all = (p_nodes[None, :] + g * t_grid[:, None]).ravel()
        mirror_all = _binned_matrices(
            p2_all, strat.mirror, config.epsilon, config.n_max, config.rtol,
            config.p_bin).reshape(t_grid.size, n, 5, 5)
        b3_all = _binned_matrices(
            p3_all, strat.bs, config.epsilon, config.n_max, config.rtol,
            config.p_bin).reshape(t_grid.size, n, 5, 5)

    out = np.empty((t_grid.size, 3))
    for i, T in enumerate(t_grid):
        u1 = _free_phases(p_nodes, g, T, config.n_max)
        u2 = _free_phases(p_nodes + 0.5 * g * T, g, T, config.n_max)
        amps = _compose_columns(b1_cols, u1, mirror_all[i], u2, b3_all[i],
                                resolved)
        pops = np.abs(amps) ** 2
        out[i] = weights @ pops[:, :3]
    return FringeScan(t_grid, out[:, 0], out[:, 1], out[:, 2], config)


def default_t_grid(g, x_lo=0.05 * math.pi, x_hi=2.6 * math.pi,
                   max_step=math.pi / 40.0):
    """T samples uniform in x = 4|g|T^2, dense enough for extrema work."""
    if g == 0:
        raise ValueError("need a non-zero acceleration for a fringe grid")
    n = max(2, math.ceil((x_hi - x_lo) / max_step) + 1)
    x = np.linspace(x_lo, x_hi, n)
    return np.sqrt(x / (4.0 * abs(g)))


def _parabolic_refine(x, y, idx, sign):
    """Vertex of the parabola through (idx-1, idx, idx+1); sign=+1 max."""
    if idx == 0 or idx == len(x) - 1:
        return x[idx], y[idx]
    x0, x1, x2 = x[idx - 1:idx + 2]
    y0, y1, y2 = y[idx - 1:idx + 2]
    denom = (y0 - 2 * y1 + y2)
    if denom == 0 or sign * (y1 - y0) < 0 or sign * (y1 - y2) < 0:
        return x1, y1
    h = 0.5 * (x2 - x0) / 2
    shift = 0.5 * (y0 - y2) / denom
    xv = x1 + shift * h
    yv = y1 - 0.125 * (y0 - y2) * shift
    return xv, yv


def extract_contrast(scan):
    """Peak-to-trough amplitude of the first fringe period of P_sum.

    A single-harmonic least-squares fit in x = 4|g|T^2 locates the
    dominant fringe's first crest and trough; the raw signal is then
    searched within a half-period window around each and refined by a
    three-point parabola.  Fitting first makes the search immune to the
    fast parasitic wiggles that ride on offset-momentum fringes, which
    would otherwise masquerade as the first local extremum.
    """
    g = scan.config.g
    signal = scan.p_sum
    if g == 0 or scan.t_grid.size < 5:
        raise NoExtremaFound("no fringe: zero acceleration or scan too short")
    x = 4.0 * abs(g) * scan.t_grid**2
    if x[-1] - x[0] < 2.0 * math.pi * 0.999:
        raise NoExtremaFound("scan covers less than one fringe period")

    design = np.column_stack(
        [np.ones_like(x), np.cos(x), np.sin(x)])
    (a0, c, s), *_ = np.linalg.lstsq(design, signal, rcond=None)
    amp = math.hypot(c, s)
    if amp < 1e-12:
        raise NoExtremaFound("fringe amplitude indistinguishable from zero")
    x_crest = math.atan2(s, c) % (2.0 * math.pi)
    x_trough = x_crest + math.pi

    def windowed(center, sign):
        mask = (x >= center - 0.5 * math.pi) & (x <= center + 0.5 * math.pi)
        if not np.any(mask):
            raise NoExtremaFound("fringe extremum outside the scanned range")
        idx_local = np.argmax(sign * signal[mask])
        idx = np.flatnonzero(mask)[idx_local]
        return _parabolic_refine(x, signal, idx, sign)

    x_max, y_max = windowed(x_crest, +1)
    x_min, y_min = windowed(x_trough, -1)
    t_max = math.sqrt(x_max / (4.0 * abs(g)))
    t_min = math.sqrt(x_min / (4.0 * abs(g)))
    contrast = float(np.clip(y_max - y_min, 0.0, 1.0))
    return ContrastResult(contrast, t_max, t_min)


def fit_fringe(scan, freq_guess=None):
    """Least-squares cosine fit of P_sum against T^2.

    Model a0 + A cos(omega T^2 + phi); the frequency of an ideal fringe
    equals 4g.  freq_guess defaults to the semiclassical value.
    """
    y = scan.t_grid**2
    sig = scan.p_sum
    w0 = 4.0 * abs(scan.config.g) if freq_guess is None else freq_guess

    def model(yy, a0, a, w, ph):
        return a0 + a * np.cos(w * yy + ph)

    p0 = [float(np.mean(sig)), 0.5 * float(np.ptp(sig)), w0, math.pi]
    popt, _ = curve_fit(model, y, sig, p0=p0, maxfev=20000)
    a0, a, w, ph = popt
    if a < 0:
        a, ph = -a, ph + math.pi
    return FringeFit(float(w), float(ph % (2 * math.pi)), float(a),
                     float(a0))


def contrast_sweep(config, axis, values, t_grid=None):
    """Contrast versus one scenario knob; rows (axis value, contrast).

    axis is one of sigma_p, p0, epsilon.  Each value rebuilds the
    scenario, rescans, and re-extracts; failures surface, they are not
    silently skipped.
    """
    if axis not in ("sigma_p", "p0", "epsilon"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    if t_grid is None:
        t_grid = default_t_grid(config.g)
    rows = []
    for value in values:
        if axis == "epsilon":
            cfg = replace(config, epsilon=float(value))
        else:
            wp = config.source
            kw = {"sigma_p": wp.sigma_p, "p0": wp.p0}
            kw[axis] = float(value)
            cfg = replace(config, source=GaussianWavePacket(**kw))
        result = extract_contrast(t_scan(cfg, t_grid))
        rows.append((float(value), result.contrast))
    return rows


def fluctuation_robustness(config, sigma_r, n_shots=10, seed=0, t_grid=None):
    """Shot-to-shot drive-amplitude noise: mean and spread of contrast.

    Each shot draws one relative scale for both splitters and one for
    the mirror from Normal(1, sigma_r), rebuilds the pulse matrices and
    re-extracts the contrast.  Deterministic for a given seed.
    """
    if sigma_r < 0:
        raise ValueError("relative spread must be non-negative")
    if n_shots < 2:
        raise ValueError("need at least two shots")
    if t_grid is None:
        t_grid = default_t_grid(config.g)
    rng = np.random.default_rng(seed)
    strat = config.strategy
    contrasts = []
    for _ in range(n_shots):
        bs_scale = rng.normal(1.0, sigma_r)
        m_scale = rng.normal(1.0, sigma_r)
        shot = StrategySpec(
            strat.name,
            (strat.bs[0].scaled(bs_scale), strat.bs[1]),
            (strat.mirror[0].scaled(m_scale), strat.mirror[1]))
        scan = t_scan(replace(config, strategy=shot), t_grid)
        contrasts.append(extract_contrast(scan).contrast)
    arr = np.asarray(contrasts)
    return FluctuationResult(float(arr.mean()), float(arr.std()),
                             tuple(contrasts), seed)


# --- grid-oracle pipeline --------------------------------------------

def _oracle_point(job):
    """One interrogation time of the grid interferometer; picklable."""
    after_bs1, strat, epsilon, g, T, keep_ports, p0 = job
    st = grid_mod.free_propagate_analytic(after_bs1, g, T)
    st = grid_mod.split_step_pulse(st, strat.mirror[0], strat.mirror[1],
                                   epsilon)
    st = grid_mod.free_propagate_analytic(st, g, T)
    center = p0 + g * T
    if keep_ports is not None:
        st, _ = grid_mod.apply_port_projector(st, keep_ports, center)
    st = grid_mod.split_step_pulse(st, strat.bs[0], strat.bs[1], epsilon)
    hist = grid_mod.momentum_histogram(st, center)
    return (hist.populations[0], hist.populations[1], hist.populations[-1])


def oracle_fringe(config, t_grid, spec=None, keep_ports=(-1, 0, 1),
                  workers=1):
    """Same interferometer on the position grid, no basis truncation.

    Pulses run with their local clocks over their envelope supports and
    the inter-pulse separation is applied analytically, mirroring the
    S-matrix bookkeeping so the two pipelines are comparable point by
    point.  Resolved detection inserts the port projector before the
    final splitter pulse, the momentum-space stand-in for an absorbing
    slit.  T points are independent; with workers > 1 they run in a
    process pool and are reassembled in grid order.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if spec is None:
        spec = grid_mod.GridSpec()
    strat = config.strategy
    wp = config.source
    g = config.g
    slit = tuple(keep_ports) if config.detection == "resolved" else None

    start = grid_mod.prepare_wavepacket(spec, wp)
    after_bs1 = grid_mod.split_step_pulse(start, strat.bs[0], strat.bs[1],
                                          config.epsilon)
    jobs = [(after_bs1, strat, config.epsilon, g, float(T), slit, wp.p0)
            for T in t_grid]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_oracle_point, jobs))
    else:
        points = [_oracle_point(job) for job in jobs]
    out = np.asarray(points)
    return FringeScan(t_grid, out[:, 0], out[:, 1], out[:, 2], config)
