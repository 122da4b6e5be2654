"""Doppler-aware (2n+1)-level model of a double Bragg pulse.

The truncated momentum ladder couples |p> to the symmetric and
antisymmetric combinations |n,+-> = (|p+2n> +- |p-2n>)/sqrt(2) of the
first n_max diffraction orders.  With the drive factor
C(t) = cos[(4 + Delta(t)) t] + epsilon the non-zero matrix elements are

    <p|H|p>        = p**2            <n,s|H|n,s>     = p**2 + 4 n**2
    <p|H|1,+>      = sqrt(2) Omega C <n,s|H|n+1,s>   = Omega C
    <n,+|H|n,->    = 4 n p

(all in recoil units).  Integration runs in the interaction picture with
the diagonal kinetic part removed, which leaves slow coupling phases
exp(-i 4 t) and exp(-i 4 (2n+1) t) and keeps adaptive steps large.  A
common phase exp(-i p**2 dt) on all channels is dropped; it is global at
fixed quasi-momentum and cancels from every population and from every
relative phase the interferometer module consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import IntegratorFailure
from .units import (GaussianWavePacket, PulseEnvelope, RESONANCE,
                    carrier_factor)

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12


@dataclass(frozen=True)
class LevelBasis:
    """Ordered basis {|p>, |1,+>, |1,->, ..., |n_max,+>, |n_max,->}."""

    n_max: int = 2
    p: float = 0.0

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if abs(self.p) >= 1.0:
            raise ValueError("quasi-momentum must satisfy |p| < 1")

    @property
    def dimension(self):
        return 2 * self.n_max + 1

    def kinetic_energies(self):
        """Diagonal kinetic energies p**2 + 4 n**2 in basis order."""
        n = np.arange(1, self.n_max + 1)
        offs = np.repeat(4 * n * n, 2)
        return self.p**2 + np.concatenate(([0.0], offs))

    def labels(self):
        out = ["p"]
        for n in range(1, self.n_max + 1):
            out += [f"{n},+", f"{n},-"]
        return out


@dataclass(frozen=True)
class MultiLevelState:
    basis: LevelBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.basis.dimension,):
            raise ValueError("amplitude vector does not match basis size")
        object.__setattr__(self, "amplitudes", amps)

    def norm(self):
        return float(np.sum(np.abs(self.amplitudes) ** 2))


@dataclass(frozen=True)
class PulseEfficiency:
    kind: str  # beam_splitter | mirror_plus | mirror_minus
    value: float
    p: float
    epsilon: float


def kinetic_offsets(n_max):
    """4 n**2 ladder offsets (p**2 removed), basis order."""
    n = np.arange(1, n_max + 1)
    return np.concatenate(([0.0], np.repeat(4.0 * n * n, 2)))


def bare_transform(n_max):
    """Unitary V with columns = symmetric-basis states in bare order.

    Bare ordering is {|p>, |p+2>, |p-2>, ..., |p+2n>, |p-2n>}; amplitudes
    map as a_bare = V a_sym.
    """
    d = 2 * n_max + 1
    v = np.zeros((d, d))
    v[0, 0] = 1.0
    s = 1.0 / np.sqrt(2.0)
    for n in range(1, n_max + 1):
        i = 2 * n - 1
        v[i, i] = s       # <p+2n|n,+>
        v[i, i + 1] = s   # <p+2n|n,->
        v[i + 1, i] = s
        v[i + 1, i + 1] = -s
    return v


def build_hamiltonian(basis, t, envelope, protocol, epsilon=0.0):
    """Full Schroedinger-picture matrix at time t, symmetric basis."""
    d = basis.dimension
    h = np.zeros((d, d))
    np.fill_diagonal(h, basis.kinetic_energies())
    omega = float(envelope.evaluate(t))
    delta = float(protocol.evaluate(t))
    c = float(carrier_factor(t, delta, epsilon))
    h[0, 1] = h[1, 0] = np.sqrt(2.0) * omega * c
    for n in range(1, basis.n_max):
        for off in (0, 1):
            i = 2 * n - 1 + off
            h[i, i + 2] = h[i + 2, i] = omega * c
    for n in range(1, basis.n_max + 1):
        i = 2 * n - 1
        h[i, i + 1] = h[i + 1, i] = 4.0 * n * basis.p
    return h


def _coupling_bands(n_max):
    """(row, col, weight, phase_rate) for each upper-triangle coupling."""
    bands = [(0, 1, np.sqrt(2.0), 4.0)]
    for n in range(1, n_max):
        rate = 4.0 * (2 * n + 1)
        bands.append((2 * n - 1, 2 * n + 1, 1.0, rate))
        bands.append((2 * n, 2 * n + 2, 1.0, rate))
    return bands


def _validate_protocol(protocol, window):
    """Trip the protocol's bound check once over the pulse window."""
    t = np.linspace(window[0], window[1], 257)
    protocol.evaluate(t)


def propagate_unitaries(p, envelope, protocol, epsilon=0.0, n_max=2,
                        rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, basis="bare",
                        delta_override=None, peak_scale=None, window=None):
    """Pulse propagators for a batch of quasi-momenta.

    Integrates the interaction-picture matrix equation dU/dt = -i Hbar U
    over the envelope support and reattaches the kinetic ladder phases,
    so the returned matrices are Schroedinger-picture pulse unitaries
    (modulo the common exp(-i p**2 dt) phase, see module docstring).

    Parameters
    ----------
    p : float or (B,) array
        Quasi-momenta; the batch shares one time grid.
    envelope, protocol : PulseEnvelope, DetuningProtocol
    epsilon : float or (B,) array
        Polarization imbalance per system.
    basis : {'bare', 'symmetric'}
        Bare ordering is {|p>, |p+2>, |p-2>, ...}; columns are evolved
        input states either way.
    delta_override : (B,) array, optional
        Per-system constant detuning replacing `protocol` (used by
        detuning grid searches).
    peak_scale : (B,) array, optional
        Per-system multiplier on the envelope peak (used by fluctuation
        sampling).
    window : (t0, t1), optional
        Integration window override; defaults to the envelope support.

    Returns
    -------
    (B, d, d) complex array, or (d, d) if p was scalar.
    """
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    scalar_in = np.isscalar(p) or np.ndim(p) == 0
    nsys = p_arr.size
    d = 2 * n_max + 1
    eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (nsys,))
    scale = None if peak_scale is None else \
        np.broadcast_to(np.asarray(peak_scale, dtype=float), (nsys,))
    if delta_override is not None:
        delta_override = np.broadcast_to(
            np.asarray(delta_override, dtype=float), (nsys,))

    t0, t1 = window if window is not None else envelope.support
    if delta_override is None:
        _validate_protocol(protocol, (t0, t1))

    bands = _coupling_bands(n_max)
    offsets = kinetic_offsets(n_max)

    # Constant Doppler couplings go into the work matrix once.
    a = np.zeros((nsys, d, d), dtype=complex)
    for n in range(1, n_max + 1):
        i = 2 * n - 1
        a[:, i, i + 1] = 4.0 * n * p_arr
        a[:, i + 1, i] = 4.0 * n * p_arr

    def rhs(t, y):
        u = y.view(complex).reshape(nsys, d, d)
        om = envelope.evaluate(t)
        if scale is not None:
            om = om * scale
        if delta_override is not None:
            c = carrier_factor(t, delta_override, 0.0) + eps
        else:
            c = carrier_factor(t, protocol.evaluate(t, check=False), 0.0) + eps
        drive = om * c
        for (i, j, wgt, rate) in bands:
            ph = np.exp(-1j * rate * t)
            a[:, i, j] = wgt * drive * ph
            a[:, j, i] = wgt * drive * np.conj(ph)
        du = -1j * np.einsum("bij,bjk->bik", a, u)
        return du.reshape(-1).view(float)

    y0 = np.broadcast_to(np.eye(d, dtype=complex), (nsys, d, d))
    y0 = np.ascontiguousarray(y0).reshape(-1).view(float)
    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegratorFailure(f"pulse integration failed: {sol.message}")
    u_int = sol.y[:, -1].copy().view(complex).reshape(nsys, d, d)

    # U_S = exp(-i E t1) U_I exp(+i E t0) with E the ladder offsets.
    u_s = np.exp(-1j * offsets[:, None] * t1) * u_int \
        * np.exp(1j * offsets[None, :] * t0)
    if basis == "bare":
        v = bare_transform(n_max)
        u_s = v @ u_s @ v.T
    elif basis != "symmetric":
        raise ValueError(f"unknown basis {basis!r}")
    return u_s[0] if scalar_in else u_s


def evolve_pulse(state, envelope, protocol, epsilon=0.0,
                 rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Drive a MultiLevelState through one pulse (symmetric basis in/out)."""
    u = propagate_unitaries(state.basis.p, envelope, protocol, epsilon,
                            n_max=state.basis.n_max, rtol=rtol, atol=atol,
                            basis="symmetric")
    return MultiLevelState(state.basis, u @ state.amplitudes)


def bare_momentum_populations(state):
    """Map {p + 2k : probability} from a symmetric-basis state."""
    v = bare_transform(state.basis.n_max)
    bare = v @ state.amplitudes
    probs = np.abs(bare) ** 2
    ports = {0: probs[0]}
    for n in range(1, state.basis.n_max + 1):
        ports[n] = probs[2 * n - 1]
        ports[-n] = probs[2 * n]
    p = state.basis.p
    return {p + 2 * k: float(val) for k, val in sorted(ports.items())}


def bs_transfer(p, envelope, protocol, epsilon=0.0, n_max=2, **kw):
    """(P_plus, P_minus): populations of |p+-2> after a pulse on |p>.

    Batched over p; returns arrays matching the input shape.
    """
    u = propagate_unitaries(p, envelope, protocol, epsilon, n_max=n_max, **kw)
    u = u if u.ndim == 3 else u[None]
    pp = np.abs(u[:, 1, 0]) ** 2
    pm = np.abs(u[:, 2, 0]) ** 2
    if np.ndim(p) == 0:
        return float(pp[0]), float(pm[0])
    return pp, pm


def bs_efficiency(p, envelope, protocol, epsilon=0.0, n_max=2, **kw):
    """F_BS(p) = P(|p> -> |p+2>) + P(|p> -> |p-2>)."""
    pp, pm = bs_transfer(p, envelope, protocol, epsilon, n_max=n_max, **kw)
    return PulseEfficiency("beam_splitter", float(pp + pm), float(p),
                           float(epsilon))


def mirror_efficiency(p, envelope, protocol, epsilon=0.0, direction="plus",
                      n_max=2, **kw):
    """Mirror transfer with p the deviation from the +-2 hbar k_L carrier.

    direction 'plus':  F_M+(p) = P(|p+2> -> |p-2>)
    direction 'minus': F_M-(p) = P(|p-2> -> |p+2>)
    """
    u = propagate_unitaries(p, envelope, protocol, epsilon, n_max=n_max, **kw)
    if direction == "plus":
        val = abs(u[2, 1]) ** 2
        kind = "mirror_plus"
    elif direction == "minus":
        val = abs(u[1, 2]) ** 2
        kind = "mirror_minus"
    else:
        raise ValueError(f"unknown mirror direction {direction!r}")
    return PulseEfficiency(kind, float(val), float(p), float(epsilon))


def integrated_efficiency(packet, kind, envelope, protocol, epsilon=0.0,
                          n_max=2, n_nodes=64, **kw):
    """eta = integral |psi(p)|**2 F(p) dp over the packet support.

    kind 'beam_splitter' uses F_BS; 'mirror_plus'/'mirror_minus' use the
    mirror transfer with p measured relative to the +-2 carrier.
    """
    p, w = packet.momentum_quadrature(n_nodes)
    u = propagate_unitaries(p, envelope, protocol, epsilon, n_max=n_max, **kw)
    if kind == "beam_splitter":
        f = np.abs(u[:, 1, 0]) ** 2 + np.abs(u[:, 2, 0]) ** 2
    elif kind == "mirror_plus":
        f = np.abs(u[:, 2, 1]) ** 2
    elif kind == "mirror_minus":
        f = np.abs(u[:, 1, 2]) ** 2
    else:
        raise ValueError(f"unknown efficiency kind {kind!r}")
    return float(np.sum(w * f))


def efficiency_landscape(p_values, eps_values, kind, envelope, protocol,
                         n_max=2, **kw):
    """Dense F(p, epsilon) scan; failed cells become NaN.

    Returns (values, errors) where values has shape
    (len(p_values), len(eps_values)) and errors maps (i, j) -> message.
    """
    p_values = np.asarray(p_values, dtype=float)
    eps_values = np.asarray(eps_values, dtype=float)
    out = np.full((p_values.size, eps_values.size), np.nan)
    errors = {}
    for j, eps in enumerate(eps_values):
        try:
            u = propagate_unitaries(p_values, envelope, protocol, eps,
                                    n_max=n_max, **kw)
            for i in range(p_values.size):
                out[i, j] = _landscape_cell(u, i, kind)
        except Exception:  # batch failed; retry cells one at a time
            for i, p in enumerate(p_values):
                try:
                    u1 = propagate_unitaries(float(p), envelope, protocol,
                                             eps, n_max=n_max, **kw)
                    out[i, j] = _landscape_cell(u1[None], 0, kind)
                except Exception as exc:
                    errors[(i, j)] = str(exc)
    return out, errors


def _landscape_cell(u, i, kind):
    if kind == "beam_splitter":
        return abs(u[i, 1, 0]) ** 2 + abs(u[i, 2, 0]) ** 2
    if kind == "mirror_plus":
        return abs(u[i, 2, 1]) ** 2
    if kind == "mirror_minus":
        return abs(u[i, 1, 2]) ** 2
    raise ValueError(f"unknown efficiency kind {kind!r}")
