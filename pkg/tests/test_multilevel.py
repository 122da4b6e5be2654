import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbdsim.exceptions import BoundViolation
from dbdsim.multilevel import (
    LevelBasis,
    MultiLevelState,
    bare_momentum_populations,
    bare_transform,
    bs_efficiency,
    bs_transfer,
    build_hamiltonian,
    efficiency_landscape,
    evolve_pulse,
    integrated_efficiency,
    kinetic_offsets,
    mirror_efficiency,
    propagate_unitaries,
)
from dbdsim.units import (ConstantDetuning, GaussianWavePacket, LinearDetuning,
                          PulseEnvelope)

FLAT = ConstantDetuning(0.0)


def box(omega, tau):
    return PulseEnvelope("box", omega, tau)


class TestBasis:
    def test_dimension(self):
        assert LevelBasis(1).dimension == 3
        assert LevelBasis(2).dimension == 5
        assert LevelBasis(3).dimension == 7

    def test_kinetic_energies(self):
        e = LevelBasis(2, 0.3).kinetic_energies()
        assert np.allclose(e, [0.09, 4.09, 4.09, 16.09, 16.09])

    def test_offsets(self):
        assert np.allclose(kinetic_offsets(2), [0, 4, 4, 16, 16])

    def test_validation(self):
        with pytest.raises(ValueError):
            LevelBasis(0)
        with pytest.raises(ValueError):
            LevelBasis(2, 1.0)

    def test_labels(self):
        assert LevelBasis(2).labels() == ["p", "1,+", "1,-", "2,+", "2,-"]

    def test_state_shape_check(self):
        with pytest.raises(ValueError):
            MultiLevelState(LevelBasis(2), np.zeros(3))


class TestBareTransform:
    def test_orthogonal(self):
        for n_max in (1, 2, 3):
            v = bare_transform(n_max)
            assert np.max(np.abs(v @ v.T - np.eye(v.shape[0]))) < 1e-15

    def test_symmetric_state_maps_to_equal_weights(self):
        v = bare_transform(2)
        bare = v @ np.array([0, 1, 0, 0, 0], dtype=complex)
        # |1,+> = (|p+2> + |p-2>)/sqrt(2)
        assert bare[1] == pytest.approx(1 / np.sqrt(2))
        assert bare[2] == pytest.approx(1 / np.sqrt(2))


class TestHamiltonian:
    @given(st.floats(0.0, 5.0), st.floats(0.0, 3.0), st.floats(-3.0, 3.0),
           st.floats(0.0, 0.3), st.floats(-0.9, 0.9), st.integers(1, 3))
    @settings(max_examples=80)
    def test_hermitian(self, t, omega, delta, eps, p, n_max):
        h = build_hamiltonian(LevelBasis(n_max, p), t, box(omega, 10.0),
                              ConstantDetuning(delta), eps)
        assert np.max(np.abs(h - h.T)) <= 1e-14

    def test_elements(self):
        h = build_hamiltonian(LevelBasis(2, 0.25), 0.0, box(1.7, 1.0),
                              ConstantDetuning(0.3), 0.1)
        c = np.cos(0.0) + 0.1
        assert h[0, 1] == pytest.approx(np.sqrt(2) * 1.7 * c)
        assert h[1, 3] == pytest.approx(1.7 * c)
        assert h[1, 2] == pytest.approx(4 * 0.25)   # Doppler, n=1
        assert h[3, 4] == pytest.approx(8 * 0.25)   # Doppler, n=2
        assert h[0, 2] == 0.0
        assert np.allclose(np.diag(h),
                           LevelBasis(2, 0.25).kinetic_energies())


class TestPropagation:
    def test_unitarity(self):
        u = propagate_unitaries(np.array([-0.2, 0.0, 0.15]),
                                box(2.0, 0.6), FLAT)
        eye = np.eye(5)
        for m in u:
            assert np.max(np.abs(m.conj().T @ m - eye)) < 1e-8

    def test_parity_confinement_at_p_zero(self):
        # with no Doppler coupling the antisymmetric ladder is dark
        u = propagate_unitaries(0.0, box(2.0, 0.8), FLAT, epsilon=0.2,
                                basis="symmetric")
        assert abs(u[2, 0]) <= 1e-12
        assert abs(u[4, 0]) <= 1e-12

    def test_mirror_parity(self):
        env = PulseEnvelope("gaussian", 2.89, 0.64)
        for p in (0.07, -0.13, 0.2):
            fp = mirror_efficiency(-p, env, FLAT).value
            fm = mirror_efficiency(p, env, FLAT, direction="minus").value
            assert fm == pytest.approx(fp, abs=1e-6)

    def test_truncation_convergence_weak_drive(self):
        env = PulseEnvelope("gaussian", 1.5, 0.47)
        for p in (0.0, 0.1):
            f2 = bs_efficiency(p, env, FLAT, n_max=2).value
            f3 = bs_efficiency(p, env, FLAT, n_max=3).value
            assert abs(f2 - f3) <= 1e-4

    def test_truncation_scale_published_drives(self):
        # at the published drive strengths the +-4 edge states shift the
        # main ports at the few-1e-4 to 2e-3 scale; pin that ceiling
        for omega, tau in ((2.0, 0.47), (2.89, 0.64)):
            env = PulseEnvelope("gaussian", omega, tau)
            for p in (0.0, 0.2):
                u2 = propagate_unitaries(p, env, FLAT, n_max=2)
                u3 = propagate_unitaries(p, env, FLAT, n_max=3)
                d = np.abs(np.abs(u2[:3, :3]) ** 2
                           - np.abs(u3[:3, :3]) ** 2).max()
                assert d <= 3e-3

    def test_batch_matches_scalar(self):
        ps = np.array([-0.1, 0.05, 0.3])
        batch = propagate_unitaries(ps, box(1.5, 0.7), FLAT)
        for p, m in zip(ps, batch):
            single = propagate_unitaries(float(p), box(1.5, 0.7), FLAT)
            assert np.max(np.abs(single - m)) < 1e-7

    def test_delta_override_matches_protocol(self):
        u_prot = propagate_unitaries(0.1, box(2.0, 0.5),
                                     ConstantDetuning(0.4))
        u_over = propagate_unitaries(0.1, box(2.0, 0.5), None,
                                     delta_override=0.4)
        assert np.max(np.abs(u_prot - u_over)) < 1e-8

    def test_peak_scale_matches_scaled_envelope(self):
        env = box(2.0, 0.5)
        u_scaled = propagate_unitaries(0.05, env.scaled(1.1), FLAT)
        u_flag = propagate_unitaries(0.05, env, FLAT, peak_scale=1.1)
        assert np.max(np.abs(u_scaled - u_flag)) < 1e-8

    def test_bare_basis_is_conjugated_symmetric(self):
        u_sym = propagate_unitaries(0.12, box(2.0, 0.5), FLAT,
                                    basis="symmetric")
        u_bare = propagate_unitaries(0.12, box(2.0, 0.5), FLAT, basis="bare")
        v = bare_transform(2)
        assert np.max(np.abs(v @ u_sym @ v.T - u_bare)) < 1e-12

    def test_unknown_basis(self):
        with pytest.raises(ValueError):
            propagate_unitaries(0.0, box(1.0, 0.5), FLAT, basis="momentum")

    def test_protocol_bound_trips_before_integration(self):
        sweep = LinearDetuning(40.0, 0.0, width=0.5)  # reaches +-20
        with pytest.raises(BoundViolation):
            propagate_unitaries(0.0, box(1.0, 0.5), sweep)


class TestEvolveAndPorts:
    def test_norm_preserved(self):
        state = MultiLevelState(LevelBasis(2, 0.1), [1, 0, 0, 0, 0])
        out = evolve_pulse(state, PulseEnvelope("gaussian", 2.0, 0.47), FLAT)
        assert abs(out.norm() - 1.0) <= 1e-9

    def test_port_map_keys_and_total(self):
        state = MultiLevelState(LevelBasis(2, 0.1), [1, 0, 0, 0, 0])
        out = evolve_pulse(state, box(2.0, 0.6), FLAT)
        ports = bare_momentum_populations(out)
        assert sorted(ports) == sorted(
            [0.1 - 4, 0.1 - 2, 0.1, 0.1 + 2, 0.1 + 4])
        assert sum(ports.values()) == pytest.approx(1.0, abs=1e-9)


class TestEfficiencies:
    def test_bs_transfer_symmetric_at_p_zero(self):
        pp, pm = bs_transfer(0.0, PulseEnvelope("gaussian", 2.0, 0.47), FLAT)
        assert pp == pytest.approx(pm, abs=1e-10)

    def test_efficiency_record_fields(self):
        eff = bs_efficiency(0.1, box(2.0, 0.5), FLAT, epsilon=0.05)
        assert eff.kind == "beam_splitter"
        assert eff.p == 0.1 and eff.epsilon == 0.05
        assert 0.0 <= eff.value <= 1.0

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            mirror_efficiency(0.0, box(1.0, 0.5), FLAT, direction="sideways")

    def test_integrated_matches_quadrature(self):
        packet = GaussianWavePacket(0.0, 0.05)
        env = box(2.0, 0.6)
        eta = integrated_efficiency(packet, "beam_splitter", env, FLAT,
                                    n_nodes=32)
        p, w = packet.momentum_quadrature(32)
        pp, pm = bs_transfer(p, env, FLAT)
        assert eta == pytest.approx(float(np.sum(w * (pp + pm))), abs=1e-12)

    def test_integrated_bad_kind(self):
        with pytest.raises(ValueError):
            integrated_efficiency(GaussianWavePacket(0.0, 0.05), "phase",
                                  box(1.0, 0.5), FLAT)

    def test_landscape_shape_and_range(self):
        vals, errors = efficiency_landscape(
            np.array([-0.1, 0.0, 0.1]), np.array([0.0, 0.1]),
            "beam_splitter", box(2.0, 0.5), FLAT, rtol=1e-7, atol=1e-9)
        assert vals.shape == (3, 2)
        assert not errors
        assert np.all((vals >= 0) & (vals <= 1))
        # the landscape is p-symmetric at epsilon = 0
        assert vals[0, 0] == pytest.approx(vals[2, 0], abs=1e-8)

    def test_landscape_collects_errors(self):
        sweep = LinearDetuning(40.0, 0.0, width=0.5)
        vals, errors = efficiency_landscape(
            np.array([0.0, 0.1]), np.array([0.0]), "mirror_plus",
            box(1.0, 0.5), sweep, rtol=1e-7, atol=1e-9)
        assert np.all(np.isnan(vals))
        assert len(errors) == 2
