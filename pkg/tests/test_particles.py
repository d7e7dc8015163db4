import numpy as np
import pytest

from metaswarm.errors import DivergenceError, EmptyWindowError
from metaswarm.kernels import make_cubic, make_linear
from metaswarm.particles import (
    ParticleEnsemble,
    SdeConfig,
    cluster_masses,
    cubic_potential,
    density_estimate,
    energy,
    simulate,
    step_deterministic,
    step_stochastic,
)

CUBIC = make_cubic()
LINEAR = make_linear()


class TestDeterministicStep:
    def test_hand_euler_step(self):
        # dx1/dt = (1/2) f(-1) = 0.5 for f = -x
        ens = ParticleEnsemble(np.array([-0.5, 0.5]))
        out = step_deterministic(ens, LINEAR, 0.1)
        assert out.positions == pytest.approx([-0.45, 0.45], abs=1e-15)
        assert out.time == pytest.approx(0.1)

    def test_coincident_particles_fixed(self):
        ens = ParticleEnsemble(np.full(5, 0.3))
        out = step_deterministic(ens, CUBIC, 0.05)
        assert np.all(out.positions == 0.3)

    def test_unit_separation_fixed_for_cubic(self):
        ens = ParticleEnsemble(np.array([0.0, 1.0]))
        out = step_deterministic(ens, CUBIC, 0.7)
        assert out.positions == pytest.approx([0.0, 1.0], abs=1e-15)

    def test_center_of_mass_conserved(self):
        rng = np.random.default_rng(7)
        ens = ParticleEnsemble(rng.uniform(-0.5, 0.5, 50))
        com0 = ens.mean()
        cfg = SdeConfig(sigma=0.0, dt=1e-3, steps=10_000)
        final, _ = simulate(ens, CUBIC, cfg)
        assert abs(final.mean() - com0) <= 1e-10

    def test_divergence_detected(self):
        # absurd dt with the cubic force blows particles up
        ens = ParticleEnsemble(np.array([-2.0, 2.0]))
        with pytest.raises(DivergenceError):
            cfg = SdeConfig(sigma=0.0, dt=1e6, steps=50)
            with pytest.warns(RuntimeWarning):
                simulate(ens, CUBIC, cfg)

    def test_invalid_dt(self):
        with pytest.raises(ValueError):
            step_deterministic(ParticleEnsemble(np.zeros(2)), CUBIC, 0.0)


class TestStochasticStep:
    def test_zero_sigma_bit_identical(self):
        rng = np.random.default_rng(3)
        x0 = rng.uniform(-1, 1, 40)
        cfg = SdeConfig(sigma=0.0, dt=1e-3, steps=1)
        a = step_stochastic(ParticleEnsemble(x0.copy()), CUBIC, cfg,
                            cfg.make_rng())
        b = step_deterministic(ParticleEnsemble(x0.copy()), CUBIC, 1e-3)
        assert np.array_equal(a.positions, b.positions)

    def test_seeded_runs_identical(self):
        x0 = np.linspace(-0.5, 0.5, 30)
        cfg = SdeConfig(sigma=0.1, dt=1e-3, steps=500, seed=11)
        a, _ = simulate(ParticleEnsemble(x0.copy()), CUBIC, cfg)
        b, _ = simulate(ParticleEnsemble(x0.copy()), CUBIC, cfg)
        assert np.array_equal(a.positions, b.positions)

    def test_different_seeds_differ(self):
        x0 = np.linspace(-0.5, 0.5, 30)
        a, _ = simulate(ParticleEnsemble(x0.copy()), CUBIC,
                        SdeConfig(sigma=0.1, dt=1e-3, steps=100, seed=0))
        b, _ = simulate(ParticleEnsemble(x0.copy()), CUBIC,
                        SdeConfig(sigma=0.1, dt=1e-3, steps=100, seed=1))
        assert not np.array_equal(a.positions, b.positions)

    def test_record_chunking_consistent(self):
        # snapshots must not perturb the trajectory itself
        x0 = np.linspace(-0.5, 0.5, 20)
        cfg = SdeConfig(sigma=0.05, dt=1e-3, steps=400, seed=5)
        plain, _ = simulate(ParticleEnsemble(x0.copy()), CUBIC, cfg)
        chunked, snaps = simulate(ParticleEnsemble(x0.copy()), CUBIC, cfg,
                                  record_every=37)
        assert np.array_equal(plain.positions, chunked.positions)
        assert snaps[-1].time == pytest.approx(cfg.t_total)

    def test_stationary_variance_matches_diffusion(self):
        # for f = -x the spread equilibrates at eps^2 = sigma^2 / 2
        sigma = 0.2
        n = 200
        cfg = SdeConfig(sigma=sigma, dt=1e-3, steps=20_000, seed=2)
        rng = cfg.make_rng()
        ens, _ = simulate(ParticleEnsemble(np.zeros(n)), LINEAR, cfg, rng=rng)
        sample_cfg = SdeConfig(sigma=sigma, dt=1e-3, steps=2000, seed=2)
        _, snaps = simulate(ens, LINEAR, sample_cfg, record_every=2, rng=rng)
        var = float(np.mean([np.var(s.positions) for s in snaps]))
        eps2 = sigma ** 2 / 2.0
        assert abs(var - eps2) <= 0.1 * eps2


class TestEnergy:
    def test_coincident_zero(self):
        ens = ParticleEnsemble(np.full(4, 1.7))
        assert energy(ens, cubic_potential) == 0.0

    def test_pair_at_unit_distance(self):
        ens = ParticleEnsemble(np.array([0.0, 1.0]))
        assert energy(ens, cubic_potential) == pytest.approx(-0.5, abs=1e-15)

    def test_nonincreasing_along_flow(self):
        rng = np.random.default_rng(9)
        ens = ParticleEnsemble(rng.uniform(-0.6, 0.6, 30))
        e_prev = energy(ens, cubic_potential)
        for _ in range(200):
            ens = step_deterministic(ens, CUBIC, 1e-3)
            e = energy(ens, cubic_potential)
            assert e <= e_prev + 1e-12
            e_prev = e


class TestDensityEstimate:
    def test_single_bin_holds_all_mass(self):
        snap = ParticleEnsemble(np.full(10, 0.5))
        hist = density_estimate([snap], 1, (0.0, 1.0))
        assert float(np.sum(hist.counts * hist.bin_widths)) == pytest.approx(1.0)

    def test_uniform_bins(self):
        rng = np.random.default_rng(0)
        snap = ParticleEnsemble(rng.uniform(0.0, 1.0, 20_000))
        hist = density_estimate([snap], 10, (0.0, 1.0))
        masses = hist.counts * hist.bin_widths
        assert np.allclose(masses, 0.1, atol=0.01)

    def test_normalization_invariant(self):
        rng = np.random.default_rng(4)
        snaps = [ParticleEnsemble(rng.normal(0, 0.1, 100)) for _ in range(7)]
        hist = density_estimate(snaps, 25, (-0.5, 0.5))
        total = float(np.sum(hist.counts * hist.bin_widths))
        assert abs(total / hist.normalization - 1.0) <= 1e-12

    def test_empty_window(self):
        snap = ParticleEnsemble(np.zeros(5))
        with pytest.raises(EmptyWindowError):
            density_estimate([snap], 4, (10.0, 11.0))

    def test_no_snapshots(self):
        with pytest.raises(ValueError):
            density_estimate([], 4, (0.0, 1.0))


class TestClusterMasses:
    def test_80_120_split(self):
        x = np.concatenate([np.full(80, -0.5), np.full(120, 0.5)])
        assert cluster_masses(ParticleEnsemble(x), 0.0) == (0.4, 0.6)

    def test_all_left(self):
        ens = ParticleEnsemble(np.full(6, -1.0))
        assert cluster_masses(ens, 0.0) == (1.0, 0.0)

    def test_boundary_counts_right(self):
        ens = ParticleEnsemble(np.array([0.0, -1.0]))
        assert cluster_masses(ens, 0.0) == (0.5, 0.5)


class TestConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        {"sigma": -0.1, "dt": 1e-3, "steps": 1},
        {"sigma": 0.1, "dt": 0.0, "steps": 1},
        {"sigma": 0.1, "dt": 1e-3, "steps": 0},
    ])
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ValueError):
            SdeConfig(**kwargs)

    def test_total_time(self):
        assert SdeConfig(sigma=0.0, dt=0.5, steps=8).t_total == 4.0
