import numpy as np
import pytest

from metaswarm.errors import ConfigurationError, DivergenceError
from metaswarm.kernels import Kernel, make_cubic, make_linear
from metaswarm.pde import (
    DensityField,
    Grid,
    PdeConfig,
    log_spaced_times,
    mass_split,
    run_to,
    semi_implicit_step,
    velocity_field,
    velocity_field_fast,
)
from metaswarm.quasisteady import build_two_spike

CUBIC = make_cubic()
LINEAR = make_linear()
ZERO_FORCE = Kernel(label="zero", coefficients=(0.0,))


def gaussian_field(grid, center, width, mass=1.0, time=0.0):
    xc = grid.centers()
    vals = np.exp(-0.5 * ((xc - center) / width) ** 2)
    vals *= mass / (vals.sum() * grid.dx)
    return DensityField(grid, vals, time)


class TestGrid:
    def test_spacing_and_centers(self):
        g = Grid(0.0, 3.0, 600)
        assert g.dx == pytest.approx(0.005)
        xc = g.centers()
        assert xc[0] == pytest.approx(0.0025)
        assert xc[-1] == pytest.approx(2.9975)
        assert np.allclose(np.diff(xc), g.dx)

    def test_invalid_grids(self):
        with pytest.raises(ConfigurationError):
            Grid(1.0, 0.0, 100)
        with pytest.raises(ConfigurationError):
            Grid(0.0, 1.0, 8)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            PdeConfig(eps2=0.0, dt=1e-3, t_end=1.0)
        with pytest.raises(ConfigurationError):
            PdeConfig(eps2=1e-3, dt=-1e-3, t_end=1.0)
        with pytest.raises(ConfigurationError):
            PdeConfig(eps2=1e-3, dt=1e-3, t_end=-1.0)

    def test_log_spaced_times(self):
        ts = log_spaced_times(1.0, 100.0, 5)
        assert ts[0] == pytest.approx(1.0)
        assert ts[-1] == pytest.approx(100.0)
        assert np.allclose(np.diff(np.log(ts)), np.log(10.0) / 2.0)
        with pytest.raises(ValueError):
            log_spaced_times(0.0, 1.0, 3)


class TestVelocityField:
    def test_near_delta_acts_like_point_force(self):
        grid = Grid(-2.0, 2.0, 800)
        rho = gaussian_field(grid, 0.3, 0.01, mass=0.7)
        xc = grid.centers()
        v = velocity_field(rho, CUBIC)
        probe = np.abs(xc - 0.3) > 0.2
        expected = 0.7 * CUBIC.eval(xc - 0.3)
        assert np.max(np.abs(v - expected)[probe]) <= 1e-3

    def test_symmetric_density_zero_at_center(self):
        grid = Grid(-1.0, 1.0, 400)
        rho = gaussian_field(grid, 0.0, 0.2)
        v = velocity_field(rho, CUBIC)
        # odd force, even density: v is odd about the center
        assert np.max(np.abs(v + v[::-1])) <= 1e-12

    def test_two_deltas_superpose(self):
        grid = Grid(-1.0, 3.0, 1000)
        xc = grid.centers()
        vals = (gaussian_field(grid, 0.0, 0.008, 0.4).values
                + gaussian_field(grid, 1.0, 0.008, 0.6).values)
        rho = DensityField(grid, vals)
        v = velocity_field(rho, CUBIC)
        expected = 0.4 * CUBIC.eval(xc) + 0.6 * CUBIC.eval(xc - 1.0)
        probe = (np.abs(xc) > 0.15) & (np.abs(xc - 1.0) > 0.15)
        assert np.max(np.abs(v - expected)[probe]) <= 1e-3

    @pytest.mark.parametrize("k", [LINEAR, CUBIC])
    def test_fast_path_matches_direct(self, k):
        rng = np.random.default_rng(12)
        grid = Grid(-0.7, 2.3, 300)
        rho = DensityField(grid, rng.uniform(0.0, 2.0, 300))
        direct = velocity_field(rho, k)
        fast = velocity_field_fast(rho, k)
        assert np.max(np.abs(direct - fast)) <= 1e-10


class TestSemiImplicitStep:
    def test_pure_diffusion_variance_growth(self):
        grid = Grid(-1.0, 1.0, 400)
        rho = gaussian_field(grid, 0.0, 0.1)
        eps2 = 0.01
        cfg = PdeConfig(eps2=eps2, dt=1e-3, t_end=1.0)
        xc = grid.centers()

        def variance(f):
            m = f.total_mass
            mu = np.sum(xc * f.values) * grid.dx / m
            return np.sum((xc - mu) ** 2 * f.values) * grid.dx / m

        v0 = variance(rho)
        nsteps = 100
        for _ in range(nsteps):
            rho = semi_implicit_step(rho, ZERO_FORCE, cfg)
        growth = variance(rho) - v0
        assert growth == pytest.approx(2.0 * eps2 * cfg.dt * nsteps, rel=1e-2)

    def test_mass_conserved_per_step(self):
        grid = Grid(0.0, 3.0, 300)
        rho = gaussian_field(grid, 1.5, 0.2)
        cfg = PdeConfig(eps2=1e-3, dt=2e-4, t_end=1.0)
        m0 = rho.total_mass
        for _ in range(50):
            rho = semi_implicit_step(rho, CUBIC, cfg)
            assert abs(rho.total_mass - m0) / m0 <= 1e-12

    def test_positivity_preserved(self):
        grid = Grid(0.0, 3.0, 300)
        rho = gaussian_field(grid, 1.2, 0.05)
        cfg = PdeConfig(eps2=1e-3, dt=2e-4, t_end=1.0)
        for _ in range(200):
            rho = semi_implicit_step(rho, CUBIC, cfg)
        assert float(np.min(rho.values)) >= -1e-13

    def test_symmetric_run_stays_symmetric(self):
        eps = float(np.sqrt(1e-3))
        grid = Grid(0.0, 3.0, 760)
        rho = build_two_spike(0.5, 0.5, 1.0, CUBIC, eps, grid)
        cfg = PdeConfig(eps2=eps ** 2, dt=5e-4, t_end=2.0)
        _, final = run_to(rho, CUBIC, cfg)
        assert np.max(np.abs(final.values - final.values[::-1])) <= 1e-10

    def test_blowup_detected(self):
        grid = Grid(0.0, 3.0, 64)
        rho = gaussian_field(grid, 1.5, 0.2)
        cfg = PdeConfig(eps2=1e-3, dt=50.0, t_end=100.0)
        with pytest.raises(DivergenceError):
            with pytest.warns(RuntimeWarning):
                for _ in range(100):
                    rho = semi_implicit_step(rho, CUBIC, cfg)


class TestMassSplit:
    def test_symmetric_split(self):
        grid = Grid(-1.0, 1.0, 200)
        rho = gaussian_field(grid, 0.0, 0.3, mass=2.0)
        m1, m2 = mass_split(rho, 0.0)
        assert m1 == pytest.approx(1.0, abs=1e-12)
        assert m2 == pytest.approx(1.0, abs=1e-12)

    def test_all_mass_on_one_side(self):
        grid = Grid(0.0, 2.0, 100)
        rho = gaussian_field(grid, 0.5, 0.05)
        m1, m2 = mass_split(rho, 1.9)
        assert m1 == pytest.approx(1.0, abs=1e-9)
        assert m2 == pytest.approx(0.0, abs=1e-9)

    def test_fractional_cell_split(self):
        grid = Grid(0.0, 1.0, 20)
        rho = DensityField(grid, np.ones(20))
        m1, _ = mass_split(rho, 0.512)
        assert m1 == pytest.approx(0.512, abs=1e-14)

    def test_outside_grid_rejected(self):
        grid = Grid(0.0, 1.0, 20)
        rho = DensityField(grid, np.ones(20))
        with pytest.raises(ValueError):
            mass_split(rho, 1.5)


class TestRunTo:
    def test_zero_horizon_returns_input(self):
        grid = Grid(0.0, 3.0, 100)
        rho = gaussian_field(grid, 1.5, 0.2)
        cfg = PdeConfig(eps2=1e-3, dt=1e-3, t_end=0.0)
        traj, final = run_to(rho, CUBIC, cfg)
        assert len(traj) == 0
        assert np.array_equal(final.values, rho.values)

    def test_output_times_recorded(self):
        grid = Grid(0.0, 3.0, 300)
        rho = gaussian_field(grid, 1.5, 0.2)
        cfg = PdeConfig(eps2=1e-3, dt=1e-3, t_end=1.0,
                        output_times=np.array([0.25, 0.5, 1.0]))
        traj, final = run_to(rho, CUBIC, cfg)
        assert traj.t == pytest.approx([0.25, 0.5, 1.0])
        assert final.time == pytest.approx(1.0)

    def test_domain_doubling_invariance(self):
        # enlarging the domain at fixed dx leaves the mass trajectory alone
        eps = float(np.sqrt(1e-3))
        out = np.array([2.0, 5.0, 10.0])
        results = []
        for x_left, x_right in ((0.0, 3.0), (-1.5, 4.5)):
            n = int(round((x_right - x_left) / 0.005))
            grid = Grid(x_left, x_right, n)
            rho = build_two_spike(0.4, 0.6, 1.0, CUBIC, eps, grid)
            # the cubic force is large at the far edges of the doubled
            # domain; the CFL bound there is dx / max|v| ~ 1.7e-4
            cfg = PdeConfig(eps2=eps ** 2, dt=1.25e-4, t_end=10.0,
                            output_times=out)
            traj, _ = run_to(rho, CUBIC, cfg, x1=1.0,
                             initial_masses=(0.4, 0.6))
            results.append(traj.M1)
        assert np.max(np.abs(results[0] - results[1])) <= 1e-8

    def test_spatial_self_convergence(self):
        # first-order upwind: halving dx shrinks the L1 difference ~2x
        eps2 = 0.01
        fields = {}
        for n in (100, 200, 400):
            grid = Grid(-1.0, 1.0, n)
            rho = gaussian_field(grid, 0.1, 0.25)
            cfg = PdeConfig(eps2=eps2, dt=2e-4, t_end=1.0)
            _, fields[n] = run_to(rho, CUBIC, cfg)

        def coarsen(values):
            return 0.5 * (values[0::2] + values[1::2])

        dx = 2.0 / 100
        err_coarse = np.sum(np.abs(fields[100].values
                                   - coarsen(fields[200].values))) * dx
        err_fine = np.sum(np.abs(coarsen(fields[200].values)
                                 - coarsen(coarsen(fields[400].values)))) * dx
        assert err_coarse / err_fine >= 1.8


class TestSteadyState:
    def test_linear_force_reaches_gaussian(self):
        eps2 = 1e-3
        grid = Grid(-0.25, 0.25, 256)
        rho = gaussian_field(grid, 0.0, 0.06)
        cfg = PdeConfig(eps2=eps2, dt=2e-4, t_end=100.0)
        prev = rho.values.copy()
        residual = np.inf
        while rho.time < 100.0 and residual > 1e-8:
            for _ in range(200):
                rho = semi_implicit_step(rho, LINEAR, cfg)
            residual = float(np.max(np.abs(rho.values - prev)) / (200 * cfg.dt))
            prev = rho.values.copy()
        assert residual <= 1e-8
        xc = grid.centers()
        exact = np.exp(-0.5 * xc ** 2 / eps2) / np.sqrt(2.0 * np.pi * eps2)
        rel = np.max(np.abs(rho.values - exact)) / np.max(exact)
        assert rel <= 0.02
