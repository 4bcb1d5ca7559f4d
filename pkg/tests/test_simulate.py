import numpy as np
import pytest

from sosinr.core import ArrayGeometry, ImagingGrid, PulseModel, Seed, SoSGrid, default_grid, pixel_positions
from sosinr.signal import hilbert_fft
from sosinr.simulate import (
    Inclusion,
    PhantomSpec,
    ScattererField,
    inclusion_phantom,
    phantom_to_sos_grid,
    pulse_sigma,
    sample_scatterers,
    simulate_rf,
)

PULSE = PulseModel(5e6, 25e6, 0.6)


def test_empty_phantom_is_constant():
    grid = default_grid()
    m = phantom_to_sos_grid(PhantomSpec(1540.0, ()), grid)
    assert np.all(m.values == 1540.0)


def test_single_inclusion_values():
    grid = default_grid()
    spec = inclusion_phantom(1480.0, center=(0.0, 15e-3))
    m = phantom_to_sos_grid(spec, grid)
    d = np.hypot(*(pixel_positions(grid) - np.array([0.0, 15e-3])).T).reshape(grid.shape)
    assert np.all(m.values[d < 5e-3] == 1480.0)
    assert np.all(m.values[d >= 5e-3] == 1540.0)


def test_inclusion_area_fraction():
    # fine grid so the area estimate is meaningful; brute-force point-in-circle count
    grid = ImagingGrid((-10e-3, 1e-3), 201, 301, 0.1e-3, 0.1e-3)
    spec = inclusion_phantom(1600.0, center=(0.0, 15e-3))
    m = phantom_to_sos_grid(spec, grid)
    d2 = [x**2 + (z - 15e-3) ** 2 for x, z in pixel_positions(grid)]
    inside = sum(1 for v in d2 if v < (5e-3) ** 2)
    # nodes exactly on the circle (3-4-5 triangles) are decided by rounding
    ties = sum(1 for v in d2 if abs(v - (5e-3) ** 2) < 1e-15)
    assert abs(np.count_nonzero(m.values == 1600.0) - inside) <= ties
    x0, x1, z0, z1 = grid.extent
    expected = np.pi * 5e-3**2 / ((x1 - x0) * (z1 - z0))
    frac = inside / grid.size
    # one cell band around the circumference
    band = 2 * np.pi * 5e-3 * 0.1e-3 / ((x1 - x0) * (z1 - z0))
    assert abs(frac - expected) < band


def test_inclusion_must_fit_grid():
    grid = default_grid()
    with pytest.raises(ValueError):
        phantom_to_sos_grid(inclusion_phantom(1480.0, center=(-8e-3, 15e-3)), grid)


def test_scatterer_count_and_determinism():
    grid = ImagingGrid((-10e-3, 0.0), 21, 31, 1e-3, 1e-3)  # 20 mm x 30 mm box
    spec = PhantomSpec(1540.0, (), scatterer_density=2.0)
    a = sample_scatterers(spec, grid, Seed(3))
    b = sample_scatterers(spec, grid, Seed(3))
    assert len(a.amplitudes) == 1200
    assert a.positions.tobytes() == b.positions.tobytes()
    assert a.amplitudes.tobytes() == b.amplitudes.tobytes()
    x0, x1, z0, z1 = grid.extent
    assert a.positions[:, 0].min() >= x0 and a.positions[:, 0].max() <= x1
    assert a.positions[:, 1].min() >= z0 and a.positions[:, 1].max() <= z1


def test_scatterer_amplitude_mean_monte_carlo():
    grid = ImagingGrid((-10e-3, 0.0), 21, 31, 1e-3, 1e-3)
    field = sample_scatterers(PhantomSpec(1540.0, (), 20.0), grid, Seed(11))
    n = field.amplitudes.size
    assert n >= 10_000
    assert abs(field.amplitudes.mean()) < 3 / np.sqrt(n)


def test_empty_scatterer_field():
    grid = ImagingGrid((0.0, 0.0), 2, 2, 1e-4, 1e-4)
    with pytest.raises(ValueError, match="empty scatterer field"):
        sample_scatterers(PhantomSpec(1540.0, (), 1.0), grid, Seed(0))


def _one(pos, amp=1.0):
    return ScattererField(np.atleast_2d(pos), np.atleast_1d(amp), Seed(0))


def test_zero_amplitude_gives_zero_rf():
    grid = default_grid()
    geom = ArrayGeometry.linear(4, 0.3e-3)
    sos = SoSGrid.constant(grid, 1540.0)
    field = ScattererField(np.array([[0.0, 10e-3], [1e-3, 12e-3]]), np.zeros(2), Seed(0))
    rf = simulate_rf(geom, PULSE, sos, field, 1024)
    assert not rf.rf.any()


def test_echo_peak_two_way_time():
    grid = default_grid()
    geom = ArrayGeometry.linear(31, 0.3e-3)  # odd count: center element at x = 0
    sos = SoSGrid.constant(grid, 1540.0)
    rf = simulate_rf(geom, PULSE, sos, _one([0.0, 15e-3]), 1024)
    trace = rf.rf[15, 15]
    env = np.abs(hilbert_fft(trace))
    k = int(np.argmax(env))
    # refine with a parabola through the envelope peak
    y0, y1, y2 = env[k - 1 : k + 2]
    k_ref = k + 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2)
    t_peak = rf.t0 + k_ref / rf.sampling_frequency
    expected = 2 * 0.015 / 1540
    assert expected == pytest.approx(19.48e-6, abs=0.01e-6)
    assert abs(t_peak - expected) < 1 / rf.sampling_frequency


def test_superposition():
    grid = default_grid()
    geom = ArrayGeometry.linear(6, 0.3e-3)
    sos = phantom_to_sos_grid(inclusion_phantom(1510.0), grid)
    a = simulate_rf(geom, PULSE, sos, _one([1e-3, 12e-3], 0.7), 1024).rf
    b = simulate_rf(geom, PULSE, sos, _one([-2e-3, 20e-3], -1.3), 1024).rf
    both = ScattererField(np.array([[1e-3, 12e-3], [-2e-3, 20e-3]]), np.array([0.7, -1.3]), Seed(0))
    ab = simulate_rf(geom, PULSE, sos, both, 1024).rf
    assert np.max(np.abs(ab - (a + b))) < 1e-10 * np.max(np.abs(ab))


def test_time_shift_one_mm_deeper():
    grid = default_grid()
    geom = ArrayGeometry.linear(3, 0.3e-3)
    sos = SoSGrid.constant(grid, 1540.0)
    fs = PULSE.sampling_frequency

    def peak(z):
        rf = simulate_rf(geom, PULSE, sos, _one([0.0, z]), 1024)
        return np.argmax(np.abs(hilbert_fft(rf.rf[1, 1]))) / fs

    shift = peak(16e-3) - peak(15e-3)
    assert abs(shift - 2 * 0.001 / 1540) <= 1 / fs


def test_n_samples_precondition_names_minimum():
    grid = default_grid()
    geom = ArrayGeometry.linear(4, 0.3e-3)
    sos = SoSGrid.constant(grid, 1540.0)
    with pytest.raises(ValueError, match="need at least"):
        simulate_rf(geom, PULSE, sos, _one([0.0, 25e-3]), 200)


def test_simulation_deterministic():
    grid = default_grid()
    geom = ArrayGeometry.linear(4, 0.3e-3)
    spec = inclusion_phantom(1570.0, density=0.5)
    sos = phantom_to_sos_grid(spec, grid)
    f = sample_scatterers(spec, grid, Seed(9))
    a = simulate_rf(geom, PULSE, sos, f, 1200).rf
    b = simulate_rf(geom, PULSE, sos, f, 1200).rf
    assert a.tobytes() == b.tobytes()


def test_pulse_bandwidth_formula():
    # -6 dB full width of the Gaussian spectrum equals B * f0
    sigma = pulse_sigma(PULSE)
    f = np.linspace(0, 10e6, 200001)
    spec = np.exp(-2 * np.pi**2 * sigma**2 * (f - 5e6) ** 2)
    above = f[spec >= 0.5]
    assert above[-1] - above[0] == pytest.approx(0.6 * 5e6, rel=1e-3)


def test_inclusion_dataclass_validation():
    grid = default_grid()
    with pytest.raises(ValueError):
        PhantomSpec(1540.0, (Inclusion((0.0, 15e-3), -1e-3, 1500.0),)).validate(grid)
    with pytest.raises(ValueError):
        PhantomSpec(1900.0).validate(grid)
