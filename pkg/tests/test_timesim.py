import math

import numpy as np
import pytest

from mrqm.errors import InvalidArgumentError, StepSizeError, WindowTooShortError
from mrqm.model import ChannelParams, empty_config, eval_S, paper_config
from mrqm.timesim import (
    PulseSpec,
    TimeSeries,
    compare_fd_td,
    discretize_all,
    discretize_ensemble,
    make_pulse,
    max_stable_dt,
    output_spectra,
    run,
    simulate,
    time_grid,
)

KAPPA = 100.0


def chan(f_sq=1.01**2, w=1.8, center=0.5):
    return ChannelParams(index=1, f_sq=f_sq, gamma2_inv=w, g=0.385, delta_c=0.56, delta_spin=center)


# ---------------------------------------------------------------- ensembles

def test_discretize_single_spin():
    e = discretize_ensemble(chan(), 1)
    assert e.detunings.tolist() == [0.0]
    assert e.coupling**2 == pytest.approx(1.01**2, rel=1e-15)


def test_discretize_two_spins_quartiles():
    e = discretize_ensemble(chan(), 2)
    assert e.detunings == pytest.approx([-1.8, 1.8], rel=1e-15)


@pytest.mark.parametrize("n", [2, 7, 200])
def test_discretize_weights_and_symmetry(n):
    e = discretize_ensemble(chan(), n)
    assert e.f_sq == pytest.approx(1.01**2, rel=1e-14)
    assert np.array_equal(e.detunings, -e.detunings[::-1])
    assert np.all(np.diff(e.detunings) > 0)


def test_discretize_rejects_empty():
    with pytest.raises(InvalidArgumentError):
        discretize_ensemble(chan(), 0)


def test_discrete_susceptibility_matches_lorentzian():
    # A finite set of undamped spins has poles on the real axis, so the comparison is made
    # a small distance eta above it, where the Lorentzian continues to f^2/(w + eta + i(c - nu)).
    c = chan()
    e = discretize_ensemble(c, 200)
    eta = 0.1
    nu = np.linspace(-1, 1, 201)
    discrete = e.susceptibility(nu + 1j * eta)
    closed = c.f_sq / (c.gamma2_inv + eta + 1j * (c.delta_spin - nu))
    assert np.max(np.abs(discrete - closed) / np.abs(closed)) <= 0.02


# ---------------------------------------------------------------- pulses

def test_gaussian_pulse_unit_energy_and_bandwidth():
    spec = PulseSpec("gaussian", center_time=10.0, duration=1 / 1.6)
    p = make_pulse(spec, time_grid(20.0, 1e-3))
    assert p.energy() == pytest.approx(1.0, abs=1e-8)
    rec_t = p.t
    n = len(rec_t)
    nu = 2 * np.pi * np.fft.fftfreq(n, p.dt)
    spec_int = np.abs(np.fft.ifft(p.values)) ** 2
    rms = math.sqrt(np.sum(nu**2 * spec_int) / np.sum(spec_int))
    assert rms == pytest.approx(0.8, rel=1e-6)


def test_sech_pulse_unit_energy():
    p = make_pulse(PulseSpec("sech", 15.0, 0.5), time_grid(30.0, 1e-3))
    assert p.energy() == pytest.approx(1.0, abs=1e-8)


def test_square_pulse_amplitude():
    spec = PulseSpec("square", center_time=2.0, duration=2.0)
    p = make_pulse(spec, time_grid(4.0, 0.01))
    assert np.max(np.abs(p.values)) == pytest.approx(1 / math.sqrt(2.0))
    assert p.values[0] == 0 and p.values[-1] == 0


def test_carrier_shifts_spectrum_peak():
    spec = PulseSpec("gaussian", center_time=20.0, duration=2.0, carrier=0.5)
    p = make_pulse(spec, time_grid(40.0, 0.01))
    nu, a_in, _ = output_spectra(
        type("R", (), {"t": p.t, "a_in": p.values, "a_out": p.values, "dt": p.dt})()
    )
    assert nu[np.argmax(np.abs(a_in))] == pytest.approx(0.5, abs=2 * np.pi / 40)


def test_truncated_pulse_rejected():
    with pytest.raises(InvalidArgumentError, match="truncated"):
        make_pulse(PulseSpec("gaussian", center_time=1.0, duration=1.0), time_grid(10.0, 0.01))
    with pytest.raises(InvalidArgumentError):
        PulseSpec("triangle")


# ---------------------------------------------------------------- simulation

def test_infinite_kappa_rejected():
    with pytest.raises(InvalidArgumentError):
        run(paper_config(), 4, PulseSpec())


def test_empty_device_is_all_pass():
    cfg = empty_config(kappa=KAPPA)
    rec = run(cfg, 1, PulseSpec(center_time=5.0), t_end=15.0)
    L = rec.ledger
    assert L["E_out"][-1] == pytest.approx(L["E_in"][-1], rel=1e-6)
    assert compare_fd_td(rec, cfg) <= 1e-4


def test_zero_input_gives_zero_trajectories():
    cfg = paper_config(kappa=KAPPA)
    ens = discretize_all(cfg, 5)
    grid = time_grid(5.0, max_stable_dt(cfg, ens))
    zero = TimeSeries(grid, np.zeros(len(grid), complex), lambda t: np.zeros(np.shape(t), complex))
    rec = simulate(cfg, ens, zero)
    assert not np.any(rec.a) and not np.any(rec.b) and not np.any(rec.a_out)
    assert all(not np.any(s) for s in rec.final_spins)


def test_linearity():
    cfg = paper_config(0.01, kappa=KAPPA)
    ens = discretize_all(cfg, 6)
    pulse = make_pulse(PulseSpec(center_time=5.0), time_grid(12.0, max_stable_dt(cfg, ens)))
    alpha = 0.3 - 1.7j
    r1 = simulate(cfg, ens, pulse)
    r2 = simulate(cfg, ens, alpha * pulse)
    assert np.allclose(r2.a_out, alpha * r1.a_out, rtol=0, atol=1e-14)
    assert np.allclose(r2.b, alpha * r1.b, rtol=0, atol=1e-14)
    assert np.allclose(np.concatenate(r2.final_spins), alpha * np.concatenate(r1.final_spins), atol=1e-14)


def test_time_translation():
    cfg = paper_config(kappa=KAPPA)
    ens = discretize_all(cfg, 6)
    dt = max_stable_dt(cfg, ens)
    grid = time_grid(16.0, dt)
    shift = 500
    r1 = simulate(cfg, ens, make_pulse(PulseSpec(center_time=7.0), grid))
    r2 = simulate(cfg, ens, make_pulse(PulseSpec(center_time=7.0 + shift * dt), grid))
    n = len(grid) - shift
    assert np.allclose(r2.a_out[shift:], r1.a_out[:n], rtol=0, atol=1e-12)
    assert np.allclose(r2.b[shift:], r1.b[:n], rtol=0, atol=1e-12)


def test_lossy_ledger_balances():
    cfg = paper_config(0.05, kappa=KAPPA)
    rec = run(cfg, 20, PulseSpec(center_time=5.0), t_end=30.0)
    assert rec.ledger["dissipated"][-1] > 0.01
    assert rec.balance_error() < 1e-9


def test_reflected_energy_matches_frequency_domain():
    # spectral rms 0.5: the pulse sits inside the plateau
    cfg = paper_config(kappa=KAPPA)
    pulse = PulseSpec(center_time=10.0, duration=1.0)
    rec = run(cfg, 200, pulse, t_end=45.0)
    ratio = rec.ledger["E_out"][-1] / rec.ledger["E_in"][-1]
    nu = np.linspace(-8, 8, 16001)
    phi = np.exp(-2 * nu**2)
    phi /= np.trapezoid(phi, nu)
    predicted = np.trapezoid(np.abs(eval_S(cfg, nu)) ** 2 * phi, nu)
    assert ratio <= 2e-3
    assert ratio == pytest.approx(predicted, rel=1e-4)


def test_dt_precondition():
    cfg = paper_config(kappa=KAPPA)
    with pytest.raises(StepSizeError) as info:
        run(cfg, 10, PulseSpec(center_time=5.0), t_end=10.0, dt=0.01)
    assert info.value.suggested_dt == pytest.approx(max_stable_dt(cfg, discretize_all(cfg, 10)))


def test_instability_guard():
    cfg = paper_config(kappa=KAPPA)
    with pytest.raises(StepSizeError, match="ledger"):
        run(cfg, 10, PulseSpec(center_time=5.0), t_end=10.0, dt=0.06, check_dt=False)


def test_window_too_short():
    cfg = paper_config(kappa=KAPPA)
    rec = run(cfg, 20, PulseSpec(center_time=5.0), t_end=10.0)
    with pytest.raises(WindowTooShortError) as info:
        compare_fd_td(rec, cfg)
    assert info.value.suggested_span > 10.0


def test_record_csv(tmp_path):
    cfg = paper_config(kappa=KAPPA)
    rec = run(cfg, 3, PulseSpec(center_time=5.0), t_end=10.0, spin_stride=100)
    path = rec.write_csv(tmp_path / "ts.csv")
    head = path.read_text().splitlines()[0]
    assert head == "t,re_a_in,im_a_in,re_a_out,im_a_out,E_spins,E_minis,E_common"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (len(rec.t), 8)
    assert np.array_equal(data[:, 3] + 1j * data[:, 4], rec.a_out)
    files = rec.write_channel_csvs(tmp_path)
    assert [f.name for f in files] == ["channel_-2.csv", "channel_-1.csv", "channel_+1.csv", "channel_+2.csv"]
    rows = np.loadtxt(files[0], delimiter=",", skiprows=1)
    assert rows.shape == (len(range(0, len(rec.t), 100)), 3 + 2 * 3)
