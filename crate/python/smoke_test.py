"""Smoke test for the pyqheat extension: run with `python python/smoke_test.py`."""

import math

import pyqheat


def main():
    assert abs(pyqheat.q_number(3, 0.5) - 1.75) < 1e-15
    assert abs(pyqheat.q_factorial(3, 0.5) - 1.5 * 1.75) < 1e-15

    q = 0.5
    for x in (-1.5, -0.3, 0.0, 0.7, 1.9):
        assert abs(pyqheat.e_q(x, q) * pyqheat.big_e_q(-x, q) - 1.0) < 1e-12

    integral = pyqheat.jackson_integral(lambda s: s * s, 1.0, q)
    assert abs(integral - 1.0 / pyqheat.q_number(3, q)) < 1e-14

    spectrum = pyqheat.Spectrum.involution(0.5, 6)
    assert len(spectrum) == 6
    assert spectrum.eigenvalues == sorted(spectrum.eigenvalues)

    phi = [1.0, -0.5, 0.25, 0.0, 0.5, 0.1]
    amplitudes = [2.0, -1.0, 0.5, 1.5, 0.0, -0.25]
    shape = (1.0, 1.0)
    trajectory, diag = pyqheat.solve_direct(
        spectrum, phi, amplitudes, q=q, upsilon=(1.0, 0.5), shape=shape
    )
    assert trajectory.times[0] == 0.0 and trajectory.times[-1] == 1.0
    assert diag["ode_residual"] < 1e-10 and diag["oracle_gap"] < 1e-10
    assert diag["apriori_holds"]

    f, back, idiag = pyqheat.solve_inverse(
        spectrum, phi, trajectory.at_horizon, q=q, upsilon=(1.0, 0.5), g=shape
    )
    for got, want in zip(f, amplitudes):
        assert math.isclose(got, want, rel_tol=1e-8, abs_tol=1e-12), (got, want)
    assert idiag["stability_holds"] and idiag["source_bound_holds"]
    assert len(back.times) == len(trajectory.times)

    try:
        pyqheat.e_q(0.5, 1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("q outside (0, 1) must raise")

    print("pyqheat smoke test passed")


if __name__ == "__main__":
    main()
