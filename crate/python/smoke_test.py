"""Smoke test for the `spinsqz` extension module.

Build and install first:  pip install --no-build-isolation -e crates/py
Then run:                 python3 python/smoke_test.py
"""

import cmath
import math

import spinsqz


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def hybrid():
    p = spinsqz.HybridParams()
    close(p.kappa(), 1.78e6, 1e-6)
    r, l, t = p.scatter()
    close(r * r + l * l + t * t, 1.0, 1e-12)

    # Direct evaluation of the reflection coefficient.
    f = p.f_r + 0.3e6
    spin = p.g_eff**2 / (1j * (p.f_r + p.delta_sr - f) - p.gamma_s)
    direct = 1 + 2 * p.kappa_ext / (1j * (p.f_r - f) - p.kappa() + spin)
    close(abs(p.s11(f) - direct), 0.0, 1e-12)

    matched = spinsqz.HybridParams(g_eff=math.sqrt(p.gamma_s * p.kappa()))
    close(matched.cooperativity(), 1.0, 1e-12)
    close(matched.transfer_efficiency(), p.kappa_ext / p.kappa(), 1e-12)

    close(spinsqz.squeezing_db(spinsqz.variance_from_db(5.29)), 5.29, 1e-12)
    try:
        spinsqz.HybridParams(gamma_s=-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative rate accepted")


def predictions():
    rows = [(float(k), 0.0740, 1.0) for k in range(4)]
    out = spinsqz.predict_squeezing(spinsqz.HybridParams(), rows, "fully_resonant")
    assert len(out) == 4
    close(out[0]["squeezing_db"], 0.064, 1e-3)


def maps():
    p = spinsqz.HybridParams()
    m = spinsqz.efficiency_map(p, ("g_eff", 0.0, 2e6, 2001), ("gamma_s", 1e5, 1e6, 4))
    g, gamma = m["argmax"]
    close(g, math.sqrt(gamma * p.kappa()), 1e3)
    s = spinsqz.spectrum_map(p, (-5e6, 5e6, 11), (-1e7, 1e7, 5))
    assert len(s["magnitude"]) == 55


def spins():
    sys = spinsqz.SpinSystem()
    levels = sorted(e for _, e in sys.levels(0.0))
    close(levels[0], -0.75 * sys.hyperfine_a, 1e-3)
    b = sys.resonance_field(5.645e9)
    close(sys.transition_frequency(b), 5.645e9, 1.0)


def estimators():
    # Clean circle with cable delay and the resonator rates above.
    f_r, kappa, kappa_ext = 5.645e9, 1.78e6, 1.49e6
    ql, qe = f_r / (2 * kappa), f_r / (2 * kappa_ext)
    freqs = [f_r - 20e6 + 40e6 * k / 400 for k in range(401)]
    values = [
        0.02 * cmath.exp(1j * (1.2 - 2 * math.pi * f * 80e-9))
        * (1 - (2 * ql / qe) / (1 + 2j * ql * (f / f_r - 1)))
        for f in freqs
    ]
    fit = spinsqz.circle_fit(freqs, values)
    close(fit["rates"]["kappa"] / kappa, 1.0, 1e-6)
    close(fit["rates"]["kappa_ext"] / kappa_ext, 1.0, 1e-6)

    delays = [20e-6 + k * 1e-4 for k in range(30)]
    areas = [math.exp(-2 * t / 2.16e-3) + 0.02 for t in delays]
    t2, info = spinsqz.fit_t2(delays, areas)
    close(t2, 2.16e-3, 1e-9)
    assert info["converged"]

    times = [k * 1e-8 for k in range(201)]
    trace = [math.exp(-((t - 1e-6) ** 2) / (2 * 1e-7**2)) for t in times]
    echo = spinsqz.echo_area(times, trace)
    close(echo["area"], 1e-7 * math.sqrt(2 * math.pi) * math.erf(3 / math.sqrt(2)), 1e-12)


def tomography():
    sq = spinsqz.variance_from_db(3.0)
    i, q = spinsqz.synth_iq(sq, 0.5, 0.3, 200_000, 1)
    r = spinsqz.reconstruct(i, q, 1.0, 0.0, 5.645e9, path_loss_db=0.0)
    close(r["squeezing_db"], 3.0, 0.05)
    close(r["angle"], 0.3, 0.02)


if __name__ == "__main__":
    for check in (hybrid, predictions, maps, spins, estimators, tomography):
        check()
        print(f"ok  {check.__name__}")
    print("spinsqz smoke test passed")
