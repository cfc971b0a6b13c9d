"""Run the analysis routines on the shipped example systems and print the results.

Usage: python scripts/analysis_examples.py
"""

import math
import time
from pathlib import Path

import numpy as np

from delaykit.cli import load
from delaykit.freqresp import hinfnorm
from delaykit.model import close_loop, delay_difference_part
from delaykit.robust import dins, psa
from delaykit.spectrum import HalfPlane, Rectangle, RootsOptions, roots, tzeros
from delaykit.strongstab import cd, gamma_r, strong_sa

SYSTEMS = Path(__file__).resolve().parent.parent / "data" / "systems"
QUIET = RootsOptions(quiet=True)


def system(name):
    return load(str(SYSTEMS / f"{name}.json"))


def report(label, value, reference=None):
    ref = "" if reference is None else f"   (reference {reference})"
    print(f"{label:<44s} {value:>16.8g}{ref}")


def main():
    start = time.perf_counter()

    rts = roots(system("rdde1").system, HalfPlane(-1.5), QUIET).roots
    report("rdde1: spectral abscissa on Re >= -1.5", rts.real.max(), 0.6176)
    report("rdde1: roots with Re >= 0", np.count_nonzero(rts.real >= 0), 3)

    rts = roots(system("difference1").system, Rectangle(-3, 1, -60, 60), QUIET).roots
    report("difference1: distinct real parts", len(np.unique(np.round(rts.real, 8))), 2)
    report("difference1: max |Re - ln 1.5|, right chain", np.abs(rts.real[rts.real > 0] - math.log(1.5)).max())

    nd = system("neutral2").system
    report("neutral2: gamma(0)", gamma_r(delay_difference_part(nd), 0.0), 1.25)
    report("neutral2: strong spectral abscissa", strong_sa(nd, -0.2, QUIET), 0.1614)

    sf = system("ddae_feedback")
    cl = close_loop(sf.system, sf.controller)
    report("ddae_feedback: C_D", cd(delay_difference_part(cl)), -3.4234)
    report("ddae_feedback: strong spectral abscissa", strong_sa(cl, -1.0, QUIET), -0.2845)

    res = hinfnorm(system("hinf_ex1").system)
    report("hinf_ex1: H-infinity norm", res.hinf, 1.5388)
    report("hinf_ex1: peak frequency", res.wpeak, 3.5571)
    res = hinfnorm(system("hinf_ex2").system)
    report("hinf_ex2: H-infinity norm", res.hinf, 4)
    report("hinf_ex2: peak frequency", res.wpeak, math.inf)

    z = tzeros(system("tzeros_siso").system, Rectangle(-4, 4, -50, 50), QUIET)
    report("tzeros_siso: real transmission zero", z[np.argmin(np.abs(z.imag))].real, -0.56714)

    u = system("turning").uncertainty
    report("turning: psa(0)", psa(u, 0.0).value, -16.3646)
    report("turning: psa(1)", psa(u, 1.0).value, 20.7022)
    report("turning: distance to instability on [0, 1]", dins(u, (0.0, 1.0)), 0.4125)

    print(f"\nelapsed {time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main()
