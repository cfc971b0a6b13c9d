"""Controller synthesis on the shipped example plants.

Usage: python scripts/synthesis_examples.py [--seed N]

Every run starts from the initial controller stored with the plant.  The
mixed-objective plant is first designed for the spectral abscissa
(alpha = 1) and then, from that controller, for the H-infinity norm
(alpha = 0).
"""

import argparse
import time
import warnings
from pathlib import Path

import numpy as np

from delaykit.cli import load
from delaykit.freqresp import hinfnorm
from delaykit.synth import SynthOptions, hiopt, stabopt

SYSTEMS = Path(__file__).resolve().parent.parent / "data" / "systems"


def system(name):
    return load(str(SYSTEMS / f"{name}.json"))


def show(label, res, seconds, hinf=None):
    gains = np.array2string(res.controller.Dc, precision=4, separator=", ").replace("\n", "")
    extra = "" if hinf is None else f"  hinf = {hinf:.5f}"
    print(f"{label:<28s} Dc = {gains}  strong sa = {res.log.strong_sa:.5f}{extra}  ({seconds:.1f} s)")


def timed(fn, *args, **kwargs):
    t = time.perf_counter()
    res = fn(*args, **kwargs)
    return res, time.perf_counter() - t


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    seed = parser.parse_args().seed
    warnings.simplefilter("ignore")

    for name, method in [("heating", "auto"), ("fragility", "barrier"), ("neutral_stab", "cd")]:
        sf = system(name)
        opts = SynthOptions(nstart=1, method=method, seed=seed)
        res, dt = timed(stabopt, sf.system, initials=[sf.controller.Dc], options=opts)
        show(f"{name} ({method})", res, dt)

    sf = system("mixed")
    r1, dt = timed(hiopt, sf.system, initials=[sf.controller.Dc], options=SynthOptions(nstart=1, alpha=1.0, seed=seed))
    show("mixed (alpha = 1)", r1, dt, hinfnorm(r1.closed_loop).hinf)
    r0, dt = timed(hiopt, sf.system, initials=[r1.controller.Dc], options=SynthOptions(nstart=1, alpha=0.0, seed=seed))
    show("mixed (alpha = 0)", r0, dt, hinfnorm(r0.closed_loop).hinf)

    sf = system("hiopt_ddae")
    res, dt = timed(hiopt, sf.system, initials=[sf.controller.Dc], options=SynthOptions(nstart=1, seed=seed))
    show("hiopt_ddae (alpha = 0)", res, dt, res.log.objective)


if __name__ == "__main__":
    main()
