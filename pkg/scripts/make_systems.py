"""Write the example system files in data/systems/.

Each file is produced through the CLI serializer, so the shipped files are
exactly what ``delaykit.cli.dump`` emits and round-trip unchanged.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from delaykit import robust
from delaykit.cli import SystemFile, dump
from delaykit.model import Controller, create_system

DEFAULT_DIR = Path(__file__).resolve().parent.parent / "data" / "systems"


def rdde1():
    A0 = np.array([[-1, 0, 0, 0], [0, 1, 0, 0], [0, 0, -10, -4], [0, 0, 4, -10.0]])
    A1 = np.array([[3, 3, 3, 3], [0, -1.5, 0, 0], [0, 0, 3, -5], [0, 5, 5, 5.0]])
    return SystemFile(create_system("retarded", [(A0, 0), (A1, 1)]))


H_NEUTRAL1 = np.array([[3, -1.5], [2.5, -1]])


def neutral1():
    A0 = np.array([[-0.6, -0.45], [0.1, -1.2]])
    A1 = np.array([[-0.15, 0.075], [0.225, -0.75]])
    return SystemFile(create_system("neutral", [(A0, 0), (A1, 1)], H=[(H_NEUTRAL1, 1)]))


def difference1():
    return SystemFile(create_system("delay_difference", [(np.eye(2), 0), (H_NEUTRAL1, 1)]))


def neutral2():
    return SystemFile(create_system(
        "neutral", [(np.array([[0.25]]), 0), (np.array([[-1 / 3]]), 1)],
        H=[(np.array([[-0.75]]), 1), (np.array([[0.5]]), 2)],
    ))


def ddae_feedback():
    A0 = np.array([[0.2, 0.1], [-0.5, 1]])
    A1 = np.array([[0.5, 0.3], [0.1, -0.1]])
    plant = create_system("retarded", [(A0, 0), (A1, 1)], B1=[(np.eye(2), 1)],
                          C1=[(np.array([[1, 1.0]]), 0)], D11=[(np.array([[0.01, 0.01]]), 1)])
    K = Controller(np.array([[-3.48]]), np.array([[3.1]]), np.array([[1.79], [-0.09]]), np.array([[-1.86], [-1.4]]))
    return SystemFile(plant, K)


def _hinf(A1):
    A0 = np.array([[-4, 2], [-3, -3.0]])
    B = np.array([[1], [-1.0]])
    C = np.array([[-2, 1.0]])
    return dict(A=[(A0, 0), (A1, 1)], B2=[(B, 2)], C2=[(C, 0)])


def hinf_ex1():
    return SystemFile(create_system("retarded", **_hinf(np.array([[-2, -1], [3, -2.0]]))))


def hinf_ex2():
    kw = _hinf(np.array([[-2, 1], [3, -2.0]]))
    return SystemFile(create_system("retarded", **kw, D22=[(1, 0), (1, 1), (-2, 2)]))


def tzeros_siso():
    A0 = np.array([[1, 0, 1], [0, 0, 0], [0, 1, 0.0]])
    A1 = np.zeros((3, 3))
    A1[0, 1] = 1
    return SystemFile(create_system("retarded", [(A0, 0), (A1, 1)],
                                    B1=np.array([[0], [1], [0.0]]), C1=np.array([[1, 0, 0.0]])))


def heating():
    Th, Ta, Td, Tc = 14, 3, 3, 25
    Kb, Ka, Kd, Kc, Ku = 0.24, 1, 0.94, 0.81, 0.39
    delays = [0, 6.5, 40, 13, 18, 2.8, 9.2]
    Ms = [np.zeros((5, 5)) for _ in delays]
    Ms[0][1, 0] = Ka / Ta
    Ms[0][1, 1] = (-Ka - 1) / Ta
    Ms[0][2, 2] = -1 / Td
    Ms[0][4, 3] = -1
    Ms[1][0, 0] = -1 / Th
    Ms[2][0, 1] = Kb / Th
    Ms[3][1, 3] = 1 / Ta
    Ms[4][2, 1] = Kd / Td
    Ms[5][3, 2] = Kc / Tc
    Ms[6][3, 3] = -1 / Tc
    B = np.zeros((5, 1))
    B[0, 0] = Ku / Th
    plant = create_system("retarded", list(zip(Ms, delays)), B1=[(B, 13.2)], C1=np.eye(5))
    return SystemFile(plant, Controller.static(np.zeros((1, 5))))


def fragility():
    A = np.array([[1.25, -0.8, -0.95], [0.175, -0.4, -0.125], [-1.15, -0.4, 0.65]])
    plant = create_system("retarded", A, B1=np.array([[2], [0], [-2.0]]),
                          C1=np.array([[-7, 25, -11.0]]), D11=np.array([[1.0]]))
    return SystemFile(plant, Controller.static([[0.0]]))


def neutral_stab():
    A = np.array([[-0.08, -0.03, 0.2], [0.2, -0.04, -0.005], [-0.06, 0.2, -0.07]])
    plant = create_system(
        "retarded", A, B1=[(np.array([[-0.1], [-0.2], [0.1]]), 5)], C1=np.eye(3),
        D11=[(np.array([[3], [4], [1.0]]), 2.5), (np.array([[0.4], [-0.4], [-0.4]]), 5)],
    )
    return SystemFile(plant, Controller.static(np.zeros((1, 3))))


def mixed():
    A0 = np.array([[1, -2, 4], [3, 0.5, -1], [-2, 0.4, -2.0]])
    A1 = np.array([[1.5, 0.3, 2], [0.7, -0.8, 0.4], [0.5, 0.4, -0.9]])
    B1 = np.array([[0.3, 0.4], [-0.7, -0.5], [0.7, -0.1]])
    B2 = np.array([[-0.7], [-0.5], [-0.3]])
    C1 = np.array([[-1, 0.3, 0], [0.4, 0.9, 1]])
    C2 = np.array([[3, -5, -4.0]])
    plant = create_system("retarded", [(A0, 0), (A1, 1)], B1=[(B1, 0.1)], C1=C1, B2=B2, C2=C2)
    return SystemFile(plant, Controller.static(np.zeros((2, 2))))


def hiopt_ddae():
    plant = create_system(
        "ddae", [(np.array([[-0.1, -1], [1, -1]]), 0)], E=np.diag([1.0, 0]),
        B1=np.array([[0], [1.0]]), C1=[(np.array([[0, 1], [0, 0.0]]), 1), (np.array([[0, 0], [0, 1.0]]), 2)],
        B2=np.array([[0], [1.0]]), C2=np.array([[2, -1.0]]),
    )
    return SystemFile(plant, Controller.static([[0.25, -0.5]]))


def turning(tau: float = 0.008):
    k, omega, xi, m = 8e6, 775, 0.05, 50
    d_k, d_xi, d_tau = 1e6, 0.005, 0.001
    A0 = np.array([[0, 1], [-omega**2 - k / m, -2 * xi * omega]])
    A1 = np.array([[0, 0], [k / m, 0]])
    nominal = create_system("retarded", [(A0, 0), (A1, tau)])
    uA0 = robust.UncertainMatrix([0, 1], [[[0], [-1 / m]], [[0], [-2 * omega]]], [[[d_k, 0]], [[0, d_xi]]])
    uA1 = robust.UncertainMatrix([0], [[[0], [1 / m]]], [[[d_k, 0]]])
    usys = robust.add_uncertainty(nominal, robust.create_delta([(1, 1), (1, 1)]), 1,
                                  [uA0, uA1], [None, robust.UncertainDelay([0], [d_tau])])
    return SystemFile(nominal, uncertainty=usys)


SYSTEMS = {
    "rdde1": rdde1,
    "neutral1": neutral1,
    "difference1": difference1,
    "neutral2": neutral2,
    "ddae_feedback": ddae_feedback,
    "hinf_ex1": hinf_ex1,
    "hinf_ex2": hinf_ex2,
    "tzeros_siso": tzeros_siso,
    "heating": heating,
    "fragility": fragility,
    "neutral_stab": neutral_stab,
    "mixed": mixed,
    "hiopt_ddae": hiopt_ddae,
    "turning": turning,
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=DEFAULT_DIR)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, make in SYSTEMS.items():
        dump(make(), str(args.out / f"{name}.json"))
        print(args.out / f"{name}.json")


if __name__ == "__main__":
    main()
