"""Command-line front end.

Systems are read from JSON files whose field names follow the system
description (``kind``, ``E``, ``H``, ``A``, ``B1`` ... ``D22``) with every
delayed family written as a list of ``{"matrix": [[...]], "delay": h}``.
Optional blocks: ``controller`` (``Ac``, ``Bc``, ``Cc``, ``Dc``; ``Dc`` alone
for a static gain), ``pattern`` (``mask`` and ``basis`` with the same keys)
and ``uncertainty``.

Scalars print as ``key=value``, root lists and sweeps as CSV, synthesis
results as JSON.  Exit codes: 0 success, 2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import re
import sys
import warnings
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from delaykit import freqresp, robust, spectrum, strongstab, synth
from delaykit.errors import DelayKitError, ModelError, NumericalError
from delaykit.model import (
    Controller,
    ControllerPattern,
    Kind,
    TdsSystem,
    TermList,
    close_loop,
    create_system,
    delay_difference_part,
)
from delaykit.nsopt import NsoptOptions

__all__ = ["SystemFile", "parse_system_file", "serialize_system_file", "load", "dump", "fmt", "main"]

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC = 0, 2, 3
CHANNELS = ("B1", "C1", "D11", "B2", "C2", "D12", "D21", "D22")
CONTROLLER_KEYS = ("Ac", "Bc", "Cc", "Dc")


def fmt(x: float) -> str:
    """Decimal with 15 significant digits; infinities as ``inf`` / ``-inf``."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.15g}"


@dataclass(frozen=True)
class SystemFile:
    system: TdsSystem
    controller: Controller | None = None
    pattern: ControllerPattern | None = None
    uncertainty: robust.UncertainSystem | None = None


# ---------------------------------------------------------------------------
# Parsing


def _matrix(value: Any, name: str) -> np.ndarray:
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{name}: not a numeric matrix") from exc
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ModelError(f"{name}: matrices are arrays of rows")
    return a


def _term_list(value: Any, name: str) -> TermList | None:
    if value is None:
        return None
    if not isinstance(value, list) or not value:
        raise ModelError(f"{name}: expected a non-empty list of {{matrix, delay}} terms")
    terms = []
    for i, t in enumerate(value):
        if not isinstance(t, dict) or "matrix" not in t:
            raise ModelError(f"{name}[{i}]: expected {{matrix, delay}}")
        terms.append((_matrix(t["matrix"], f"{name}[{i}]"), float(t.get("delay", 0.0))))
    # Repeated delays stay separate: a repeated zero delay marks an infinitesimal delay.
    return TermList.build(terms, merge=False)


def _controller(value: Any) -> Controller:
    if not isinstance(value, dict) or "Dc" not in value:
        raise ModelError("controller: needs at least Dc")
    if set(value) == {"Dc"}:
        return Controller.static(_matrix(value["Dc"], "controller.Dc"))
    missing = [k for k in CONTROLLER_KEYS if k not in value]
    if missing:
        raise ModelError(f"controller: missing {', '.join(missing)}")
    Dc = _matrix(value["Dc"], "controller.Dc")
    Ac = _matrix(value["Ac"], "controller.Ac")
    nc = Ac.shape[0] if Ac.size else 0
    p1, q1 = Dc.shape
    shapes = {"Ac": (nc, nc), "Bc": (nc, q1), "Cc": (p1, nc)}
    mats = {k: (_matrix(value[k], f"controller.{k}") if np.size(value[k]) else np.zeros(shapes[k])) for k in shapes}
    return Controller(mats["Ac"].reshape(shapes["Ac"]), mats["Bc"].reshape(shapes["Bc"]),
                      mats["Cc"].reshape(shapes["Cc"]), Dc)


def _pattern(value: Any, system: TdsSystem) -> ControllerPattern:
    if not isinstance(value, dict) or "mask" not in value:
        raise ModelError("pattern: needs a mask")
    mask, basis = value["mask"], value.get("basis", {})
    if set(mask) == {"Dc"}:
        m = np.array(mask["Dc"], dtype=bool)
        b = None if "Dc" not in basis else _matrix(basis["Dc"], "pattern.basis.Dc")
        return ControllerPattern.static(m, b)
    missing = [k for k in CONTROLLER_KEYS if k not in mask]
    if missing:
        raise ModelError(f"pattern.mask: missing {', '.join(missing)}")
    nc = len(mask["Ac"])
    shapes = [(nc, nc), (nc, system.q1), (system.p1, nc), (system.p1, system.q1)]
    ms = tuple(np.array(mask[k], dtype=bool).reshape(s) for k, s in zip(CONTROLLER_KEYS, shapes))
    bs = tuple(
        np.array(basis[k], dtype=float).reshape(s) if k in basis else np.zeros(s)
        for k, s in zip(CONTROLLER_KEYS, shapes)
    )
    return ControllerPattern(ms, bs)


def _uncertainty(value: Any, system: TdsSystem) -> robust.UncertainSystem:
    if not isinstance(value, dict):
        raise ModelError("uncertainty: expected an object")
    blocks = []
    for i, d in enumerate(value.get("delta", [])):
        try:
            blocks.append(robust.UncertaintyBlock(int(d["rows"]), int(d["cols"]),
                                                  d.get("type", "real"), d.get("norm", "frobenius")))
        except (KeyError, TypeError) as exc:
            raise ModelError(f"uncertainty.delta[{i}]: needs rows and cols") from exc
    m = len(system.A)
    mats = value.get("matrices") or [None] * m
    dels = value.get("delays") or [None] * m
    um = [None if u is None else robust.UncertainMatrix(
        u["ind"], [_matrix(g, "G") for g in u["G"]], [_matrix(h, "H") for h in u["H"]]) for u in mats]
    ud = [None if u is None else robust.UncertainDelay(u["ind"], u["w"]) for u in dels]
    return robust.add_uncertainty(system, robust.UncertaintySet(tuple(blocks)),
                                  int(value.get("n_delay", 0)), um, ud)


def parse_system_file(doc: dict) -> SystemFile:
    """Build a :class:`SystemFile` from a decoded JSON document."""
    if not isinstance(doc, dict):
        raise ModelError("system file: expected a JSON object")
    if "kind" not in doc or "A" not in doc:
        raise ModelError("system file: 'kind' and 'A' are required")
    try:
        kind = Kind(doc["kind"])
    except ValueError as exc:
        raise ModelError(f"unknown kind {doc['kind']!r}") from exc
    kwargs = {k: _term_list(doc.get(k), k) for k in ("H",) + CHANNELS}
    E = None if "E" not in doc else _matrix(doc["E"], "E")
    system = create_system(kind, _term_list(doc["A"], "A"), E=E, **kwargs)
    controller = _controller(doc["controller"]) if "controller" in doc else None
    pattern = _pattern(doc["pattern"], system) if "pattern" in doc else None
    unc = _uncertainty(doc["uncertainty"], system) if "uncertainty" in doc else None
    return SystemFile(system, controller, pattern, unc)


# ---------------------------------------------------------------------------
# Serialization


def _num(x: float):
    x = float(x)
    return int(x) if x.is_integer() and abs(x) < 2**53 else x


def _mat_out(a: np.ndarray) -> list:
    return [[_num(x) for x in row] for row in np.asarray(a)]


def _terms_out(tl: TermList) -> list:
    return [{"matrix": _mat_out(m), "delay": _num(h)} for m, h in tl]


def serialize_system_file(sf: SystemFile) -> dict:
    """Inverse of :func:`parse_system_file` (empty channels are omitted)."""
    s = sf.system
    doc: dict[str, Any] = {"kind": s.kind.value}
    default_E = np.zeros((s.n, s.n)) if s.kind is Kind.DELAY_DIFFERENCE else np.eye(s.n)
    if not np.array_equal(s.E, default_E):
        doc["E"] = _mat_out(s.E)
    doc["A"] = _terms_out(s.A)
    for name in ("H",) + CHANNELS:
        tl = getattr(s, name)
        if len(tl):
            doc[name] = _terms_out(tl)
    if sf.controller is not None:
        doc["controller"] = _controller_out(sf.controller)
    if sf.pattern is not None:
        p = sf.pattern
        keys = ("Dc",) if p.nc == 0 else CONTROLLER_KEYS
        idx = [CONTROLLER_KEYS.index(k) for k in keys]
        doc["pattern"] = {
            "mask": {k: np.asarray(p.mask[i]).astype(bool).tolist() for k, i in zip(keys, idx)},
            "basis": {k: _mat_out(p.basis[i]) for k, i in zip(keys, idx)},
        }
    if sf.uncertainty is not None:
        u = sf.uncertainty
        doc["uncertainty"] = {
            "delta": [{"rows": b.rows, "cols": b.cols, "type": b.value_type, "norm": b.norm_type}
                      for b in u.delta.blocks],
            "n_delay": u.delta.n_delay,
            "matrices": [None if m is None else {"ind": list(m.ind), "G": [_mat_out(g) for g in m.G],
                                                  "H": [_mat_out(h) for h in m.H]} for m in u.matrices],
            "delays": [None if d is None else {"ind": list(d.ind), "w": [_num(w) for w in d.w]}
                       for d in u.delays],
        }
    return doc


def _controller_out(c: Controller) -> dict:
    if c.nc == 0:
        return {"Dc": _mat_out(c.Dc)}
    return {k: _mat_out(m) for k, m in zip(CONTROLLER_KEYS, c.blocks())}


def load(path: str) -> SystemFile:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: {exc}") from exc
    return parse_system_file(doc)


_FLAT_LIST = re.compile(r"\[\s*([^\[\]{}]*?)\s*\]")


def _compact(text: str) -> str:
    """Put innermost (numeric) lists on one line."""
    return _FLAT_LIST.sub(lambda m: "[" + ", ".join(x.strip() for x in m.group(1).split(",")) + "]"
                          if m.group(1) else "[]", text)


def dump(sf: SystemFile, path: str | None = None) -> str:
    text = _compact(json.dumps(serialize_system_file(sf), indent=2))
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text


# ---------------------------------------------------------------------------
# Commands


def _roots_options(args) -> spectrum.RootsOptions:
    return spectrum.RootsOptions(
        max_size_evp=args.max_size_evp,
        fix_N=args.fix_n,
        newton_tol=args.newton_tol,
        quiet=args.quiet,
        seed=args.seed,
    )


def _synth_options(args) -> synth.SynthOptions:
    ro = dataclasses.replace(_roots_options(args), quiet=True)
    return synth.SynthOptions(
        nstart=args.nstart,
        method=args.method,
        alpha=args.alpha,
        Ntheta=args.ntheta,
        roots=ro,
        nsopt=NsoptOptions(seed=args.seed),
        hinf=freqresp.HinfOptions(Ntheta=args.ntheta, roots=ro),
        seed=args.seed,
    )


def _region(args) -> spectrum.Region:
    if args.rect is not None:
        return spectrum.Rectangle(*args.rect)
    if args.half_plane is not None:
        return spectrum.HalfPlane(args.half_plane)
    raise ModelError("give a region with --half-plane R or --rect RE_MIN RE_MAX IM_MIN IM_MAX")


def _system(sf: SystemFile) -> TdsSystem:
    """The analysed system: the closed loop when the file carries a controller."""
    return close_loop(sf.system, sf.controller) if sf.controller is not None else sf.system


def _root_csv(system: TdsSystem, rts: np.ndarray, out) -> None:
    char = spectrum.CharEvaluator(system)
    out.write("re,im,residual\n")
    for z in rts:
        M, _ = char(complex(z))
        res = float(np.linalg.svd(M, compute_uv=False)[-1]) / char.scale(complex(z)) if system.n else 0.0
        out.write(f"{fmt(z.real)},{fmt(z.imag)},{fmt(res)}\n")


def _kv(out, **values: float) -> None:
    for k, v in values.items():
        out.write(f"{k}={fmt(v)}\n")


def cmd_roots(args, out) -> None:
    sf = load(args.file)
    system = _system(sf)
    res = spectrum.roots(system, _region(args), _roots_options(args))
    _root_csv(system, res.roots, out)
    info = res.info
    out.write(f"# N={info.N}\n# max_size_evp_enforced={str(info.max_size_evp_enforced).lower()}\n"
              f"# gamma_r_exceeds_one={str(info.gamma_r_exceeds_one).lower()}\n"
              f"# newton_unconverged={len(info.newton_unconverged_initial_guesses)}\n")


def cmd_sa(args, out) -> None:
    system = _system(load(args.file))
    _kv(out, sa=spectrum.sa(system, args.half_plane, _roots_options(args)))


def cmd_strong_sa(args, out) -> None:
    system = _system(load(args.file))
    _kv(out, strong_sa=strongstab.strong_sa(system, args.half_plane, _roots_options(args),
                                            strongstab.CdOptions(Ntheta=args.ntheta, quiet=args.quiet)))


def cmd_gamma_r(args, out) -> None:
    part = delay_difference_part(_system(load(args.file)))
    _kv(out, gamma=strongstab.gamma_r(part, args.r, strongstab.GammaROptions(Ntheta=args.ntheta, quiet=args.quiet)))


def cmd_cd(args, out) -> None:
    part = delay_difference_part(_system(load(args.file)))
    _kv(out, cd=strongstab.cd(part, strongstab.CdOptions(Ntheta=args.ntheta, quiet=args.quiet)))


def cmd_sigma(args, out) -> None:
    system = _system(load(args.file))
    lo, hi, n = args.omega
    omegas = np.linspace(lo, hi, int(n))
    sv = freqresp.sigma(system, omegas)
    out.write(",".join(["omega"] + [f"sigma{i + 1}" for i in range(sv.shape[0])]) + "\n")
    for j, w in enumerate(omegas):
        out.write(",".join([fmt(w)] + [fmt(x) for x in sv[:, j]]) + "\n")


def cmd_hinfnorm(args, out) -> None:
    system = _system(load(args.file))
    ro = _roots_options(args)
    res = freqresp.hinfnorm(system, freqresp.HinfOptions(Ntheta=args.ntheta, roots=dataclasses.replace(ro, quiet=True)))
    _kv(out, hinf=res.hinf, wpeak=res.wpeak)


def cmd_tzeros(args, out) -> None:
    system = _system(load(args.file))
    if args.rect is None:
        raise ModelError("tzeros needs --rect RE_MIN RE_MAX IM_MIN IM_MAX")
    z = spectrum.tzeros(system, spectrum.Rectangle(*args.rect), _roots_options(args))
    _root_csv(spectrum._bordered_zero_system(system), z, out)


def _synth_out(res: synth.SynthResult, out) -> None:
    lg = res.log
    doc = {
        "controller": _controller_out(res.controller),
        "log": {
            "method": lg.method.value,
            "best_start": lg.best_start,
            "objective": fmt(lg.objective),
            "strong_sa": fmt(lg.strong_sa),
            "initial_values": [fmt(v) for v in lg.initial_values],
            "final_values": [fmt(s.f) for s in lg.starts],
            "discarded": list(lg.discarded),
        },
    }
    out.write(_compact(json.dumps(doc, indent=2)) + "\n")


def _synth_args(sf: SystemFile):
    initials = [sf.controller] if sf.controller is not None else None
    nc = sf.controller.nc if sf.controller is not None else (sf.pattern.nc if sf.pattern is not None else 0)
    return nc, initials


def cmd_stabopt(args, out) -> None:
    sf = load(args.file)
    nc, initials = _synth_args(sf)
    nc = args.nc if args.nc is not None else nc
    _synth_out(synth.stabopt(sf.system, nc, sf.pattern, initials, _synth_options(args)), out)


def cmd_hiopt(args, out) -> None:
    sf = load(args.file)
    nc, initials = _synth_args(sf)
    nc = args.nc if args.nc is not None else nc
    _synth_out(synth.hiopt(sf.system, nc, sf.pattern, initials, _synth_options(args)), out)


def _uncertain(sf: SystemFile) -> robust.UncertainSystem:
    if sf.uncertainty is None:
        raise ModelError("the system file has no uncertainty block")
    return sf.uncertainty


def _psa_options(args) -> robust.PsaOptions:
    return robust.PsaOptions(seed=args.seed, roots=dataclasses.replace(_roots_options(args), quiet=True))


def cmd_psa(args, out) -> None:
    usys = _uncertain(load(args.file))
    res = robust.psa(usys, args.epsilon, _psa_options(args))
    _kv(out, psa=res.value, nominal=res.nominal)
    for i, d in enumerate(res.witness.delta):
        out.write(f"delta{i}={';'.join(fmt(x) for x in np.ravel(d))}\n")
    for i, t in enumerate(res.witness.deltatau):
        out.write(f"deltatau{i}={fmt(t)}\n")


def cmd_dins(args, out) -> None:
    usys = _uncertain(load(args.file))
    _kv(out, dins=robust.dins(usys, tuple(args.interval), _psa_options(args)))


def cmd_closeloop(args, out) -> None:
    sf = load(args.file)
    if sf.controller is None:
        raise ModelError("closeloop needs a controller block")
    out.write(dump(SystemFile(close_loop(sf.system, sf.controller))) + "\n")


# ---------------------------------------------------------------------------
# Argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("file", help="system description (JSON)")
    p.add_argument("--quiet", action="store_true", help="suppress numerical warnings")
    p.add_argument("--seed", type=int, default=0, help="seed for every random component")
    p.add_argument("--max-size-evp", type=int, default=600)
    p.add_argument("--fix-n", type=int, default=None)
    p.add_argument("--newton-tol", type=float, default=1e-10)
    p.add_argument("--ntheta", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delaykit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.set_defaults(fn=fn)
        return p

    def region(p):
        p.add_argument("--half-plane", type=float, metavar="R")
        p.add_argument("--rect", type=float, nargs=4, metavar=("RE_MIN", "RE_MAX", "IM_MIN", "IM_MAX"))

    region(add("roots", cmd_roots, "characteristic roots in a region"))
    for name, fn in (("sa", cmd_sa), ("strong_sa", cmd_strong_sa)):
        add(name, fn, name.replace("_", " ").replace("sa", "spectral abscissa")).add_argument(
            "--half-plane", type=float, required=True, metavar="R")
    add("gamma_r", cmd_gamma_r, "gamma(r) of the delay-difference part").add_argument("--r", type=float, default=0.0)
    add("cd", cmd_cd, "strong spectral abscissa of the delay-difference part")
    add("sigma", cmd_sigma, "singular values of the frequency response").add_argument(
        "--omega", type=float, nargs=3, default=[0.0, 10.0, 101], metavar=("LO", "HI", "NPTS"))
    add("hinfnorm", cmd_hinfnorm, "strong H-infinity norm")
    region(add("tzeros", cmd_tzeros, "transmission zeros of a SISO system"))
    for name, fn in (("stabopt", cmd_stabopt), ("hiopt", cmd_hiopt)):
        p = add(name, fn, "stabilizing controller synthesis" if name == "stabopt" else "H-infinity synthesis")
        p.add_argument("--nc", type=int, default=None, help="controller order (default: from the file)")
        p.add_argument("--nstart", type=int, default=5)
        p.add_argument("--method", choices=[m.value for m in synth.Method], default="auto")
        p.add_argument("--alpha", type=float, default=0.0)
    add("psa", cmd_psa, "pseudospectral abscissa").add_argument("--epsilon", type=float, required=True)
    add("dins", cmd_dins, "distance to instability").add_argument(
        "--interval", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    add("closeloop", cmd_closeloop, "closed-loop system as a system file")
    return parser


def _show_warning(message, category, filename, lineno, file=None, line=None) -> None:
    sys.stderr.write(f"warning: {message}\n")


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not 0 <= getattr(args, "alpha", 0.0) <= 1:
        sys.stderr.write("error: --alpha must lie in [0, 1]\n")
        return EXIT_PARSE
    with warnings.catch_warnings():
        if args.quiet:
            warnings.simplefilter("ignore")
        else:
            warnings.simplefilter("always")
        warnings.showwarning = _show_warning
        try:
            args.fn(args, out)
        except (ModelError, OSError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, NumericalError):
                sys.stderr.write(f"error: {exc}\n")
                return EXIT_NUMERIC
            sys.stderr.write(f"error: {exc}\n")
            return EXIT_PARSE
        except (DelayKitError, np.linalg.LinAlgError, ArithmeticError) as exc:
            sys.stderr.write(f"error: {exc}\n")
            return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
