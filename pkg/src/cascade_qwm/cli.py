"""
Command-line entry point.

Every subcommand reads a config (``--config``), writes its data files and
the resolved config into ``--out`` (atomically), and exits with 0 on
success, 2 on a configuration error, 3 on a numerical failure and 4 when a
fit does not converge. Failures are reported as one JSON object on stderr
and, when possible, as ``error.json`` in the output directory.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import analytic, calibration, perturbation, plotting, spectrum, units
from .config import ConfigError, RunConfig, expand_grid
from .errors import CascadeError, FitError, ParameterError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FIT = 0, 2, 3, 4

log = logging.getLogger("cascade_qwm")


# --- output helpers -----------------------------------------------------------

class Output:
    """Atomic writer for one run directory."""

    def __init__(self, directory, fmt="both", svg=False):
        self.dir = directory
        self.fmt = fmt
        self.svg = svg
        self.written = []

    def path(self, name):
        return os.path.join(self.dir, name)

    def text(self, name, content):
        os.makedirs(self.dir, exist_ok=True)
        path = self.path(name)
        tmp = path + ".tmp"
        with open(tmp, "w", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
        self.written.append(path)
        return path

    def table(self, stem, rows, columns, doc=None):
        """Rows as CSV and/or JSON according to ``--format``."""
        if self.fmt in ("csv", "both"):
            self.text(stem + ".csv", rows_to_csv(rows, columns))
        if self.fmt in ("json", "both"):
            self.json(stem + ".json", doc if doc is not None else {"rows": rows})

    def json(self, name, doc):
        return self.text(name, json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")

    def figure(self, name, draw):
        if self.svg:
            os.makedirs(self.dir, exist_ok=True)
            self.written.append(draw(self.path(name)))


def rows_to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _progress(msg):
    print(msg, file=sys.stderr)


# --- subcommands --------------------------------------------------------------

def cmd_simulate(cfg, args, out):
    p = cfg.cascade_params()
    ex = cfg.extraction
    _progress(f"simulate: engine={ex.engine}, W_bar={p.W_bar:.4g}, E_bar={p.E_bar:.4g}")
    spec = spectrum.cascade_spectrum(p, orders=ex.orders, method=ex.engine,
                                     samples_per_period=ex.samples_per_period,
                                     weight=ex.source_weight)
    rows = spec.to_rows(carrier_ghz=ex.carrier_GHz, gain_db=ex.gain_dB)
    for r in rows:
        r["above_floor"] = int(r["power_dBm"] > ex.floor_dBm)
    doc = {"rows": rows, "even_ratio": spec.even_ratio(), "metadata": spec.metadata,
           "floor_dBm": ex.floor_dBm}
    out.table("spectrum", rows, ["order", "re", "im", "flux", "power_dBm", "above_floor"], doc)
    out.figure("spectrum.svg", lambda path: plotting.plot_spectrum(
        spec, path, floor_dbm=ex.floor_dBm, carrier_ghz=ex.carrier_GHz, gain_db=ex.gain_dB))


def cmd_compare(cfg, args, out):
    p = cfg.cascade_params()
    ex = cfg.extraction
    q = spectrum.cascade_spectrum(p, orders=ex.orders, method=ex.engine,
                                  samples_per_period=ex.samples_per_period,
                                  weight=ex.source_weight)
    c, (om_p, om_m) = spectrum.matched_classical(
        q, p.Gamma, p.delta_omega, Gamma2=0.5 * p.Gamma + p.Gamma_phi,
        samples_per_period=ex.samples_per_period)
    kw = dict(carrier_ghz=ex.carrier_GHz, gain_db=ex.gain_dB)
    qd, cd = q.power_dbm(**kw), c.power_dbm(**kw)
    rows = [{"order": int(k), "quantum_dBm": float(a), "classical_dBm": float(b),
             "difference_dB": float(a - b)} for k, a, b in zip(q.orders, qd, cd)]
    doc = {"rows": rows, "classical_Omega_plus_MHz": float(units.rad_to_mhz(om_p)),
           "classical_Omega_minus_MHz": float(units.rad_to_mhz(om_m)),
           "max_concurrence": q.metadata["max_concurrence"]}
    out.table("comparison", rows, ["order", "quantum_dBm", "classical_dBm", "difference_dB"], doc)
    out.figure("comparison.svg", lambda path: plotting.plot_spectrum(
        q, path, floor_dbm=ex.floor_dBm, reference=c, **kw))


def cmd_sweep(cfg, args, out):
    grid = cfg.grid_spec()
    ex, sw = cfg.extraction, cfg.sweep
    p = cfg.cascade_params()
    m = spectrum.sweep_map(grid, p, orders=ex.orders, jobs=args.jobs, engine=ex.engine,
                           samples_per_period=ex.samples_per_period, weight=ex.source_weight,
                           power=sw.power, carrier_ghz=ex.carrier_GHz, gain_db=ex.gain_dB,
                           cache_dir=sw.cache_dir, progress=True)
    if out.fmt in ("csv", "both"):
        out.text("map.csv", m.to_csv())
    if out.fmt in ("json", "both"):
        out.text("map.json", m.to_json() + "\n")
    if m.errors:
        _progress(f"sweep: {len(m.errors)} points failed (masked)")
    floor = ex.floor_dBm if sw.power == "dBm" else None
    out.figure("map.svg", lambda path: plotting.plot_map(m, path, floor=floor))


def cmd_classical(cfg, args, out):
    c = cfg.classical
    if c.kappa_plus_dB is None or c.kappa_minus_dB is None:
        raise ConfigError("classical.kappa_plus_dB and classical.kappa_minus_dB are required")
    kp = expand_grid(c.kappa_plus_dB, "classical.kappa_plus_dB")
    km = expand_grid(c.kappa_minus_dB, "classical.kappa_minus_dB")
    rows = []
    for a in kp:
        for b in km:
            amp = analytic.classical_spectrum(units.from_db(a), units.from_db(b),
                                              c.Gamma2_over_Gamma, c.max_order)
            for k, v in amp.items():
                with np.errstate(divide="ignore"):
                    pdb = 10.0 * np.log10(v * v)
                rows.append({"kappa_plus_dB": a, "kappa_minus_dB": b, "order": k,
                             "amplitude": v, "power_dB": float(pdb)})
    out.table("classical", rows, ["kappa_plus_dB", "kappa_minus_dB", "order", "amplitude",
                                  "power_dB"])


def cmd_g2(cfg, args, out):
    c = cfg.g2
    gamma = float(units.mhz_to_rad(cfg.system.gamma_MHz))
    taus = expand_grid(c.tau_gamma, "g2.tau_gamma")
    oms = expand_grid(c.Omega_over_gamma, "g2.Omega_over_gamma")
    rows, curves = [], {}
    for om in oms:
        src = analytic.SourceDriveParams(om * gamma, gamma)
        ys = [analytic.g2(t / gamma, src, c.coefficient) for t in taus]
        curves[rf"$\Omega/\gamma={om:g}$"] = ys
        rows += [{"Omega_over_gamma": om, "tau_gamma": t, "g2": y} for t, y in zip(taus, ys)]
    out.table("g2", rows, ["Omega_over_gamma", "tau_gamma", "g2"])
    out.figure("g2.svg", lambda path: plotting.plot_curves(
        taus, curves, path, r"$\gamma\tau$", r"$g^{(2)}(\tau)$", hline=1.0))


def cmd_antibunching(cfg, args, out):
    c = cfg.antibunching
    gamma = float(units.mhz_to_rad(cfg.system.gamma_MHz))
    ratios = expand_grid(c.Gamma_over_gamma, "antibunching.Gamma_over_gamma")
    oms = expand_grid(c.Omega_over_gamma, "antibunching.Omega_over_gamma")
    rows, curves = [], {}
    for om in oms:
        src = analytic.SourceDriveParams(om * gamma, gamma)
        ys = [analytic.antibunching_A(r * gamma, src, c.coefficient) for r in ratios]
        curves[rf"$\Omega/\gamma={om:g}$"] = ys
        rows += [{"Omega_over_gamma": om, "Gamma_over_gamma": r, "A": y}
                 for r, y in zip(ratios, ys)]
    out.table("antibunching", rows, ["Omega_over_gamma", "Gamma_over_gamma", "A"])
    out.figure("antibunching.svg", lambda path: plotting.plot_curves(
        ratios, curves, path, r"$\Gamma/\gamma$", r"$\mathcal{A}$", logx=True))


def _fit_rows(result):
    d = result.as_dict()
    rows = []
    for name, e in d["parameters"].items():
        rows.append({"name": name, "value": e["value"], "stderr": _none_nan(e["stderr"]),
                     "ci95_low": _none_nan(e["ci95"][0]), "ci95_high": _none_nan(e["ci95"][1]),
                     "unit": e["unit"], "value_MHz": _none_nan(e.get("value_MHz"))})
    return rows, d


def _none_nan(v):
    return float("nan") if v is None else v


def cmd_fit_transmission(cfg, args, out):
    ft = cfg.fit_transmission
    if not ft.traces:
        raise ConfigError("fit_transmission.traces is empty")
    traces = []
    for t in ft.traces:
        try:
            with open(t.path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read trace {t.path}: {exc}") from None
        traces.append(calibration.read_trace_csv(
            text, probe_detuning=float(units.mhz_to_rad(t.probe_detuning_MHz))))
    omega_s = units.TWO_PI * ft.omega_s_GHz * 1e9
    init = analytic.TransmissionParams(
        gamma=float(units.mhz_to_rad(ft.gamma_MHz)), Gamma=float(units.mhz_to_rad(ft.Gamma_MHz)),
        gamma_phi=float(units.mhz_to_rad(ft.gamma_phi_MHz)),
        Gamma_phi=float(units.mhz_to_rad(ft.Gamma_phi_MHz)),
        omega_s=omega_s, omega_p=omega_s, Cc_over_Ce=ft.Cc_over_Ce, prefactor=ft.prefactor)
    _progress(f"fit-transmission: {len(traces)} traces, free={ft.free}")
    res = calibration.fit_transmission(traces, init, free=tuple(ft.free), max_nfev=ft.max_nfev)
    rows, doc = _fit_rows(res)
    out.table("fit_transmission", rows,
              ["name", "value", "stderr", "ci95_low", "ci95_high", "unit", "value_MHz"], doc)

    def model(trace):
        i = next(n for n, t in enumerate(traces) if t is trace)
        vals = {**res.fixed, **dict(zip(res.names, res.values))}
        tp = replace(init, gamma=vals["gamma"], gamma_phi=vals["gamma_phi"],
                     Gamma=vals["Gamma"], Gamma_phi=vals["Gamma_phi"],
                     prefactor=vals["prefactor"], omega_s=vals["omega_s"])
        det = vals.get(f"detuning_{i}", trace.probe_detuning)
        return analytic.transmission(trace.omega, True, replace(tp, omega_p=tp.omega_s + det))

    out.figure("fit_transmission.svg", lambda path: plotting.plot_transmission(traces, model, path))


def _map_init(d):
    """Config init values; ``*_MHz`` keys become rad/s under the bare name."""
    out = {}
    for k, v in d.items():
        if k.endswith("_MHz"):
            out[k[:-4]] = float(units.mhz_to_rad(v))
        else:
            out[k] = float(v)
    return out


def cmd_fit_map(cfg, args, out):
    fm = cfg.fit_map
    if fm.data is None:
        raise ConfigError("fit_map.data is required")
    try:
        with open(fm.data) as fh:
            measured = spectrum.MixingMap.from_csv(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read map {fm.data}: {exc}") from None
    ex = cfg.extraction
    init = _map_init(fm.init)
    free = [n[:-4] if n.endswith("_MHz") else n for n in fm.free]
    forward = calibration.MapForwardModel(measured, kind=fm.kind, template=cfg.cascade_params(),
                                          jobs=args.jobs, engine=ex.engine,
                                          samples_per_period=ex.samples_per_period)
    _progress(f"fit-map: {measured.axis1.size}x{measured.axis2.size} grid, free={free}")
    res = calibration.fit_mixing_map(measured, forward, init, free, gain=fm.gain,
                                     floor_db=ex.floor_dBm if fm.use_floor else None,
                                     max_nfev=fm.max_nfev)
    rows, doc = _fit_rows(res)
    out.table("fit_map", rows,
              ["name", "value", "stderr", "ci95_low", "ci95_high", "unit", "value_MHz"], doc)


def cmd_perturb(cfg, args, out):
    pc = cfg.perturb
    s = cfg.system
    gamma = float(units.mhz_to_rad(s.gamma_MHz))
    Gamma = float(units.mhz_to_rad(s.Gamma_MHz))
    W = expand_grid(pc.W_bar, "perturb.W_bar")
    E = expand_grid(pc.E_bar, "perturb.E_bar")
    _progress(f"perturb: {len(W)}x{len(E)} drive points, orders <= {pc.max_order}")
    table = perturbation.compare_with_exact(
        W, E, gamma, Gamma, s.alpha, float(units.mhz_to_rad(s.delta_omega_MHz)),
        max_order=pc.max_order, harmonics=tuple(pc.harmonics), source=pc.source,
        eta=s.eta_over_gamma * gamma, samples_per_period=cfg.extraction.samples_per_period)
    if out.fmt in ("csv", "both"):
        out.text("perturbation.csv", table.to_csv())
        out.text("perturbation_net.csv", rows_to_csv(
            table.net, ["W_bar", "E_bar", "order", "coherent_sum", "squared_sum", "exact"]))
    if out.fmt in ("json", "both"):
        out.json("perturbation.json", {"rows": [r.__dict__ for r in table.rows],
                                       "net": table.net, "errors": table.errors})


COMMANDS = {
    "simulate": (cmd_simulate, "one operating point: sideband spectrum of the cascade"),
    "sweep": (cmd_sweep, "2-D mixing map over drive levels or rate ratio"),
    "classical": (cmd_classical, "closed-form two-tone mixing amplitudes"),
    "g2": (cmd_g2, "second-order correlation curves of the source"),
    "antibunching": (cmd_antibunching, "bandwidth-averaged g2 versus Gamma/gamma"),
    "fit-transmission": (cmd_fit_transmission, "fit the weak-drive transmission model"),
    "fit-map": (cmd_fit_map, "fit simulated to measured mixing maps"),
    "perturb": (cmd_perturb, "perturbative versus exact harmonics"),
    "compare-classical-quantum": (cmd_compare, "cascade spectrum next to its classical twin"),
}


def build_parser():
    ap = argparse.ArgumentParser(prog="cascade-qwm", description="Quantum wave mixing in cascaded two-level systems.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="YAML/JSON run config (defaults apply if omitted)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both")
        p.add_argument("--svg", action="store_true", help="also render SVG figures")
        p.add_argument("--floor-dbm", type=float, default=None,
                       help="analyzer floor (overrides extraction.floor_dBm)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _fail(code, exc, out_dir):
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    try:
        if out_dir and os.path.isdir(out_dir):
            Output(out_dir).json("error.json", err)
    except OSError:
        pass
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        return _fail(EXIT_CONFIG, ConfigError("--jobs must be at least 1"), None)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
        if args.floor_dbm is not None:
            cfg.extraction.floor_dBm = args.floor_dbm
        out = Output(args.out, args.format, args.svg)
        out.text("resolved_config.json", cfg.dumps())
        COMMANDS[args.command][0](cfg, args, out)
    except ParameterError as exc:
        # includes ConfigError: invalid input rather than a failed computation
        return _fail(EXIT_CONFIG, exc, args.out)
    except FitError as exc:
        return _fail(EXIT_FIT, exc, args.out)
    except (CascadeError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, exc, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
