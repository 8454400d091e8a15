"""
Least-squares calibration against measured transmission traces and
sideband-power maps.

Fits run in scaled units (rates as MHz = value / 2pi / 1e6) so that all
parameters are O(1); results are reported in rad/s with MHz convenience
fields.
"""

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from . import analytic, spectrum, units
from .errors import FitError, ParameterError

log = logging.getLogger(__name__)

RATE_NAMES = ("gamma", "gamma_phi", "Gamma", "Gamma_phi")
PENALTY_DB = 60.0


@dataclass
class MeasuredTrace:
    """
    One transmission trace.

    ``values`` is complex (``re + i im``) or real magnitudes; ``probe_detuning``
    is the initial guess of ``omega_p - omega_s`` in rad/s.
    """

    freq_hz: np.ndarray
    values: np.ndarray
    probe_detuning: float = 0.0
    variance: np.ndarray = None

    def __post_init__(self):
        self.freq_hz = np.asarray(self.freq_hz, dtype=float)
        self.values = np.asarray(self.values)
        if self.freq_hz.shape != self.values.shape or self.freq_hz.ndim != 1:
            raise ParameterError("frequencies and values must be 1-D of equal length")
        if np.any(np.diff(self.freq_hz) <= 0):
            raise ParameterError("frequencies must be strictly increasing")
        if self.variance is not None:
            self.variance = np.asarray(self.variance, dtype=float)
            if self.variance.shape != self.freq_hz.shape or np.any(self.variance <= 0):
                raise ParameterError("variance must be positive, one per point")

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    @property
    def omega(self):
        return units.TWO_PI * self.freq_hz


_TRACE_COLUMNS = ({"freq_hz", "re", "im"}, {"freq_hz", "mag"})


def read_trace_csv(text, probe_detuning=0.0):
    """
    Parse a trace CSV with header ``freq_hz,re,im`` or ``freq_hz,mag``,
    optionally followed by ``variance``. Other columns are rejected.
    """
    reader = csv.DictReader(io.StringIO(text))
    cols = set(reader.fieldnames or ())
    base = cols - {"variance"}
    if base not in _TRACE_COLUMNS:
        raise ParameterError(
            f"trace columns must be freq_hz,re,im or freq_hz,mag (+ variance); got {sorted(cols)}")
    rows = list(reader)
    f = np.array([float(r["freq_hz"]) for r in rows])
    if "mag" in base:
        v = np.array([float(r["mag"]) for r in rows])
    else:
        v = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
    var = np.array([float(r["variance"]) for r in rows]) if "variance" in cols else None
    return MeasuredTrace(f, v, probe_detuning, var)


def write_trace_csv(trace):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if trace.is_complex:
        w.writerow(["freq_hz", "re", "im"])
        for f, v in zip(trace.freq_hz, trace.values):
            w.writerow([repr(float(f)), repr(float(v.real)), repr(float(v.imag))])
    else:
        w.writerow(["freq_hz", "mag"])
        for f, v in zip(trace.freq_hz, trace.values):
            w.writerow([repr(float(f)), repr(float(v))])
    return buf.getvalue()


@dataclass
class FitResult:
    """
    Estimates, 95% intervals from the Gauss-Newton covariance, diagnostics.

    ``units`` maps a parameter name to ``'rad/s'``, ``'dB'`` or ``''``.
    """

    names: list
    values: np.ndarray
    stderr: np.ndarray
    residual_norm: float
    diagnostics: dict
    units: dict = field(default_factory=dict)
    unidentifiable: list = field(default_factory=list)
    fixed: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.values[self.names.index(name)]

    @property
    def ci95(self):
        return np.column_stack([self.values - 1.96 * self.stderr,
                                self.values + 1.96 * self.stderr])

    def as_dict(self):
        params = {}
        for name, v, se, (lo, hi) in zip(self.names, self.values, self.stderr, self.ci95):
            entry = {"value": float(v), "stderr": _num(se), "ci95": [_num(lo), _num(hi)],
                     "unit": self.units.get(name, "")}
            if self.units.get(name) == "rad/s":
                entry["value_MHz"] = float(units.rad_to_mhz(v))
                entry["ci95_MHz"] = [_num(units.rad_to_mhz(lo)), _num(units.rad_to_mhz(hi))]
            params[name] = entry
        return {"parameters": params, "fixed": {k: float(v) for k, v in self.fixed.items()},
                "residual_norm": float(self.residual_norm),
                "unidentifiable": list(self.unidentifiable),
                "diagnostics": self.diagnostics}

    def to_json(self):
        return json.dumps(self.as_dict(), indent=1, sort_keys=True)


def _num(x):
    return float(x) if np.isfinite(x) else None


def _covariance(jac, resid, n_free, names, rel_cond=1e-7):
    """Standard errors from ``s^2 (J^T J)^-1`` and a list of poorly determined directions."""
    m = resid.size
    dof = max(m - n_free, 1)
    s2 = float(resid @ resid) / dof
    # identifiability judged on column-normalized J so parameter units do not matter
    norms = np.linalg.norm(jac, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    _, svn, Vtn = np.linalg.svd(jac / norms, full_matrices=False)
    flagged = []
    if svn.size == 0:
        return np.zeros(0), flagged
    for idx in np.nonzero(svn <= rel_cond * svn[0])[0]:
        flagged.extend(names[j] for j in np.nonzero(np.abs(Vtn[idx]) > 0.1)[0])
    _, sv, Vt = np.linalg.svd(jac, full_matrices=False)
    small = sv <= rel_cond * sv[0]
    inv = np.where(small, 0.0, 1.0 / np.where(small, 1.0, sv) ** 2)
    cov = (Vt.T * inv) @ Vt * s2
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    for j, name in enumerate(names):
        if name in flagged:
            se[j] = np.inf
    return se, sorted(set(flagged), key=names.index)


def _run(fun, x0, lb, ub, names, max_nfev, scale):
    x0 = np.clip(x0, lb, ub)
    res = least_squares(fun, x0, bounds=(lb, ub), method="trf", x_scale="jac",
                        max_nfev=max_nfev, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    diag = {"nfev": int(res.nfev), "njev": None if res.njev is None else int(res.njev),
            "status": int(res.status), "message": res.message,
            "optimality": float(res.optimality), "cost": float(res.cost),
            "final_step_norm": float(np.linalg.norm((res.x - x0) * scale))}
    if res.status == 0:
        raise FitError(f"fit did not converge within {max_nfev} evaluations", result=res)
    return res, diag


# --- transmission ----------------------------------------------------------------

def transmission_params_from(values, fixed, omega_ref):
    """TransmissionParams for one trace from the scaled parameter dict."""
    d = dict(fixed)
    d.update(values)
    w_s = omega_ref + units.mhz_to_rad(d["omega_s"])
    return analytic.TransmissionParams(
        gamma=units.mhz_to_rad(d["gamma"]), gamma_phi=units.mhz_to_rad(d["gamma_phi"]),
        Gamma=units.mhz_to_rad(d["Gamma"]), Gamma_phi=units.mhz_to_rad(d["Gamma_phi"]),
        omega_s=w_s, omega_p=w_s, Cc_over_Ce=d["Cc_over_Ce"], prefactor=d["prefactor"])


def fit_transmission(traces, init, free=("gamma", "gamma_phi", "Gamma", "Gamma_phi",
                                          "omega_s", "detunings"),
                     fit_detunings=None, max_nfev=2000):
    """
    Joint fit of the weak-drive transmission model to several traces.

    Shared parameters are ``gamma, gamma_phi, Gamma, Gamma_phi, prefactor,
    omega_s``; every trace has its own ``omega_p - omega_s`` (start value
    ``trace.probe_detuning``). ``init`` is a :class:`TransmissionParams`;
    names not in ``free`` are held at their ``init`` values. ``'detunings'``
    in ``free`` frees all per-trace detunings.

    Note that ``prefactor`` and ``gamma`` enter the source line only through
    ``prefactor * gamma / gamma_2`` and its width, so freeing both together
    with ``gamma_phi`` leaves one direction unidentifiable (flagged).
    """
    if not traces:
        raise ParameterError("need at least one trace")
    known = {"gamma", "gamma_phi", "Gamma", "Gamma_phi", "prefactor", "omega_s", "detunings"}
    bad = set(free) - known
    if bad:
        raise ParameterError(f"unknown free parameters {sorted(bad)}")
    omega_ref = init.omega_s
    shared0 = {"gamma": units.rad_to_mhz(init.gamma), "gamma_phi": units.rad_to_mhz(init.gamma_phi),
               "Gamma": units.rad_to_mhz(init.Gamma), "Gamma_phi": units.rad_to_mhz(init.Gamma_phi),
               "prefactor": init.prefactor, "omega_s": 0.0, "Cc_over_Ce": init.Cc_over_Ce}
    fit_detunings = "detunings" in free if fit_detunings is None else fit_detunings
    names = [n for n in ("gamma", "gamma_phi", "Gamma", "Gamma_phi", "prefactor", "omega_s")
             if n in free]
    det0 = [units.rad_to_mhz(t.probe_detuning) for t in traces]
    det_names = [f"detuning_{i}" for i in range(len(traces))]
    if fit_detunings:
        names = names + det_names
    x0 = np.array([shared0[n] for n in names if n in shared0]
                  + (det0 if fit_detunings else []), dtype=float)
    lb = np.array([(-np.inf if n == "omega_s" or n.startswith("detuning") else 0.0) for n in names])
    ub = np.full(len(names), np.inf)
    n_points = sum(t.freq_hz.size * (2 if t.is_complex else 1) for t in traces)
    if n_points < len(names) + 2:
        raise ParameterError("not enough data points for the free parameters")

    def unpack(x):
        vals = dict(zip(names, x))
        shared = {k: vals.get(k, shared0[k]) for k in shared0}
        dets = [vals.get(f"detuning_{i}", det0[i]) for i in range(len(traces))]
        return shared, dets

    def model(trace, shared, det):
        tp = transmission_params_from(shared, {}, omega_ref)
        tp = replace(tp, omega_p=tp.omega_s + units.mhz_to_rad(det))
        return analytic.transmission(trace.omega, True, tp)

    def resid(x):
        shared, dets = unpack(x)
        out = []
        for t, det in zip(traces, dets):
            m = model(t, shared, det)
            w = 1.0 if t.variance is None else 1.0 / np.sqrt(t.variance)
            if t.is_complex:
                r = (m - t.values) * w
                out.extend([r.real, r.imag])
            else:
                out.append((np.abs(m) - t.values) * w)
        return np.concatenate(out)

    res, diag = _run(resid, x0, lb, ub, names, max_nfev, np.ones_like(x0))
    se, flagged = _covariance(res.jac, res.fun, len(names), names)
    values = res.x.copy()
    out_units = {}
    # back to SI
    for j, n in enumerate(names):
        if n in RATE_NAMES or n == "omega_s" or n.startswith("detuning"):
            values[j] = units.mhz_to_rad(values[j])
            se[j] = units.mhz_to_rad(se[j]) if np.isfinite(se[j]) else se[j]
            out_units[n] = "rad/s"
    oi = names.index("omega_s") if "omega_s" in names else None
    if oi is not None:
        values[oi] += omega_ref
    fixed = {n: (units.mhz_to_rad(shared0[n]) if n in RATE_NAMES else shared0[n])
             for n in shared0 if n not in names}
    if "omega_s" in fixed:
        fixed["omega_s"] = omega_ref
    return FitResult(names, values, se, float(np.linalg.norm(res.fun)), diag,
                     units=out_units, unidentifiable=flagged, fixed=fixed)


def prefactor_from_peak(t_max, Cc_over_Ce=0.1):
    """``alpha sqrt(AG)`` from the peak source-line transmission with the probe detuned."""
    if Cc_over_Ce <= 0:
        raise ParameterError("Cc_over_Ce must be positive")
    return t_max / Cc_over_Ce


def synthetic_traces(params, detunings, freq_hz, noise=0.0, rng=None, magnitude=False):
    """Model traces (optionally with complex Gaussian noise ``noise * max|t|``)."""
    rng = np.random.default_rng(rng)
    out = []
    for d in detunings:
        tp = replace(params, omega_p=params.omega_s + d)
        t = analytic.transmission(units.TWO_PI * np.asarray(freq_hz), True, tp)
        if noise:
            scale = noise * np.max(np.abs(t))
            t = t + scale * (rng.standard_normal(t.shape) + 1j * rng.standard_normal(t.shape)) / math.sqrt(2)
        out.append(MeasuredTrace(freq_hz, np.abs(t) if magnitude else t, probe_detuning=d))
    return out


# --- mixing maps -------------------------------------------------------------

class MapForwardModel:
    """
    Simulated sideband powers on the grid of a measured map, cached on the
    physical parameters.

    ``kind='cascade'``: parameters among ``alpha, gamma, Gamma`` (rad/s for
    rates) override the template and the map is computed with
    :func:`spectrum.sweep_map` (grid kind ``'drive'``). ``kind='classical'``:
    the analytic two-tone formula with parameters ``Gamma2_over_Gamma`` and
    axis offsets ``axis1_offset_dB``, ``axis2_offset_dB`` (true drive = nominal
    + offset).
    """

    def __init__(self, measured, kind="cascade", template=None, orders=None, jobs=1,
                 engine="harmonic", samples_per_period=128, power="dBm"):
        if kind not in ("cascade", "classical"):
            raise ParameterError("forward model kind must be 'cascade' or 'classical'")
        if kind == "cascade" and template is None:
            raise ParameterError("cascade forward model needs a parameter template")
        self.measured = measured
        self.kind = kind
        self.template = template
        self.orders = tuple(measured.orders.tolist() if orders is None else orders)
        self.jobs = jobs
        self.engine = engine
        self.samples_per_period = samples_per_period
        self.power = power
        self.cache = {}
        self.evaluations = 0

    def __call__(self, phys):
        key = tuple(sorted((k, float(v)) for k, v in phys.items()))
        if key not in self.cache:
            self.evaluations += 1
            self.cache[key] = self._evaluate(dict(phys))
        return self.cache[key]

    def _evaluate(self, phys):
        m = self.measured
        if self.kind == "classical":
            r = phys.get("Gamma2_over_Gamma", 0.5)
            o1 = phys.get("axis1_offset_dB", 0.0)
            o2 = phys.get("axis2_offset_dB", 0.0)
            out = np.empty((m.axis1.size, m.axis2.size, len(self.orders)))
            for i, a1 in enumerate(m.axis1):
                for j, a2 in enumerate(m.axis2):
                    amp = analytic.classical_spectrum(units.from_db(a1 + o1), units.from_db(a2 + o2),
                                                      r, max(abs(k) for k in self.orders))
                    with np.errstate(divide="ignore"):
                        out[i, j] = [10.0 * np.log10(amp[k] ** 2) for k in self.orders]
            return out
        p = replace(self.template, **phys)
        grid = spectrum.GridSpec("drive", tuple(m.axis1), tuple(m.axis2))
        mm = spectrum.sweep_map(grid, p, orders=self.orders, jobs=self.jobs, engine=self.engine,
                                samples_per_period=self.samples_per_period, power=self.power)
        pw = mm.power_db.copy()
        if not mm.mask.all():
            log.warning("forward model failed at %d grid points; penalized", int((~mm.mask).sum()))
            pw[~mm.mask] = np.nan
        return pw


_MAP_UNITS = {"alpha": "", "gamma": "rad/s", "Gamma": "rad/s", "Gamma2_over_Gamma": "",
              "axis1_offset_dB": "dB", "axis2_offset_dB": "dB", "gain_dB": "dB"}


def fit_mixing_map(measured, forward, init, free, gain="global", floor_db=None,
                   bounds=None, max_nfev=200):
    """
    Fit physical parameters and gain offsets to a measured map in dB.

    The residual is ``sim_dB + gain - measured_dB`` over every valid grid
    point and order. Gain offsets enter linearly, so they are profiled out
    in closed form at each step (``gain='global'``: one offset;
    ``'per_order'``: one per order; ``'none'``). With ``floor_db`` both sides
    are clipped at the floor before comparison, as a spectrum analyzer would.

    ``init`` maps parameter names to start values (rates in rad/s); only the
    names in ``free`` are varied. Rates are optimized in MHz internally.
    """
    names = list(free)
    for n in names:
        if n not in _MAP_UNITS or n == "gain_dB":
            raise ParameterError(f"cannot fit parameter {n!r}")
    if gain not in ("global", "per_order", "none"):
        raise ParameterError("gain must be 'global', 'per_order' or 'none'")
    scale = np.array([units.mhz_to_rad(1.0) if _MAP_UNITS[n] == "rad/s" else 1.0 for n in names])
    default_bounds = {"alpha": (0.0, 1.0), "Gamma2_over_Gamma": (0.5, np.inf),
                      "gamma": (1e-9, np.inf), "Gamma": (1e-9, np.inf)}
    bounds = dict(default_bounds, **(bounds or {}))
    lb = np.array([bounds.get(n, (-np.inf, np.inf))[0] for n in names]) / scale
    ub = np.array([bounds.get(n, (-np.inf, np.inf))[1] for n in names]) / scale
    x0 = np.array([init[n] for n in names], dtype=float) / scale
    fixed = {k: v for k, v in init.items() if k not in names}

    target = np.array(measured.power_db, dtype=float)
    valid = measured.mask[:, :, None] & np.isfinite(target)
    if floor_db is not None:
        target = np.where(np.isneginf(target), floor_db, np.maximum(target, floor_db))
        valid = measured.mask[:, :, None] & np.isfinite(target)

    def simulate(x):
        phys = dict(fixed)
        phys.update({n: v * s for n, v, s in zip(names, x, scale)})
        return forward(phys)

    # floored measurements only bound the model from above, so they carry no
    # gain information; averaging them in drags the offset toward the floor
    usable = valid if floor_db is None else valid & (target > floor_db)

    def profile_gain(sim):
        diff = np.where(usable & np.isfinite(sim), target - sim, np.nan)
        if gain == "none":
            return np.zeros(sim.shape[-1])
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            if gain == "global":
                g = np.nanmean(diff)
                return np.full(sim.shape[-1], 0.0 if np.isnan(g) else g)
            g = np.nanmean(diff, axis=(0, 1))
        return np.where(np.isnan(g), 0.0, g)

    def resid(x):
        sim = simulate(x)
        g = profile_gain(sim)
        model = sim + g[None, None, :]
        if floor_db is not None:
            model = np.maximum(model, floor_db)
        r = model - target
        r = np.where(np.isfinite(r), r, PENALTY_DB)
        return r[valid]

    res, diag = _run(resid, x0, lb, ub, names, max_nfev, scale)
    sim = simulate(res.x)
    g = profile_gain(sim)
    se, flagged = _covariance(res.jac, res.fun, len(names) + (0 if gain == "none" else
                                                              (1 if gain == "global" else g.size)),
                              names)
    values = res.x * scale
    se = se * scale
    out_names = list(names)
    out_vals = list(values)
    out_se = list(se)
    if gain == "global":
        out_names.append("gain_dB")
        out_vals.append(g[0])
        out_se.append(np.nan)
    elif gain == "per_order":
        for k, gk in zip(measured.orders, g):
            out_names.append(f"gain_dB_{int(k)}")
            out_vals.append(gk)
            out_se.append(np.nan)
    diag["forward_evaluations"] = getattr(forward, "evaluations", None)
    diag["rms_dB"] = float(np.sqrt(np.mean(res.fun**2))) if res.fun.size else 0.0
    u = {n: _MAP_UNITS.get(n, "dB") for n in out_names}
    return FitResult(out_names, np.array(out_vals), np.array(out_se),
                     float(np.linalg.norm(res.fun)), diag, units=u,
                     unidentifiable=flagged, fixed={k: float(v) for k, v in fixed.items()})
