"""
Coherent sideband spectra of quasi-stationary cycles and 2-D mixing maps.

A harmonic ``k`` is the Fourier coefficient of ``exp(+i k dw t)`` in the
rotating frame, i.e. the line at ``omega_d + k dw``. Coefficients are
computed with a rectangular window over an integer number of periods, so
every line sits exactly on a DFT bin.
"""

import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dynamics, units
from .errors import CascadeError, ConvergenceError, ParameterError

DEFAULT_ORDERS = (-7, -5, -3, -1, 1, 3, 5, 7)
SOURCE_WEIGHTS = ("mean_field", "printed")


@dataclass
class SidebandSpectrum:
    """
    Complex line amplitudes of a detected field in sqrt(photon flux) units.

    ``even`` optionally carries even-harmonic amplitudes for diagnostics.
    """

    orders: np.ndarray
    amplitudes: np.ndarray
    even: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.orders = np.asarray(self.orders, dtype=int)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)

    @property
    def powers(self):
        """Photon flux per line, ``|c_k|^2`` (1/s)."""
        return np.abs(self.amplitudes) ** 2

    def __getitem__(self, k):
        idx = np.nonzero(self.orders == k)[0]
        if not idx.size:
            raise KeyError(k)
        return self.amplitudes[idx[0]]

    def power_db(self, reference=1.0, offset_db=0.0):
        """``10 log10(|c_k|^2 / reference) + offset_db``."""
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.powers / reference) + offset_db

    def power_dbm(self, carrier_ghz=units.DEFAULT_CARRIER_GHZ, gain_db=units.DEFAULT_GAIN_DB):
        return units.flux_to_dbm(self.powers, carrier_ghz, gain_db)

    def even_ratio(self):
        """Largest even-harmonic magnitude relative to the largest odd one."""
        if not self.even:
            return 0.0
        top = np.max(np.abs(self.amplitudes)) if self.amplitudes.size else 0.0
        worst = max(abs(v) for v in self.even.values())
        return worst / top if top > 0 else (0.0 if worst == 0 else math.inf)

    def to_rows(self, **power_kw):
        dbm = self.power_dbm(**power_kw)
        return [{"order": int(k), "re": float(c.real), "im": float(c.imag),
                 "flux": float(abs(c) ** 2), "power_dBm": float(p)}
                for k, c, p in zip(self.orders, self.amplitudes, dbm)]


def fourier_components(series, delta_omega, n_periods, samples_per_period,
                       orders=DEFAULT_ORDERS, times=None, even_orders=()):
    """
    Line amplitudes ``c_k = (1/N) sum_j s_j exp(-i k dw t_j)``.

    Parameters
    ----------
    series : complex array, length ``n_periods * samples_per_period``
    delta_omega : float
    orders : iterable of int
    times : array, optional
        Sample times; default ``2 pi j / (dw S)``. Must be uniform and cover
        exactly ``n_periods`` periods.
    even_orders : iterable of int
        Extra (diagnostic) orders reported in ``SidebandSpectrum.even``.
    """
    s = np.asarray(series, dtype=complex)
    N = int(n_periods) * int(samples_per_period)
    if n_periods < 1 or samples_per_period < 1:
        raise ParameterError("n_periods and samples_per_period must be positive")
    if s.ndim != 1 or s.size != N:
        raise ParameterError(
            f"series has {s.size} samples, expected n_periods * samples_per_period = {N}")
    T = 2.0 * math.pi / delta_omega
    dt = T / samples_per_period
    if times is None:
        times = dt * np.arange(N)
    else:
        times = np.asarray(times, dtype=float)
        if times.shape != s.shape:
            raise ParameterError("times and series differ in length")
        steps = np.diff(times)
        if N > 1 and np.max(np.abs(steps - dt)) > 1e-9 * dt:
            raise ParameterError("samples must be uniform and span an integer number of periods")
    # phase relative to the first sample keeps the exponent small; the
    # constant factor exp(-i k dw t_0) restores absolute phase
    t0 = times[0]
    ph = delta_omega * (times - t0)

    def coef(k):
        return np.mean(s * np.exp(-1j * k * ph)) * np.exp(-1j * k * delta_omega * t0)

    amps = np.array([coef(k) for k in orders], dtype=complex)
    even = {int(k): coef(k) for k in even_orders}
    return SidebandSpectrum(orders=list(orders), amplitudes=amps, even=even,
                            metadata={"n_periods": int(n_periods),
                                      "samples_per_period": int(samples_per_period),
                                      "delta_omega": float(delta_omega)})


# --- detected fields ---------------------------------------------------------

def source_weight(params, rule="mean_field"):
    """
    Weight of ``<s->`` in the detected field.

    ``'mean_field'``: ``alpha sqrt(2 gamma)``, the amplitude at which the
    source's coherent emission drives the probe in the same units as ``E``.
    ``'printed'``: ``sqrt(alpha) gamma``.
    """
    if rule == "mean_field":
        return params.alpha * math.sqrt(2.0 * params.gamma)
    if rule == "printed":
        return math.sqrt(params.alpha) * params.gamma
    raise ParameterError(f"unknown source weight rule {rule!r}")


def detected_field(traj, params, include="full", weight="mean_field"):
    """
    Field at the detector in sqrt(photon flux) units.

    ``full``: probe tone ``E exp(-i s dw t)`` plus the source's coherent
    emission plus the probe's scattering ``sqrt(Gamma/2) <p->``.
    ``probe_only``: the last term alone.
    """
    probe = math.sqrt(params.Gamma / 2.0) * np.asarray(traj.sigma_p)
    if include == "probe_only":
        return probe
    if include != "full":
        raise ParameterError(f"include must be 'full' or 'probe_only', got {include!r}")
    k_probe = -params.source_detuning_sign
    tone = params.E * np.exp(1j * k_probe * params.delta_omega * traj.times)
    return tone + source_weight(params, weight) * np.asarray(traj.sigma_s) + probe


def bichromatic_field(traj, Gamma, include="full"):
    """Detected field of a single two-level system under two classical tones."""
    probe = math.sqrt(Gamma / 2.0) * np.asarray(traj.sigma_p)
    if include == "probe_only":
        return probe
    dw = traj.delta_omega
    e_plus = traj.info["Omega_plus"] / math.sqrt(2.0 * Gamma)
    e_minus = traj.info["Omega_minus"] / math.sqrt(2.0 * Gamma)
    return (e_plus * np.exp(1j * dw * traj.times) + e_minus * np.exp(-1j * dw * traj.times)
            + probe)


def spectrum_of(traj, field_series, orders=DEFAULT_ORDERS, even_orders=(-2, 0, 2)):
    return fourier_components(field_series, traj.delta_omega, traj.n_periods,
                              traj.samples_per_period, orders=orders, times=traj.times,
                              even_orders=even_orders)


def cascade_spectrum(params, orders=DEFAULT_ORDERS, method="harmonic", n_periods=1,
                     samples_per_period=256, include="full", weight="mean_field",
                     control=None):
    """steady_cycle -> detected_field -> fourier_components for one point."""
    traj = dynamics.steady_cycle(params, n_periods=n_periods,
                                 samples_per_period=samples_per_period,
                                 method=method, control=control)
    spec = spectrum_of(traj, detected_field(traj, params, include, weight), orders)
    spec.metadata.update(engine=method, include=include, source_weight=weight,
                         max_concurrence=float(np.max(traj.concurrence)))
    return spec


def classical_spectrum(Gamma, Gamma2, Omega_plus, Omega_minus, delta_omega,
                       orders=DEFAULT_ORDERS, method="harmonic", samples_per_period=256,
                       include="full", control=None):
    traj = dynamics.single_qubit_bichromatic(Gamma, Gamma2, Omega_plus, Omega_minus,
                                             delta_omega, samples_per_period=samples_per_period,
                                             method=method, control=control)
    spec = spectrum_of(traj, bichromatic_field(traj, Gamma, include), orders)
    spec.metadata.update(engine=method, include=include)
    return spec


def matched_classical(quantum, Gamma, delta_omega, Gamma2=None, orders=None,
                      samples_per_period=256, start=None):
    """
    Classical two-tone counterpart of a cascade spectrum.

    The two classical Rabi frequencies are adjusted (log-amplitude least
    squares) until the transmitted lines at ``k = +1`` and ``k = -1`` have the
    same magnitudes as in ``quantum``; all other lines are then predictions.
    Returns ``(spectrum, (Omega_plus, Omega_minus))``.
    """
    from scipy.optimize import least_squares

    Gamma2 = 0.5 * Gamma if Gamma2 is None else Gamma2
    orders = tuple(quantum.orders.tolist() if orders is None else orders)
    target = np.abs([quantum[1], quantum[-1]])
    if np.any(target == 0):
        raise ParameterError("both drive lines must be nonzero to match amplitudes")

    def run(x):
        return classical_spectrum(Gamma, Gamma2, x[0], x[1], delta_omega, orders=orders,
                                  samples_per_period=samples_per_period)

    def resid(x):
        c = run(x)
        return np.log(np.abs([c[1], c[-1]]) / target)

    if start is None:
        # match with the quasi-static closed form first (cheap), then refine
        from . import analytic

        def resid_cf(lk):
            c = analytic.classical_spectrum(math.exp(lk[0]), math.exp(lk[1]), Gamma2 / Gamma, 1)
            return np.log(np.abs([c[1], c[-1]]) * math.sqrt(Gamma) / target)

        lk = least_squares(resid_cf, np.log(np.maximum(target**2 / Gamma, 1e-12))).x
        start = np.array([units.rabi_from_kappa(math.exp(v), Gamma) for v in lk])
    x0 = np.asarray(start, dtype=float)
    res = least_squares(resid, x0, bounds=(0.0, np.inf), x_scale=np.maximum(x0, 1e-12),
                        xtol=1e-12, ftol=1e-12)
    if not res.success or np.max(np.abs(res.fun)) > 1e-6:
        raise ConvergenceError(f"drive-line matching failed: residual {np.max(np.abs(res.fun)):.2e}")
    spec = run(res.x)
    spec.metadata.update(Omega_plus=float(res.x[0]), Omega_minus=float(res.x[1]))
    return spec, (float(res.x[0]), float(res.x[1]))


# --- mixing maps -------------------------------------------------------------

AXIS_KINDS = {
    # kind: (axis1 name, axis2 name)
    "drive": ("nu_plus_over_gamma_dB", "nu_minus_over_Gamma_dB"),
    "ratio": ("Gamma_over_gamma_dB", "drive_dB"),
    "classical": ("nu_plus_over_Gamma_dB", "nu_minus_over_Gamma_dB"),
}


@dataclass(frozen=True)
class GridSpec:
    """
    Two sweep axes (values in dB).

    ``kind='drive'``: axis1 = nu_+/gamma, axis2 = nu_-/Gamma (cascade).
    ``kind='ratio'``: axis1 = 10 log10(Gamma/gamma) with Gamma held fixed,
    axis2 = the common drive level nu_+/gamma = nu_-/Gamma.
    ``kind='classical'``: single probe under two classical tones, axis1 =
    nu_+/Gamma, axis2 = nu_-/Gamma.
    """

    kind: str
    axis1: tuple
    axis2: tuple

    def __post_init__(self):
        if self.kind not in AXIS_KINDS:
            raise ParameterError(f"grid kind must be one of {sorted(AXIS_KINDS)}")
        for name in ("axis1", "axis2"):
            ax = np.asarray(getattr(self, name), dtype=float)
            if ax.ndim != 1 or ax.size == 0 or not np.all(np.isfinite(ax)):
                raise ParameterError(f"{name} must be a non-empty finite 1-D grid")
            if np.unique(ax).size != ax.size:
                raise ParameterError(f"{name} has repeated values")
            object.__setattr__(self, name, tuple(sorted(float(v) for v in ax)))

    @property
    def names(self):
        return AXIS_KINDS[self.kind]

    @property
    def shape(self):
        return len(self.axis1), len(self.axis2)


def point_params(grid_kind, a1, a2, template):
    """CascadeParams of one grid point (``'drive'`` and ``'ratio'`` kinds)."""
    if grid_kind == "drive":
        nu_p, nu_m, p = a1, a2, template
    elif grid_kind == "ratio":
        # the probe (whose emission is detected) keeps its rate; the source
        # rate follows the ratio, with eta/gamma preserved
        gamma = template.Gamma / units.from_db(a1)
        p = replace(template, gamma=gamma, eta=template.eta * gamma / template.gamma)
        nu_p = nu_m = a2
    else:
        raise ParameterError(f"no cascade parameters for grid kind {grid_kind!r}")
    return replace(p, W=units.source_W_from_db(nu_p, p.gamma, p.eta),
                   E=units.probe_E_from_db(nu_m, p.Gamma))


@dataclass(frozen=True)
class PointTask:
    index: tuple
    kind: str
    a1: float
    a2: float
    template: dynamics.CascadeParams
    orders: tuple
    engine: str
    samples_per_period: int
    weight: str
    Gamma2_over_Gamma: float = 0.5


def _task_key(task):
    blob = json.dumps({"kind": task.kind, "a1": repr(task.a1), "a2": repr(task.a2),
                       "template": {k: repr(v) for k, v in asdict(task.template).items()},
                       "orders": list(task.orders), "engine": task.engine,
                       "S": task.samples_per_period, "weight": task.weight,
                       "g2": repr(task.Gamma2_over_Gamma)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def evaluate_point(task):
    """
    Amplitudes at one grid point; returns ``(index, amplitudes, max_concurrence,
    error_message)``. Module errors are captured, not raised, so one failing
    point cannot abort a sweep.
    """
    try:
        if task.kind == "classical":
            G = task.template.Gamma
            spec = classical_spectrum(
                G, task.Gamma2_over_Gamma * G,
                units.rabi_from_kappa(units.from_db(task.a1), G),
                units.rabi_from_kappa(units.from_db(task.a2), G),
                task.template.delta_omega, orders=task.orders, method=task.engine,
                samples_per_period=task.samples_per_period)
            conc = 0.0
        else:
            p = point_params(task.kind, task.a1, task.a2, task.template)
            spec = cascade_spectrum(p, orders=task.orders, method=task.engine,
                                    samples_per_period=task.samples_per_period,
                                    weight=task.weight)
            conc = spec.metadata["max_concurrence"]
        return task.index, spec.amplitudes, conc, None
    except (CascadeError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return task.index, None, None, f"{type(exc).__name__}: {exc}"


@dataclass
class MixingMap:
    """
    Sideband powers on a 2-D grid.

    ``power_db`` has shape ``(len(axis1), len(axis2), len(orders))`` in the
    unit named by ``unit``; ``mask`` is True where the point is valid.
    """

    axis1: np.ndarray
    axis2: np.ndarray
    orders: np.ndarray
    power_db: np.ndarray
    mask: np.ndarray = None
    unit: str = "dBm"
    axis_names: tuple = ("axis1_dB", "axis2_dB")
    amplitudes: np.ndarray = None
    concurrence_max: np.ndarray = None
    errors: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axis1 = np.asarray(self.axis1, dtype=float)
        self.axis2 = np.asarray(self.axis2, dtype=float)
        self.orders = np.asarray(self.orders, dtype=int)
        self.power_db = np.asarray(self.power_db, dtype=float)
        for name in ("axis1", "axis2"):
            if np.any(np.diff(getattr(self, name)) <= 0):
                raise ParameterError(f"{name} must be strictly increasing")
        shape = (self.axis1.size, self.axis2.size, self.orders.size)
        if self.power_db.shape != shape:
            raise ParameterError(f"power array {self.power_db.shape} does not match grid {shape}")
        if self.mask is None:
            self.mask = np.ones(shape[:2], dtype=bool)

    def order_index(self, k):
        idx = np.nonzero(self.orders == k)[0]
        if not idx.size:
            raise KeyError(k)
        return int(idx[0])

    def __getitem__(self, k):
        return self.power_db[:, :, self.order_index(k)]

    def with_offset(self, offset_db):
        return replace(self, power_db=self.power_db + offset_db)

    # -- serialization -------------------------------------------------------

    def to_csv(self, floor=None):
        """Long format ``axis1_dB, axis2_dB, order, power_dB``; masked points omitted."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis1_dB", "axis2_dB", "order", "power_dB"])
        pw = self.power_db if floor is None else np.maximum(self.power_db, floor)
        for i, a1 in enumerate(self.axis1):
            for j, a2 in enumerate(self.axis2):
                if not self.mask[i, j]:
                    continue
                for n, k in enumerate(self.orders):
                    w.writerow([repr(float(a1)), repr(float(a2)), int(k), _fmt(pw[i, j, n])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, unit="dBm"):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ParameterError("empty map CSV")
        header = [h.strip() for h in rows[0]]
        expected = ["axis1_dB", "axis2_dB", "order", "power_dB"]
        if header != expected:
            raise ParameterError(f"map CSV columns must be {expected}, got {header}")
        data = [(float(r[0]), float(r[1]), int(r[2]), float(r[3])) for r in rows[1:] if r]
        a1 = np.unique([d[0] for d in data])
        a2 = np.unique([d[1] for d in data])
        orders = np.unique([d[2] for d in data])
        pw = np.full((a1.size, a2.size, orders.size), np.nan)
        for x, y, k, p in data:
            pw[np.searchsorted(a1, x), np.searchsorted(a2, y), np.searchsorted(orders, k)] = p
        mask = np.all(np.isfinite(pw) | np.isneginf(pw), axis=2)
        return cls(a1, a2, orders, pw, mask=mask, unit=unit)

    def to_json_dict(self):
        return {
            "axis1_dB": self.axis1.tolist(),
            "axis2_dB": self.axis2.tolist(),
            "axis_names": list(self.axis_names),
            "unit": self.unit,
            "orders": self.orders.tolist(),
            "power_dB": {str(int(k)): [[_json_num(v) for v in row] for row in self[k]]
                         for k in self.orders},
            "mask": self.mask.astype(int).tolist(),
            "concurrence_max": (None if self.concurrence_max is None
                                else self.concurrence_max.tolist()),
            "errors": self.errors,
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), indent=1, sort_keys=True)


def _fmt(v):
    return "-inf" if np.isneginf(v) else repr(float(v))


def _json_num(v):
    return None if not np.isfinite(v) else float(v)


def sweep_map(grid, template, orders=DEFAULT_ORDERS, jobs=1, engine="harmonic",
              samples_per_period=256, weight="mean_field", power="dBm",
              carrier_ghz=units.DEFAULT_CARRIER_GHZ, gain_db=units.DEFAULT_GAIN_DB,
              cache_dir=None, progress=False, Gamma2_over_Gamma=0.5):
    """
    Evaluate a :class:`MixingMap` point by point.

    Grid points are independent: they are farmed out to ``jobs`` worker
    processes and reassembled by index, so the result does not depend on
    ``jobs`` or on the order in which axes were given. Failed points are
    masked and their messages collected in ``errors``. With ``cache_dir``
    each finished point is stored as a small JSON file and reused on rerun.

    ``power='dBm'`` reports ``hbar omega |c_k|^2`` through a chain gain;
    ``power='kappa'`` reports ``10 log10(|c_k|^2 / Gamma)``.
    """
    orders = tuple(int(k) for k in orders)
    n1, n2 = grid.shape
    tasks = [PointTask((i, j), grid.kind, a1, a2, template, orders, engine,
                       samples_per_period, weight, Gamma2_over_Gamma)
             for i, a1 in enumerate(grid.axis1) for j, a2 in enumerate(grid.axis2)]
    amps = np.full((n1, n2, len(orders)), np.nan + 0j)
    conc = np.full((n1, n2), np.nan)
    mask = np.zeros((n1, n2), dtype=bool)
    errors = []

    pending = []
    for t in tasks:
        hit = _cache_load(cache_dir, t)
        if hit is not None:
            _store(t.index, hit, amps, conc, mask, errors, grid)
        else:
            pending.append(t)

    def results():
        if jobs and jobs > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                yield from ex.map(evaluate_point, pending, chunksize=max(1, len(pending) // (4 * jobs)))
        else:
            yield from map(evaluate_point, pending)

    for done, (t, res) in enumerate(zip(pending, results()), 1):
        _cache_save(cache_dir, t, res)
        _store(t.index, res, amps, conc, mask, errors, grid)
        if progress:
            print(f"\rsweep: {done}/{len(pending)} points", end="", file=sys.stderr)
    if progress and pending:
        print(file=sys.stderr)

    flux = np.abs(amps) ** 2
    if power == "dBm":
        pw = units.flux_to_dbm(flux, carrier_ghz, gain_db)
    elif power == "kappa":
        with np.errstate(divide="ignore"):
            pw = 10.0 * np.log10(flux / template.Gamma)
    else:
        raise ParameterError("power must be 'dBm' or 'kappa'")
    errors.sort(key=lambda e: (e["axis1_dB"], e["axis2_dB"]))
    meta = {"grid_kind": grid.kind, "engine": engine, "samples_per_period": samples_per_period,
            "source_weight": weight, "carrier_GHz": carrier_ghz, "gain_dB": gain_db,
            "template": _params_json(template)}
    return MixingMap(np.array(grid.axis1), np.array(grid.axis2), orders, pw, mask=mask,
                     unit=power, axis_names=grid.names, amplitudes=amps,
                     concurrence_max=conc if grid.kind != "classical" else None,
                     errors=errors, metadata=meta)


def _store(index, res, amps, conc, mask, errors, grid):
    _, a, c, err = res
    i, j = index
    if err is None:
        amps[i, j] = a
        conc[i, j] = c
        mask[i, j] = True
    else:
        errors.append({"axis1_dB": grid.axis1[i], "axis2_dB": grid.axis2[j], "error": err})


def _cache_path(cache_dir, task):
    return os.path.join(cache_dir, f"point_{_task_key(task)}.json")


def _cache_load(cache_dir, task):
    if not cache_dir:
        return None
    path = _cache_path(cache_dir, task)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        d = json.load(fh)
    if d["error"] is not None:
        return None       # retry failures
    a = np.array(d["re"]) + 1j * np.array(d["im"])
    return task.index, a, d["concurrence"], None


def _cache_save(cache_dir, task, res):
    if not cache_dir:
        return
    os.makedirs(cache_dir, exist_ok=True)
    _, a, c, err = res
    d = {"re": None if a is None else a.real.tolist(),
         "im": None if a is None else a.imag.tolist(),
         "concurrence": c, "error": err}
    path = _cache_path(cache_dir, task)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(d, fh)
    os.replace(tmp, path)


def _params_json(p):
    out = {}
    for k, v in asdict(p).items():
        if isinstance(v, complex):
            out[k] = [v.real, v.imag]
        else:
            out[k] = v
    return out
