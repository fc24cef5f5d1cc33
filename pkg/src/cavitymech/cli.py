"""Config-driven command line front end.

Every config key carries a unit suffix (``_Hz``, ``_K``, ``_kg``, ``_m``,
``_Pa``, ``_W``, ``_s``). Frequencies are ordinary (cycles per second) in
the config and are converted to angular units here, once.

Exit codes: 0 success, 2 computed but infeasible/unstable, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import io
import json
import math
import os
import sys
import tempfile
import time
import warnings
from typing import Any

import numpy as np

from . import gaussian as gs
from . import oracle as orc
from . import optimize as opt
from . import resonator as res
from .model import (
    CONSTANTS,
    TWO_PI,
    CavityMode,
    DetectionChain,
    Drive,
    HybridSystem,
    MechanicalMode,
    SidebandMismatchWarning,
    classify_regimes,
    cooling_rate,
    detection_efficiency,
    final_occupation,
    intracavity_photons,
    mirror_coupling,
    quantum_enabled,
    thermal_force_psd,
    thermal_occupation,
    zero_point_motion,
)
from .transfer import (
    InputState,
    TransferProtocol,
    ideal_swap_time,
    simulate_transfer,
    transfer_feasibility,
)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class ConfigError(ValueError):
    pass


# --- schema -------------------------------------------------------------

_SCHEMA: dict[str, Any] = {
    "mech": {"omega_m_Hz": float, "gamma_m_Hz": float, "mass_kg": float, "T_bath_K": float},
    "cavities": [{
        "band": str, "omega_c_Hz": float, "gamma_Hz": float, "gamma_ext_Hz": float,
        "g_Hz_per_m": float, "n_thermal": float, "detuning_Hz": float,
        "input_power_W": float, "n_photons": float, "em_sign": int,
    }],
    "convention": str,
    "detection": {"n_add": float},
    "mirror": {"wavelength_m": float, "length_m": float},
    "beam": {"length_m": float, "width_m": float, "thickness_m": float,
             "youngs_modulus_Pa": float, "density_kg_per_m3": float, "stress_Pa": float,
             "Q": float, "T_bath_K": float, "stresses_Pa": list},
    "cool": {"model": str},
    "spectrum": {"f_min_Hz": float, "f_max_Hz": float, "n_points": int, "T_K": float,
                 "imprecision_floor_m2_per_Hz": float},
    "transfer": {"Gamma_EM_Hz": float, "Gamma_OM_Hz": float, "duration_s": float,
                 "input_kind": str, "input_value": float, "direction": str,
                 "engine": str, "rwa": bool, "dims": list},
    "optimize": {"target": str, "detuning_Hz": list, "n_photons": list, "margin": float,
                 "duration_mode": str, "duration_s": float, "rwa": bool},
    "sweep": {"metric": str, "axes": [{"name": str, "values": list, "start": float,
                                       "stop": float, "num": int, "log": bool}]},
}


def _unknown_key(path: str, key: str, allowed) -> ConfigError:
    hint = ""
    with_suffix = [k for k in allowed if k.startswith(key + "_")]
    if with_suffix:
        hint = f"; keys carry unit suffixes, expected {with_suffix[0]!r}"
    else:
        close = difflib.get_close_matches(key, list(allowed), n=1)
        if close:
            hint = f"; did you mean {close[0]!r}?"
    return ConfigError(f"unknown config key '{path}{key}'{hint}")


def _validate(node, schema, path: str = "") -> None:
    if isinstance(schema, dict):
        if not isinstance(node, dict):
            raise ConfigError(f"{path or 'config'} must be an object")
        for key, value in node.items():
            if key not in schema:
                raise _unknown_key(path, key, schema)
            _validate(value, schema[key], f"{path}{key}.")
    elif isinstance(schema, list):
        if not isinstance(node, list):
            raise ConfigError(f"{path.rstrip('.')} must be a list")
        for i, item in enumerate(node):
            _validate(item, schema[0], f"{path.rstrip('.')}[{i}].")
    elif schema is float:
        if isinstance(node, bool) or not isinstance(node, (int, float)):
            raise ConfigError(f"{path.rstrip('.')} must be a number")
    elif schema is int:
        if isinstance(node, bool) or not isinstance(node, int):
            raise ConfigError(f"{path.rstrip('.')} must be an integer")
    elif not isinstance(node, schema):
        raise ConfigError(f"{path.rstrip('.')} must be of type {schema.__name__}")


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    _validate(cfg, _SCHEMA)
    return cfg


def _need(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {where}.{key}")
    return section[key]


def build_mech(cfg: dict) -> MechanicalMode | None:
    m = cfg.get("mech")
    if m is None:
        return None
    return MechanicalMode(
        omega_m=TWO_PI * _need(m, "omega_m_Hz", "mech"),
        gamma_m=TWO_PI * _need(m, "gamma_m_Hz", "mech"),
        mass=_need(m, "mass_kg", "mech"),
        T_bath=_need(m, "T_bath_K", "mech"),
    )


def build_system(cfg: dict) -> HybridSystem | None:
    mech = build_mech(cfg)
    if mech is None or not cfg.get("cavities"):
        return None
    cavities, signs = [], []
    for i, c in enumerate(cfg["cavities"]):
        where = f"cavities[{i}]"
        band = c.get("band", "optical")
        gamma = TWO_PI * _need(c, "gamma_Hz", where)
        cav = CavityMode(
            omega_c=TWO_PI * _need(c, "omega_c_Hz", where),
            gamma=gamma,
            gamma_ext=TWO_PI * c["gamma_ext_Hz"] if "gamma_ext_Hz" in c else gamma,
            g=TWO_PI * _need(c, "g_Hz_per_m", where),
            band=band,
            n_thermal=c.get("n_thermal", 0.0),
        )
        drive = Drive(
            detuning=TWO_PI * c["detuning_Hz"] if "detuning_Hz" in c else mech.omega_m,
            input_power=c.get("input_power_W"),
            n_photons=c.get("n_photons"),
        )
        cavities.append((cav, drive))
        signs.append(c.get("em_sign"))
    em_signs = None if all(s is None for s in signs) else tuple(
        s if s is not None else (-1 if cav.band == "microwave" else 1)
        for s, (cav, _) in zip(signs, cavities))
    return HybridSystem(mech, tuple(cavities), em_signs=em_signs,
                        convention=cfg.get("convention", "linear"))


# --- output -------------------------------------------------------------

def _clean(value):
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def to_json(payload) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=False) + "\n"


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if rows:
        writer.writerow(list(rows[0]))
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row.values()])
    return buf.getvalue()


def _fmt_cell(v) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)) and any(isinstance(x, dict) for x in v):
            for i, x in enumerate(v):
                out.update(_flatten(x, f"{key}.{i}."))
        elif isinstance(v, (list, tuple)):
            out[key] = ";".join(_fmt_cell(x) for x in v)
        else:
            out[key] = v
    return out


def write_output(text: str, out: str | None) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    if out is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(out))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(out))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(payload: dict, fmt: str, out: str | None, rows: list[dict] | None = None) -> None:
    if fmt == "json":
        write_output(to_json(payload), out)
    else:
        write_output(to_csv(rows if rows is not None else [_flatten(payload)]), out)


# --- commands -----------------------------------------------------------

def _round1(x: float) -> float:
    if x == 0 or not math.isfinite(x):
        return x
    return float(f"{x:.1g}")


def quantities_report(cfg: dict) -> list[dict]:
    """Figures of merit as rows of (quantity, value, unit, note); missing inputs give None."""
    rows: list[dict] = []

    def add(name, value, unit, fmt=".4g", note=""):
        rows.append({"quantity": name, "value": value, "unit": unit, "fmt": fmt, "note": note})

    mech = build_mech(cfg)
    system = build_system(cfg)
    if mech is not None:
        n_bath = thermal_occupation(mech, cfg.get("convention", "linear"))
        enabled, threshold = quantum_enabled(mech)
        add("n_bath", n_bath, "", note=f"≈ {_round1(n_bath):g}, rounded")
        add("x_zp", zero_point_motion(mech), "m")
        add("Q_m", mech.Q_m, "")
        add("Q_f", mech.Q_m * mech.f_m, "Hz")
        add("quantum_threshold_kT_over_h", threshold, "Hz", note=f"≈ {_round1(threshold):g}")
        add("quantum_enabled", bool(enabled), "")
        add("S_F", thermal_force_psd(mech), "N^2/Hz")
    else:
        for name, unit in [("n_bath", ""), ("x_zp", "m"), ("Q_m", ""), ("Q_f", "Hz"),
                           ("quantum_threshold_kT_over_h", "Hz"), ("quantum_enabled", ""),
                           ("S_F", "N^2/Hz")]:
            add(name, None, unit)

    if system is not None:
        regimes = classify_regimes(system)
        for cav, drive in system.cavities:
            b = cav.band
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SidebandMismatchWarning)
                rate = cooling_rate(system.mech, cav, drive)
            add(f"{b}.n_cav", intracavity_photons(cav, drive), "photons")
            add(f"{b}.Gamma", system.couplings()[system.mode_labels.index(b) - 1] / TWO_PI, "Hz")
            add(f"{b}.Gamma_cool", rate / TWO_PI, "Hz")
            add(f"{b}.n_final_ratio", final_occupation(system.mech, rate, "ratio",
                                                       system.convention), "")
            add(f"{b}.n_final_rate_balance", final_occupation(system.mech, rate, "rate_balance",
                                                              system.convention), "")
            for flag, comp in regimes.per_cavity[b].items():
                add(f"{b}.{flag}", bool(comp.passed), "")
    else:
        for name, unit in [("n_cav", "photons"), ("Gamma", "Hz"), ("Gamma_cool", "Hz"),
                           ("n_final_ratio", ""), ("n_final_rate_balance", "")]:
            add(f"cavity.{name}", None, unit)

    mirror = cfg.get("mirror")
    if mirror and "wavelength_m" in mirror and "length_m" in mirror:
        g = mirror_coupling(mirror["wavelength_m"], mirror["length_m"])
        add("g_mirror", g / TWO_PI * 1e-15, "kHz/pm", note=f"≈ {_round1(g / TWO_PI * 1e-15):g}")
    else:
        add("g_mirror", None, "kHz/pm")

    det = cfg.get("detection")
    if det and "n_add" in det:
        eta = detection_efficiency(DetectionChain(det["n_add"]))
        add("eta", eta, "", fmt=".3g", note=f"≈ {_round1(100 * eta):g} %")
    else:
        add("eta", None, "")
    return rows


def _format_value(row: dict) -> str:
    v = row["value"]
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return "yes" if v else "no"
    return format(v, row["fmt"])


def cmd_quantities(cfg: dict, args) -> int:
    rows = quantities_report(cfg)
    if args.format == "json":
        payload = {r["quantity"]: {"value": r["value"], "unit": r["unit"]} for r in rows}
        write_output(to_json(payload), args.out)
    else:
        table = [{"quantity": r["quantity"], "value": _format_value(r), "unit": r["unit"]}
                 for r in rows]
        write_output(to_csv(table), args.out)
    return EXIT_OK


def cmd_quantities_text(cfg: dict, args) -> int:
    rows = quantities_report(cfg)
    lines = []
    for r in rows:
        unit = f" {r['unit']}" if r["unit"] and r["value"] is not None else ""
        note = f"  ({r['note']})" if r["note"] and r["value"] is not None else ""
        lines.append(f"{r['quantity']:<34} {_format_value(r)}{unit}{note}")
    write_output("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _require_system(cfg: dict) -> HybridSystem:
    system = build_system(cfg)
    if system is None:
        raise ConfigError("this command needs 'mech' and at least one entry in 'cavities'")
    return system


def cmd_cool(cfg: dict, args) -> int:
    system = _require_system(cfg)
    model_name = cfg.get("cool", {}).get("model", "rate_balance")
    cav, drive = system.cavities[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SidebandMismatchWarning)
        rate = cooling_rate(system.mech, cav, drive)
    payload = {
        "n_bath": system.n_bath,
        "Gamma_Hz": system.couplings()[0] / TWO_PI,
        "Gamma_cool_Hz": rate / TWO_PI,
        "n_final_closed_form": final_occupation(system.mech, rate, model_name, system.convention),
        "closed_form_model": model_name,
    }
    model = gs.linearize(system, rwa=False)
    stable = model.is_hurwitz()
    payload["stable"] = bool(stable)
    payload["n_final_gaussian"] = gs.phonon_number(gs.steady_state(model), 0) if stable else None
    payload["regimes"] = classify_regimes(system).as_dict()
    _emit(payload, args.format, args.out)
    return EXIT_OK if stable else EXIT_INFEASIBLE


def cmd_spectrum(cfg: dict, args) -> int:
    mech = build_mech(cfg)
    if mech is None:
        raise ConfigError("spectrum needs a 'mech' section")
    sp = cfg.get("spectrum", {})
    f0 = mech.f_m
    lo = sp.get("f_min_Hz", 0.9 * f0)
    hi = sp.get("f_max_Hz", 1.1 * f0)
    n = sp.get("n_points", 1001)
    series = gs.displacement_spectrum(mech, sp.get("T_K"), np.linspace(lo, hi, n),
                                      sp.get("imprecision_floor_m2_per_Hz"))
    if args.format == "json":
        write_output(to_json({"freq_Hz": series.freq_Hz.tolist(),
                              "S_x_m2_per_Hz": series.S_x.tolist()}), args.out)
    else:
        write_output(series.to_csv(), args.out)
    return EXIT_OK


def cmd_transfer(cfg: dict, args) -> int:
    system = _require_system(cfg)
    tc = cfg.get("transfer", {})
    G = system.couplings()
    bands = [c.band for c, _ in system.cavities]
    if sorted(bands) != ["microwave", "optical"]:
        raise ConfigError("transfer needs one microwave and one optical cavity")
    G_em = TWO_PI * tc["Gamma_EM_Hz"] if "Gamma_EM_Hz" in tc else G[bands.index("microwave")]
    G_om = TWO_PI * tc["Gamma_OM_Hz"] if "Gamma_OM_Hz" in tc else G[bands.index("optical")]
    duration = tc.get("duration_s") or ideal_swap_time(G_em, G_om)
    protocol = TransferProtocol(
        G_em, G_om, duration,
        InputState(tc.get("input_kind", "coherent"), tc.get("input_value", 1.0)),
        tc.get("direction", "EtoO"))
    dims = tuple(tc["dims"]) if "dims" in tc else None
    feas = transfer_feasibility(system, [G_em if b == "microwave" else G_om for b in bands])
    try:
        result = simulate_transfer(system, protocol, tc.get("engine", "gaussian"),
                                   rwa=tc.get("rwa", True), dims=dims)
    except gs.InstabilityError as exc:
        _emit({"stable": False, "error": str(exc), "feasibility": feas.as_dict()},
              args.format, args.out)
        return EXIT_INFEASIBLE
    payload = result.as_dict()
    payload["feasibility"] = feas.as_dict()
    _emit(payload, args.format, args.out)
    return EXIT_OK if feas.passed else EXIT_INFEASIBLE


def _beam(cfg: dict) -> tuple[res.BeamSpec, dict]:
    b = cfg.get("beam")
    if b is None:
        raise ConfigError("design needs a 'beam' section")
    spec = res.BeamSpec(
        length=_need(b, "length_m", "beam"), width=_need(b, "width_m", "beam"),
        thickness=_need(b, "thickness_m", "beam"),
        youngs_modulus=_need(b, "youngs_modulus_Pa", "beam"),
        density=_need(b, "density_kg_per_m3", "beam"), stress=b.get("stress_Pa", 0.0))
    return spec, b


def cmd_design(cfg: dict, args) -> int:
    spec, b = _beam(cfg)
    if args.format == "csv" and "stresses_Pa" in b:
        write_output(res.stress_sweep_csv(spec, b["stresses_Pa"]), args.out)
        return EXIT_OK
    report = res.design_report(spec, b.get("Q", 1e6), b.get("T_bath_K", 300.0))
    _emit(report, args.format, args.out)
    return EXIT_OK


def _pairs(value, what: str) -> list[tuple[float, float]]:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (2,):
        return [(float(arr[0]), float(arr[1]))]
    if arr.ndim == 2 and arr.shape[1] == 2:
        return [(float(a), float(c)) for a, c in arr]
    raise ConfigError(f"optimize.{what} must be [lo, hi] or a list of [lo, hi]")


def cmd_optimize(cfg: dict, args) -> int:
    system = _require_system(cfg)
    oc = cfg.get("optimize", {})
    target = oc.get("target", "cooling")
    margin = oc.get("margin", 0.45)
    if target == "cooling":
        det = _pairs(_need(oc, "detuning_Hz", "optimize"), "detuning_Hz")[0]
        nph = _pairs(_need(oc, "n_photons", "optimize"), "n_photons")[0]
        point = opt.optimize_cooling(
            system, opt.CoolingBounds((TWO_PI * det[0], TWO_PI * det[1]), nph),
            margin=margin, threads=args.threads)
    elif target == "transfer":
        nph = _pairs(_need(oc, "n_photons", "optimize"), "n_photons")
        if len(nph) == 1:
            nph = nph * 2
        point = opt.optimize_transfer(
            system, opt.TransferBounds(tuple(nph), duration=oc.get("duration_s")),
            duration_mode=oc.get("duration_mode", "fixed"), rwa=oc.get("rwa", False),
            margin=margin, threads=args.threads)
    else:
        raise ConfigError(f"optimize.target must be 'cooling' or 'transfer', got {target!r}")
    _emit(point.as_dict(), args.format, args.out)
    return EXIT_OK if point.feasible else EXIT_INFEASIBLE


def cmd_sweep(cfg: dict, args) -> int:
    system = _require_system(cfg)
    sc = cfg.get("sweep")
    if sc is None:
        raise ConfigError("sweep needs a 'sweep' section")
    axes = []
    for i, a in enumerate(_need(sc, "axes", "sweep")):
        name = _need(a, "name", f"sweep.axes[{i}]")
        if "values" in a:
            values = a["values"]
        else:
            start, stop = _need(a, "start", f"sweep.axes[{i}]"), _need(a, "stop", f"sweep.axes[{i}]")
            num = a.get("num", 11)
            values = np.geomspace(start, stop, num) if a.get("log") else np.linspace(start, stop, num)
        axes.append(opt.Axis(name, values))
    table = opt.sweep(system, axes, sc.get("metric", "n_final"), threads=args.threads)
    if args.format == "json":
        write_output(to_json({"columns": list(table.columns),
                              "rows": [list(r) for r in table.rows]}), args.out)
    else:
        write_output(table.to_csv(), args.out)
    return EXIT_OK


# --- oracle cross-check -------------------------------------------------

def _check_cooling() -> tuple[str, float, float, float]:
    wm = TWO_PI * 10e6
    mech = MechanicalMode(wm, TWO_PI * 1e4, 1e-15, CONSTANTS.hbar * wm / CONSTANTS.k_B)
    xzp = zero_point_motion(mech)
    G = TWO_PI * 1e5
    cav = CavityMode(TWO_PI * 5e9, TWO_PI * 1e6, TWO_PI * 0.5e6, 1.0, band="microwave")
    system = HybridSystem(mech, ((cav, Drive(wm, n_photons=(G / xzp) ** 2)),))
    n_gauss = gs.phonon_number(gs.steady_state(gs.linearize(system, rwa=False)), 0)
    spec = orc.FockSpec((20, 6), ("mech", "microwave"))
    H = orc.build_hamiltonian(system, spec, "full_parametric")
    rho = orc.lindblad_steady_state(H, orc.collapse_operators(system, spec), spec)
    n_orc = float(orc.expectation(rho, orc.number("mech")).real)
    return ("cooling steady state <d+d> (20,6)", n_gauss, n_orc, 0.02)


def _check_single_excitation() -> tuple[str, float, float, float]:
    wm = TWO_PI * 10e6
    mech = MechanicalMode(wm, TWO_PI * 1e-6, 1e-15, 0.0)
    E = CavityMode(TWO_PI * 5e9, TWO_PI * 1e-6, TWO_PI * 0.5e-6, 1.0, band="microwave")
    O = CavityMode(TWO_PI * 2e14, TWO_PI * 1e-6, TWO_PI * 0.5e-6, 1.0, band="optical")
    system = HybridSystem(mech, ((E, Drive(wm, n_photons=1.0)), (O, Drive(wm, n_photons=1.0))))
    G = TWO_PI * 1e5
    r = simulate_transfer(system, TransferProtocol(G, G, ideal_swap_time(G, G), InputState("fock", 1)),
                          "oracle", dims=(2, 2, 2), overflow_tol=None)
    return ("single-excitation end population (2,2,2)", 1.0, r.efficiency, 1e-6)


def _check_transfer() -> tuple[str, float, float, float]:
    wm = TWO_PI * 10e6
    n_bath = 1000.0
    mech = MechanicalMode(wm, TWO_PI * 1.0, 1e-15, n_bath * CONSTANTS.hbar * wm / CONSTANTS.k_B)
    E = CavityMode(TWO_PI * 5e9, TWO_PI * 1e-6, TWO_PI * 0.5e-6, 1.0, band="microwave")
    O = CavityMode(TWO_PI * 2e14, TWO_PI * 1e-6, TWO_PI * 0.5e-6, 1.0, band="optical")
    system = HybridSystem(mech, ((E, Drive(wm, n_photons=1.0)), (O, Drive(wm, n_photons=1.0))))
    G = TWO_PI * 1e5
    p = TransferProtocol(G, G, ideal_swap_time(G, G))
    fg = simulate_transfer(system, p, "gaussian").fidelity
    fo = simulate_transfer(system, p, "oracle").fidelity
    return ("transfer fidelity, gamma_m n_bath = 2 pi kHz", fg, fo, 0.02)


ORACLE_CHECKS = (_check_cooling, _check_single_excitation, _check_transfer)


def cmd_oracle_check(cfg: dict, args) -> int:
    rows = []
    for check in ORACLE_CHECKS:
        t0 = time.perf_counter()
        name, reference, value, tol = check()
        err = abs(value - reference) / abs(reference)
        ok = err <= tol
        rows.append({"check": name, "reference": reference, "value": value, "error": err,
                     "tolerance": tol, "passed": ok, "seconds": time.perf_counter() - t0})
    for r in rows:
        sys.stderr.write(f"[{'PASS' if r['passed'] else 'FAIL'}] {r['check']}: "
                         f"{r['value']:.10g} vs {r['reference']:.10g} "
                         f"(err {r['error']:.2e}, tol {r['tolerance']:g})\n")
    body = [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
    if args.format == "json":
        write_output(to_json({"checks": body}), args.out)
    else:
        write_output(to_csv(body), args.out)
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_ERROR


COMMANDS = {
    "quantities": cmd_quantities,
    "cool": cmd_cool,
    "spectrum": cmd_spectrum,
    "transfer": cmd_transfer,
    "design": cmd_design,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavitymech", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config with unit-suffixed keys")
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="default json; quantities prints a text table unless set")
        p.add_argument("--seed", type=int, default=0,
                       help="accepted for interface stability; every algorithm is deterministic")
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    text_report = args.command == "quantities" and args.format is None
    args.format = args.format or "json"
    try:
        if text_report:
            return cmd_quantities_text(load_config(args.config), args)
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
