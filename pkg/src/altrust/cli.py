"""Command-line interface.

Every subcommand resolves its options from built-in defaults, then the
matching section of an optional INI file (``--config``), then explicit
flags. With ``--out DIR`` the outputs are written there together with a
``run.json`` file holding the resolved options; ``altrust replay run.json``
repeats the run from that file.

Failures print one JSON object on stderr and exit with 2 (configuration),
3 (domain) or 4 (numerical).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AltrustError, ConfigError

__all__ = ["main", "build_parser", "run_command", "COMMANDS"]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    return None if text in (None, "", "none") else int(text)


@dataclass(frozen=True)
class Opt:
    name: str
    type: object
    default: object
    help: str = ""
    required: bool = False


def _params_opts(a=0.05, g=0.06, r=0.04):
    return [Opt("a", float, a, "a-tilde, depreciation-like drain on assets"),
            Opt("g", float, g, "g-tilde, EBITA over assets"),
            Opt("r", float, r, "r-tilde, interest rate")]


def _integrator_opts(max_tau=1e4):
    return [Opt("method", str, "adaptive", "adaptive or euler"),
            Opt("step", float, 1e-3, "initial (adaptive) or fixed (euler) step"),
            Opt("rtol", float, 1e-8, "relative tolerance"),
            Opt("atol", float, 1e-10, "absolute tolerance"),
            Opt("max_tau", float, max_tau, "integration horizon")]


COMMANDS: dict[str, list[Opt]] = {
    "simulate": _params_opts() + [
        Opt("k", float, 0.05, "trust adjustment rate"),
        Opt("A", float, 1.0, "initial assets"),
        Opt("L", float, 0.1, "initial leverage"),
        Opt("T", float, 0.5, "initial trust"),
    ] + _integrator_opts(),
    "phase": [Opt("preset", str, "regular", "regular, crisis, stagnation or custom")]
    + _params_opts(None, None, None) + [
        Opt("n_L", int, 101, "grid nodes along L"),
        Opt("n_T", int, 101, "grid nodes along T"),
        Opt("margin", float, 1e-3, "masked band next to L = 1 and T = 1"),
    ] + _integrator_opts(),
    "stability": _params_opts(0.05, -0.01, 0.04) + [
        Opt("eps0", float, 1e-3, "perturbation used to probe (1, L0)"),
        Opt("perturb", _bool, True, "integrate the (1, L0) perturbation"),
    ],
    "closed-form": _params_opts(0.05, -0.01, 0.04) + [
        Opt("T0", float, 0.5, "trust at the seed"),
        Opt("L_init", float, 0.1, "leverage at the seed"),
        Opt("form", str, "primary", "primary or by_parts"),
        Opt("n_points", int, 200, "samples along the curve"),
        Opt("check", _bool, True, "compare with the integrated path"),
    ],
    "scenario": [
        Opt("a", float, 0.05, "a-tilde, held fixed across segments"),
        Opt("schedule", str, "0:0.06:0.04;5:-0.08:0.04;12:0.04:0.01",
            "segments tau_start:g:r separated by ';'"),
        Opt("L", float, 0.0, "initial leverage"),
        Opt("T", float, 0.26, "initial trust"),
        Opt("sweep", _bool, False, "run an intervention-time sweep instead"),
        Opt("interventions", str, "7,12,20", "intervention times for the sweep"),
        Opt("crisis_start", float, 5.0, "crisis start for the sweep"),
        Opt("horizon", float, 100.0, "tau at which ln A is compared"),
    ] + _integrator_opts(max_tau=1e3),
    "calibrate": [
        Opt("input", str, None, "CSV with date,roe,rate", required=True),
        Opt("seed", int, None, "random seed", required=True),
        Opt("n_iter", int, 200, "total iterations"),
        Opt("burn_in", int, 100, "discarded leading iterations"),
    ],
    "synth": [
        Opt("seed", int, None, "random seed", required=True),
        Opt("n", int, 168, "number of monthly observations"),
        Opt("c1", float, 0.10, "EBITA level in state s1"),
        Opt("c2", float, -0.16, "EBITA level in state s2"),
        Opt("sigma", float, 0.05, "observation noise standard deviation"),
        Opt("lambda_rate", float, 0.5, "rate s1 -> s2"),
        Opt("mu_rate", float, 0.5, "rate s2 -> s1"),
        Opt("L1", float, 0.25, "initial leverage"),
        Opt("T1", float, 0.35, "initial trust"),
        Opt("rate", float, 0.03, "constant interest rate series"),
        Opt("initial_state", _opt_int, None, "1 or 2; stationary draw when omitted"),
        Opt("start", str, "2000-01", "first month, YYYY-MM"),
    ],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="altrust", description="Asset, leverage and trust dynamics.")
    parser.add_argument("--version", action="version", version=f"altrust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, opts in COMMANDS.items():
        sp = sub.add_parser(name, help=f"{name} command")
        sp.add_argument("--config", help="INI file; the [%s] section supplies defaults" % name)
        sp.add_argument("--out", help="output directory")
        for o in opts:
            flag = "--" + o.name.replace("_", "-")
            dflt = "required" if o.required else o.default
            if o.type is _bool:
                sp.add_argument(flag, dest=o.name, action=argparse.BooleanOptionalAction,
                                default=None, help=f"{o.help} (default {dflt})")
            else:
                sp.add_argument(flag, dest=o.name, type=str, default=None,
                                help=f"{o.help} (default {dflt})")
    rp = sub.add_parser("replay", help="repeat a run from its run.json")
    rp.add_argument("metadata")
    rp.add_argument("--out", help="output directory (default: next to run.json)")
    return parser


def _convert(o: Opt, value, source: str):
    if value is None:
        return None
    try:
        return o.type(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{source}: invalid value {value!r} for {o.name}") from None


def resolve_options(command: str, ns: argparse.Namespace) -> dict:
    opts = COMMANDS[command]
    resolved = {o.name: o.default for o in opts}
    if ns.config:
        from .io import load_config
        cp = load_config(ns.config)
        if cp.has_section(command):
            known = {o.name: o for o in opts}
            for key, value in cp.items(command):
                key = key.replace("-", "_")
                if key not in known:
                    raise ConfigError(f"{ns.config}: unknown key {key!r} in [{command}]")
                resolved[key] = _convert(known[key], value, ns.config)
    for o in opts:
        v = getattr(ns, o.name)
        if v is not None:
            resolved[o.name] = _convert(o, v, "command line")
    for o in opts:
        if o.required and resolved[o.name] is None:
            raise ConfigError(f"{command}: --{o.name.replace('_', '-')} is required")
    return resolved


# -- commands ---------------------------------------------------------------

def _params(o, k=None):
    from .core import Params
    if any(o[x] is None for x in ("a", "g", "r")):
        raise ConfigError("a, g and r must all be given")
    return Params(o["a"], o["g"], o["r"], **({} if k is None else {"k": k}))


def _icfg(o):
    from .trajectory import IntegratorConfig
    return IntegratorConfig(method=o["method"], step=o["step"], rel_tol=o["rtol"],
                            abs_tol=o["atol"], max_tau=o["max_tau"])


def _cmd_simulate(o, out):
    from .core import EconState
    from .trajectory import integrate
    rec = integrate(EconState(o["A"], o["L"], o["T"]), _params(o, o["k"]), _icfg(o))
    if out:
        rec.write_csv(out / "trajectory.csv", sidecar={"options": o})
    f = rec.final_state
    return {"terminal": rec.terminal.to_dict(), "n_samples": len(rec),
            "final": {"A": f.A, "L": f.L, "T": f.T}}


def _cmd_phase(o, out):
    from .phase_portrait import PRESETS, GridSpec, basin_map, roa_field
    if o["preset"] == "custom" or o["preset"] is None:
        p = _params(o)
    elif o["preset"] in PRESETS:
        base = PRESETS[o["preset"]]
        p = base.with_regime(g_tilde=o["g"] if o["g"] is not None else base.g_tilde,
                             r_tilde=o["r"] if o["r"] is not None else base.r_tilde)
        if o["a"] is not None:
            from .core import Params
            p = Params(o["a"], p.g_tilde, p.r_tilde, p.k)
    else:
        raise ConfigError(f"unknown preset {o['preset']!r}")
    grid = GridSpec(o["n_L"], o["n_T"], o["margin"])
    field = roa_field(p, grid)
    basins = basin_map(p, grid, _icfg(o))
    if out:
        field.write_csv(out / "roa_field.csv")
        basins.write_csv(out / "basins.csv")
    return {"params": {"a": p.a_tilde, "g": p.g_tilde, "r": p.r_tilde},
            "counts": {where: {k.value: v for k, v in basins.counts(where).items()}
                       for where in ("above", "below", "axis")},
            "n_masked": int(basins.mask.sum())}


def _cmd_stability(o, out):
    from .stability import fixed_points, report_json, verify_point_one_L0
    p = _params(o)
    decay = verify_point_one_L0(p, o["eps0"]) if o["perturb"] else None
    text = report_json(fixed_points(p), decay, p)
    if out:
        (out / "stability.json").write_text(text + "\n")
    return json.loads(text)


def _cmd_closed_form(o, out):
    from .closed_form import T_MIN, ode_crosscheck, sample_curve, through, write_curve_csv
    p = _params(o)
    traj = through(o["T0"], o["L_init"], p, o["form"])
    end = 1.0 - 1e-3 if o["T0"] > o["L_init"] else T_MIN
    grid = np.linspace(o["T0"], end, o["n_points"])
    L = sample_curve(traj, grid)
    if out:
        write_curve_csv(out / "curve.csv", grid, L)
    res = {"K": traj.K, "form": traj.form, "T_range": [float(grid.min()), float(grid.max())]}
    if o["check"]:
        cc = ode_crosscheck(o["T0"], o["L_init"], p, o["form"])
        res["crosscheck"] = {"max_abs_diff": cc.max_abs_diff, "T_range": list(cc.T_range),
                             "n_compared": cc.n_compared}
    return res


def _parse_schedule(text: str):
    from .scenario import RegimeSegment
    segs = []
    for part in filter(None, (s.strip() for s in text.split(";"))):
        try:
            t, g, r = (float(x) for x in part.split(":"))
        except ValueError:
            raise ConfigError(f"malformed schedule segment {part!r}; expected tau:g:r") from None
        segs.append(RegimeSegment(t, g, r))
    return segs


def _cmd_scenario(o, out):
    from .core import EconState
    from .scenario import RegimeSegment, intervention_sweep, run_schedule
    s0 = EconState(1.0, o["L"], o["T"])
    cfg = _icfg(o)
    sched = _parse_schedule(o["schedule"])
    if not o["sweep"]:
        res = run_schedule(s0, o["a"], sched, cfg)
        if out:
            res.path.write_csv(out / "scenario.csv", sidecar={"metadata": res.metadata})
        return {"terminal": res.path.terminal.to_dict(), "stationary_rA": res.stationary_roa,
                "max_rA": float(res.path.rA.max())}
    if len(sched) < 3:
        raise ConfigError("a sweep needs pre-crisis, crisis and intervention segments in the schedule")
    try:
        times = [float(x) for x in o["interventions"].split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"malformed intervention list {o['interventions']!r}") from None
    sw = intervention_sweep(s0, o["a"], RegimeSegment(0.0, sched[0].g_tilde, sched[0].r_tilde),
                            (sched[1].g_tilde, sched[1].r_tilde), (sched[2].g_tilde, sched[2].r_tilde),
                            o["crisis_start"], times, cfg, o["horizon"])
    if out:
        sw.write_summary_csv(out / "sweep_summary.csv")
        for t_i, res in zip(sw.intervention_times, sw.results):
            res.path.write_csv(out / f"scenario_tau{t_i:g}.csv", sidecar={"metadata": res.metadata})
    return {"rows": [{k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                      for k, v in row.items()} for row in sw.rows],
            "metadata": sw.metadata}


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _cmd_calibrate(o, out):
    from .calibration import ChainConfig, gibbs_run, posterior_summary
    from .io import load_timeseries, write_draws_csv, write_summary_csv
    obs = load_timeseries(o["input"])
    draws = gibbs_run(obs, ChainConfig(n_iter=o["n_iter"], burn_in=o["burn_in"]), seed=o["seed"])
    summ = posterior_summary(draws)
    if out:
        write_draws_csv(out / "draws.csv", draws)
        write_summary_csv(out / "summary_params.csv", out / "summary_series.csv", summ, obs.dates)
    return {"n_obs": len(obs), "n_draws": len(draws),
            "medians": {k: v["median"] for k, v in summ.params.items()},
            "acceptance": {k: (None if math.isnan(v) else v) for k, v in draws.acceptance.items()}}


def _cmd_synth(o, out):
    from .calibration import MsmParams, generate_synthetic
    from .io import encode_states, write_timeseries
    p = MsmParams(o["c1"], o["c2"], o["sigma"] ** 2, o["lambda_rate"], o["mu_rate"], o["L1"], o["T1"])
    init = o["initial_state"]
    if init is not None and init not in (1, 2):
        raise ConfigError("initial_state must be 1 or 2")
    obs, path = generate_synthetic(p, o["n"], o["seed"], np.full(o["n"], o["rate"]),
                                   None if init is None else init - 1, start=o["start"])
    if out:
        write_timeseries(out / "series.csv", obs)
        with open(out / "truth.csv", "w") as fh:
            fh.write("t,date,state,L,T\n")
            for t in range(len(obs)):
                fh.write(f"{t + 1},{obs.dates[t]},{path.s[t] + 1},{path.L[t]:.17g},{path.T[t]:.17g}\n")
    return {"n": len(obs), "states": encode_states(path.s), "fraction_s2": float(path.s.mean())}


_RUNNERS = {
    "simulate": _cmd_simulate,
    "phase": _cmd_phase,
    "stability": _cmd_stability,
    "closed-form": _cmd_closed_form,
    "scenario": _cmd_scenario,
    "calibrate": _cmd_calibrate,
    "synth": _cmd_synth,
}


def run_command(command: str, options: dict, out: Path | None) -> dict:
    """Run one resolved command; writes ``run.json`` when ``out`` is set."""
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if command == "calibrate":
        options = dict(options, input=str(Path(options["input"]).resolve()))
    result = _RUNNERS[command](options, out)
    if out is not None:
        from .io import write_metadata
        meta = {"command": command, "options": options, "version": __version__}
        if command == "calibrate":
            meta["input_sha256"] = _sha256(options["input"])
        write_metadata(out / "run.json", meta)
    return result


def _replay(ns) -> dict:
    from .io import read_metadata
    meta = read_metadata(ns.metadata)
    command = meta.get("command")
    if command not in _RUNNERS:
        raise ConfigError(f"{ns.metadata}: unknown command {command!r}")
    known = {o.name: o for o in COMMANDS[command]}
    options = meta.get("options", {})
    if set(options) != set(known):
        raise ConfigError(f"{ns.metadata}: options do not match the {command} command")
    options = {k: _convert(known[k], v, ns.metadata) for k, v in options.items()}
    if command == "calibrate" and meta.get("input_sha256") != _sha256(options["input"]):
        raise ConfigError(f"input {options['input']} changed since the recorded run")
    out = Path(ns.out) if ns.out else Path(ns.metadata).resolve().parent
    return run_command(command, options, out)


def _provenance(exc: BaseException) -> str:
    pkg = Path(__file__).resolve().parent
    module = "altrust.cli"
    for frame in traceback.extract_tb(exc.__traceback__):
        f = Path(frame.filename).resolve()
        if f.parent == pkg:
            module = f"altrust.{f.stem}"
    return module


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        if ns.command == "replay":
            result = _replay(ns)
        else:
            options = resolve_options(ns.command, ns)
            result = run_command(ns.command, options, Path(ns.out) if ns.out else None)
    except AltrustError as exc:
        err = {"error": type(exc).__name__, "exit_code": exc.exit_code,
               "module": _provenance(exc), "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    print(json.dumps(result, indent=2, default=_jsonable))
    return 0


if __name__ == "__main__":
    sys.exit(main())
