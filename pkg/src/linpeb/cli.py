"""Command-line entry point: ``linpeb {peb,maxg,mc,uwb-compare,validate}``."""

from __future__ import annotations

import argparse
import copy
import json
import math
import secrets
import sys
import time
from dataclasses import replace

import numpy as np

from .config import ConfigError, Variant, load_config, load_preset, preset_names, resolve, validate
from .experiments import (
    STAT_COORDINATE,
    STAT_TOTAL,
    UNIFORM_RANDOM,
    VERTICAL,
    ThresholdUnreachable,
    center_statistics,
    max_g_search,
    mmwave_x_peb,
    monte_carlo_peb,
    one_hop_block,
    two_hop_ratio,
    uwb_toa_peb,
)
from .fim import assemble_fim
from .oracle import QuadratureError
from .report import PEB_COLUMNS, OutputWriter, manifest, peb_rows
from .solver import (
    ClosedFormParams,
    SingularFimError,
    center_index,
    closed_form_1hop_center,
    closed_form_2hop_center,
    peb_all,
)
from .validation import run_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VALIDATION = 4


def _add_common(p: argparse.ArgumentParser, config_required: bool = True):
    src = p.add_mutually_exclusive_group(required=config_required)
    src.add_argument("--config", help="JSON config file (a previous run manifest is also accepted)")
    src.add_argument("--preset", choices=preset_names(), help="bundled configuration")
    p.add_argument("--seed", type=int, help="master seed for all randomness (default: config value or fresh)")
    p.add_argument("--out", help="output directory (default: config outputs.dir or the current directory)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linpeb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("peb", help="per-node bounds for every configured curve")
    _add_common(p)

    p = sub.add_parser("maxg", help="largest even G meeting an accuracy target")
    _add_common(p)
    p.add_argument("--threshold", type=float, help="target bound in meters (default 1.0)")
    p.add_argument("--statistic", choices=[STAT_COORDINATE, STAT_TOTAL], help="acceptance statistic")

    p = sub.add_parser("mc", help="Monte Carlo averaged bounds with per-node spread")
    _add_common(p)
    p.add_argument("--trials", type=int, help="number of trials (overrides the config)")

    p = sub.add_parser("uwb-compare", help="x-coordinate bounds against a TOA ranging baseline")
    _add_common(p, config_required=False)

    p = sub.add_parser("validate", help="cross-check closed forms, solver and waveform oracle")
    _add_common(p, config_required=False)
    p.add_argument("--corrupt-yy", type=float, metavar="FACTOR",
                   help="scale the closed-form yy entry (negative control; the suite must then fail)")
    return parser


# ---------------------------------------------------------------------------
# commands; each returns (exit code, solver path, summary)


def _prefix(raw: dict, command: str) -> str:
    return raw.get("outputs", {}).get("prefix") or raw.get("name") or command.replace("-", "_")


def _stem(raw: dict, prefix: str, v: Variant) -> str:
    return f"{prefix}_{v.label}" if raw.get("variants") else prefix


def _single_run(v: Variant, seed: int, force_mc: bool = False, n_trials: int | None = None):
    sc = v.scenario()
    if v.randomised or force_mc:
        res = monte_carlo_peb(sc, v.monte_carlo(seed, n_trials))
        return sc, res.mean, "banded-monte-carlo", res
    return sc, peb_all(assemble_fim(sc)), "banded", None


def cmd_peb(raw, args, seed, writer):
    prefix = _prefix(raw, "peb")
    if "sweep" in raw:
        return cmd_sweep(raw, seed, writer, prefix)
    summary, paths = {}, set()
    for v in resolve(raw):
        sc, rep, path, _ = _single_run(v, seed)
        paths.add(path)
        writer.write_csv(f"{_stem(raw, prefix, v)}.csv", PEB_COLUMNS, peb_rows(sc, rep))
        summary[v.label] = {"G": sc.G, "W": sc.W, "max_peb_total_m": float(rep.total.max()),
                            "center_peb_total_m": float(rep.total[rep.center()])}
    return EXIT_OK, "+".join(sorted(paths)), summary


def cmd_sweep(raw, seed, writer, prefix):
    sweep = raw["sweep"]
    kind = sweep.get("closed_form")
    rows, summary = [], {}
    for v in resolve(raw):
        line = v.line()
        J_A = d = None
        if kind is not None:
            if v.orientation_mode != VERTICAL or v.path_loss.two_ray or line.W != 2:
                raise ConfigError("closed-form sweeps need a vertical, deterministic two-anchor line")
            J_A = one_hop_block(replace(line, r_max=line.delta))
            d = two_hop_ratio(line) if kind == "two_hop" else 0.0
        worst = 0.0
        for G in sweep["G"]:
            sc = line.scenario(G)
            stats = center_statistics(sc, v.monte_carlo(seed)) if v.randomised else None
            if stats is None:
                rep = peb_all(assemble_fim(sc))
                c = rep.center()
                stats = {"total": rep.total[c], "x": rep.x[c], "y": rep.y[c], "z": rep.z[c]}
            approx = ""
            if kind == "one_hop":
                approx = closed_form_1hop_center(ClosedFormParams(J_A, d, G))[1]
            elif kind == "two_hop":
                approx = closed_form_2hop_center(ClosedFormParams(J_A, d, G))[1]
            rel = "" if approx == "" else approx / stats["total"] - 1.0
            if rel != "":
                worst = max(worst, abs(rel))
            rows.append((v.label, G, stats["total"], stats["x"], stats["y"], stats["z"], approx, rel))
        summary[v.label] = {"max_abs_rel_diff": worst} if kind else {}
    writer.write_csv(f"{prefix}_sweep.csv",
                     ("variant", "G", "peb_center_total_m", "peb_center_x_m", "peb_center_y_m", "peb_center_z_m",
                      "closed_form_total_m", "rel_diff"), rows)
    return EXIT_OK, "banded" + ("+closed-form" if kind else ""), summary


def cmd_mc(raw, args, seed, writer):
    prefix = _prefix(raw, "mc")
    summary = {}
    for v in resolve(raw):
        sc, rep, _, res = _single_run(v, seed, force_mc=True, n_trials=args.trials)
        writer.write_csv(f"{_stem(raw, prefix, v)}.csv", PEB_COLUMNS, peb_rows(sc, rep))
        spread = []
        for node in sc.by_slot():
            g = node.index - 1
            mean, std = (0.0, 0.0) if node.is_anchor else (rep.total[g], res.std_total[g])
            spread.append((node.index, float(node.position[0]), node.role, mean, std))
        writer.write_csv(f"{_stem(raw, prefix, v)}_spread.csv",
                         ("node_index", "x_m", "role", "peb_total_mean_m", "peb_total_std_m"), spread)
        summary[v.label] = {"n_trials": res.n_trials, "center_peb_total_m": float(rep.total[rep.center()]),
                            "center_peb_total_std_m": float(res.std_total[rep.center()])}
    return EXIT_OK, "banded-monte-carlo", summary


MAXG_COLUMNS = ("variant", "orientation", "W", "N", "hops", "r_max_m", "statistic", "g_max", "peb_at_g_m",
                "peb_at_g_plus_2_m", "g_max_coordinate", "g_max_total", "method", "closed_form_cross_check", "note")


def cmd_maxg(raw, args, seed, writer):
    prefix = _prefix(raw, "maxg")
    opts = raw.get("maxg", {})
    threshold = args.threshold if args.threshold is not None else opts.get("threshold_m", 1.0)
    if not threshold > 0.0:
        raise ConfigError("threshold must be positive")
    primary = args.statistic or opts.get("statistic", STAT_COORDINATE)
    both = opts.get("report_both", True)
    grid = opts.get("grid", {})
    rows, summary, paths = [], {}, set()
    single_cell = not grid
    for v in resolve(raw):
        base = v.line()
        mode = VERTICAL if v.orientation_mode != UNIFORM_RANDOM else UNIFORM_RANDOM
        for orient in grid.get("orientation", [mode]):
            for W in grid.get("W", [base.W]):
                for N in grid.get("N", [base.agent_elements]):
                    for hops in grid.get("hops", [base.hops]):
                        anchor_n = base.anchor_elements if "N" not in grid else None
                        line = replace(base, W=W, agent_elements=N, anchor_elements=anchor_n,
                                       r_max=hops * base.delta)
                        mc = replace(v.monte_carlo(seed), orientation_mode=orient)
                        cache: dict = {}
                        found, note = {}, ""
                        stats = [primary] + ([s for s in (STAT_COORDINATE, STAT_TOTAL) if s != primary] if both else [])
                        try:
                            for stat in stats:
                                found[stat] = max_g_search(line, mc, threshold, stat, cache=cache)
                        except ThresholdUnreachable as exc:
                            if single_cell:
                                raise
                            note = str(exc)
                        res = found.get(primary)
                        if res is not None:
                            paths.add(res.method)
                        cell = f"{v.label}/{orient}/W{W}/N{N}/hops{hops}"
                        rows.append((
                            v.label, orient, W, N, hops, line.r_max, primary,
                            res.G if res else "", res.value if res else "", res.value_next if res else "",
                            found[STAT_COORDINATE].G if STAT_COORDINATE in found else "",
                            found[STAT_TOTAL].G if STAT_TOTAL in found else "",
                            res.method if res else "",
                            "" if res is None or res.cross_check is None else res.cross_check, note))
                        summary[cell] = {s: r.G for s, r in found.items()}
    writer.write_csv(f"{prefix}_maxg.csv", MAXG_COLUMNS, rows)
    return EXIT_OK, "+".join(sorted(paths)) or "none", {"threshold_m": threshold, "statistic": primary,
                                                        "cells": summary}


def cmd_uwb(raw, args, seed, writer):
    prefix = _prefix(raw, "uwb_compare")
    summary = {}
    for v in resolve(raw):
        sc_base = v.scenario()
        mc = v.monte_carlo(seed) if v.randomised else None
        radio = v.radio
        for spec in v.uwb_specs(raw.get("uwb", {})):
            N = spec.n_elements
            sc = replace(v, sections={**v.sections, "scenario": {**v.sections["scenario"], "agent_elements": N,
                                                                   "anchor_elements": N}}).scenario()
            on_carrier = replace(spec, f_c=radio.f_c, tx_power_dbm=radio.tx_power_dbm)
            curves = (
                ("array", mmwave_x_peb(sc, mc), radio.f_c),
                ("toa_uwb", uwb_toa_peb(sc_base, spec, mc), spec.f_c),
                # the same ranging baseline on the array system's carrier and link budget
                ("toa_carrier", uwb_toa_peb(sc_base, on_carrier, mc), radio.f_c),
            )
            for system, values, f_c in curves:
                rows = []
                for node in sc.by_slot():
                    val = 0.0 if node.is_anchor else values[node.index - 1]
                    rows.append((node.index, float(node.position[0]), node.role, system, N, f_c, val))
                writer.write_csv(f"{_stem(raw, prefix, v)}_{system}_N{N}.csv",
                                 ("node_index", "x_m", "role", "system", "n_elements", "f_c_hz", "peb_x_m"), rows)
            # ratio to the single-antenna baseline at identical per-link SNR
            matched = uwb_toa_peb(sc_base, replace(on_carrier, n_elements=1), mc)
            expected = 1.0 / (N * math.sqrt(1.0 + radio.f_c**2 / radio.beta**2))
            mm = curves[0][1]
            c = center_index(len(mm)) - 1
            summary[f"{v.label}/N{N}"] = {**{f"center_{name}_x_m": float(vals[c]) for name, vals, _ in curves},
                                          "matched_snr_ratio": float(np.mean(mm / matched)),
                                          "predicted_ratio": expected}
    return EXIT_OK, "banded-monte-carlo", summary


def cmd_validate(raw, args, seed, writer):
    prefix = _prefix(raw, "validate") if raw else "validate"
    opts = raw.get("validation", {}) if raw else {}
    corrupt = args.corrupt_yy if args.corrupt_yy is not None else opts.get("corrupt_yy_factor", 1.0)
    results = run_suite(tuple(opts.get("oracle_elements", (4, 9, 25))), opts.get("max_G", 50), corrupt)
    for r in results:
        print(r.line())
    writer.write_csv(f"{prefix}_report.csv", ("check", "passed", "max_rel_error", "tolerance", "detail"),
                     [(r.name, r.passed, r.max_rel_error, r.tolerance, r.detail) for r in results])
    ok = all(r.passed for r in results)
    summary = {"passed": ok, "checks": [{"name": r.name, "passed": r.passed, "max_rel_error": r.max_rel_error,
                                         "tolerance": r.tolerance, "detail": r.detail} for r in results]}
    return (EXIT_OK if ok else EXIT_VALIDATION), "oracle+banded+closed-form", summary


COMMANDS = {"peb": cmd_peb, "maxg": cmd_maxg, "mc": cmd_mc, "uwb-compare": cmd_uwb, "validate": cmd_validate}
DEFAULT_PRESETS = {"uwb-compare": "fig2c"}


def _error(kind: str, message: str, **extra) -> None:
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        if args.config:
            raw = load_config(args.config)
        elif args.preset or args.command in DEFAULT_PRESETS:
            raw = validate(load_preset(args.preset or DEFAULT_PRESETS[args.command]))
        else:
            raw = {}
        raw = copy.deepcopy(raw)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        if getattr(args, "trials", None) is not None and args.trials < 1:
            raise ConfigError("--trials must be at least 1")
        seed = args.seed if args.seed is not None else raw.get("seed", secrets.randbits(63))
        if raw or args.command != "validate":
            raw["seed"] = seed
        out_dir = args.out or raw.get("outputs", {}).get("dir", ".")
        with OutputWriter(out_dir) as writer:
            code, path, summary = COMMANDS[args.command](raw, args, seed, writer)
            outputs = writer.names
            name = f"{_prefix(raw, args.command) if raw else args.command}_manifest.json"
            writer.write_json(name, manifest(args.command, raw, seed, path, time.perf_counter() - t0,
                                             outputs, summary))
        return code
    except ConfigError as exc:
        _error("config", str(exc), problems=exc.problems)
        return EXIT_CONFIG
    except ThresholdUnreachable as exc:
        _error("threshold_unreachable", str(exc), peb_at_g2_m=exc.value, threshold_m=exc.threshold)
        return EXIT_NUMERIC
    except SingularFimError as exc:
        _error("singular_fim", str(exc), unanchored_agents=exc.unanchored, rcond=exc.rcond)
        return EXIT_NUMERIC
    except (QuadratureError, FloatingPointError, np.linalg.LinAlgError) as exc:
        _error("numerical", str(exc))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
