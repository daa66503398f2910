"""
Command-line front end over the entry points.

    simulate <scenario.json|builtin> [--seed N] [--out DIR] [--decimate K]
    analyze --tags FILE --pair A:B [--pair C:D ...] --rate-a HZ --rate-b HZ [--out DIR]
    hom --dt PS (--sigma PS | --fwhm PS) [--convention sigma|half_fwhm] [--curves DIR]
    scenario show <name>
    status

Exit codes: 0 success, 2 invalid input, 3 any other failure.
"""

import argparse
import json
import sys
from typing import Any, Callable, Dict, List, Optional

from . import entry

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wr-mll-sync",
        description="White Rabbit laser synchronization simulator and TDEV analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario")
    sim.add_argument("scenario", help="built-in name or path to a scenario JSON file")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", help="artifact directory")
    sim.add_argument("--decimate", type=int, help="coarsen tau0 by this factor")
    sim.add_argument("--duration", type=float, help="override duration_s")
    sim.add_argument("--tags", action="store_true", help="also write tag files")
    sim.add_argument("--tag-format", choices=["csv", "bin"])
    sim.add_argument("--workers", type=int)

    ana = sub.add_parser("analyze", help="TDEV of channel pairs in a tag file")
    ana.add_argument("--tags", required=True, help="tag file (.csv or .bin)")
    ana.add_argument("--pair", action="append", required=True, metavar="A:B")
    ana.add_argument("--rate-a", type=float, required=True, metavar="HZ")
    ana.add_argument("--rate-b", type=float, required=True, metavar="HZ")
    ana.add_argument("--out")
    ana.add_argument("--factors", type=int, nargs="+")

    h = sub.add_parser("hom", help="indistinguishability versus timing jitter")
    h.add_argument("--dt", type=float, required=True, metavar="PS")
    width = h.add_mutually_exclusive_group(required=True)
    width.add_argument("--sigma", type=float, metavar="PS")
    width.add_argument("--fwhm", type=float, metavar="PS")
    h.add_argument("--convention", choices=["sigma", "half_fwhm"], default="sigma")
    h.add_argument("--curves", metavar="DIR", help="write overlap/visibility CSVs")

    sc = sub.add_parser("scenario", help="inspect scenarios")
    sc_sub = sc.add_subparsers(dest="action", required=True)
    show = sc_sub.add_parser("show", help="print the normalized document")
    show.add_argument("name")

    sub.add_parser("status", help="versions and run registry")
    return parser


def _print_run(data: Dict[str, Any]) -> None:
    run = data["Run"]
    print(f"run {run['run_id']} -> {run['out_dir']}")
    for row in run["summary"]:
        print(
            f"  {row['pair']:<24} leftmost {row['leftmost_jitter_ps']:.3f} ps  "
            f"peak {row['peak_tdev_ps']:.3f} ps @ {row['peak_tau_s']:.3g} s"
        )
    for row in run.get("sweep", []):
        print(
            f"  attenuation {row['attenuation_db']:g} dB  "
            f"margin {row['margin_db']:.2f} dB"
            f"  bump peak {row['bump_peak_tdev_ps']:.3f} ps"
        )


def _print_analysis(data: Dict[str, Any]) -> None:
    for name, points in data["Analysis"].items():
        print(name)
        print("  tau_s          tdev_ps      ci_low_ps    ci_high_ps   n_used")
        for p in points:
            print(
                f"  {p['tau_s']:<14.6g} {p['tdev_ps']:<12.6g} {p['ci_low_ps']:<12.6g} "
                f"{p['ci_high_ps']:<12.6g} {p['n_used']}"
            )


def _print_hom(data: Dict[str, Any]) -> None:
    report = data["Hom"]
    print(f"I={report['indistinguishability']:.6f}")
    print(
        f"  delta_t {report['delta_t_ps']:g} ps, sigma {report['sigma_ps']:.4g} ps "
        f"({report['convention']}), fwhm {report['fwhm_ps']:.4g} ps"
    )
    for name, value in report["conventions"].items():
        print(
            f"  {name:<10} sigma {value['sigma_ps']:.4g} ps  "
            f"I={value['indistinguishability']:.6f}"
        )
    if report.get("quoted_visibility") is not None:
        print(
            f"  quoted: {report['quoted_visibility']:.0%} "
            f"(rounded figure from the measurement write-up, not computed)"
        )
    for path in report.get("curves", []):
        print(f"  wrote {path}")


def _print_json(key: str) -> Callable[[Dict[str, Any]], None]:
    return lambda data: print(json.dumps(data[key], indent=2))


def _dispatch(args: argparse.Namespace):
    if args.command == "simulate":
        params = {
            "scenario": args.scenario,
            "seed": args.seed,
            "out": args.out,
            "decimate": args.decimate,
            "duration_s": args.duration,
            "tags": args.tags,
            "tag_format": args.tag_format,
            "workers": args.workers,
        }
        return entry.simulate(params), _print_run
    if args.command == "analyze":
        params = {
            "tags": args.tags,
            "pairs": args.pair,
            "rate_a": args.rate_a,
            "rate_b": args.rate_b,
            "out": args.out,
            "factors": args.factors,
        }
        return entry.analyze(params), _print_analysis
    if args.command == "hom":
        params = {
            "delta_t_ps": args.dt,
            "sigma_ps": args.sigma,
            "fwhm_ps": args.fwhm,
            "convention": args.convention,
            "curves": args.curves,
        }
        return entry.hom(params), _print_hom
    if args.command == "scenario":
        return entry.scenario_show({"name": args.name}), _print_json("Scenario")
    return entry.get_status({}), _print_json("Status")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    response, show = _dispatch(args)
    result = json.loads(response)
    if result["success"]:
        show(result["data"])
        return EXIT_OK

    print(f"error: {result['error']}", file=sys.stderr)
    for violation in result.get("violations", []):
        print(f"  - {violation}", file=sys.stderr)
    return EXIT_VALIDATION if result["kind"] == "ValidationError" else EXIT_RUNTIME
