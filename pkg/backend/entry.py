"""
Timing-chain simulator entry points

Every operation takes a JSON string (or an already decoded dict) and returns a
JSON string {"success": bool, "data": {...}} or {"success": false, "error",
"kind"}; validation failures also carry the full list of "violations".
"""

import json
import traceback
from typing import Any, Dict, List, Tuple, Union

from kybra_simple_logging import get_logger

from . import __version__

logger = get_logger("sync.entry")

Args = Union[str, Dict[str, Any]]


def _params(args: Args) -> Dict[str, Any]:
    if not args:
        return {}
    return json.loads(args) if isinstance(args, str) else dict(args)


def _failure(operation: str, e: Exception) -> str:
    from .sync_lib.errors import ValidationError

    logger.error(f"Error in {operation}: {str(e)}\n{traceback.format_exc()}")
    response = {"success": False, "error": str(e), "kind": type(e).__name__}
    if isinstance(e, ValidationError):
        response["violations"] = e.violations
    return json.dumps(response)


def _parse_pair(value: Any) -> Tuple[int, int]:
    if isinstance(value, str):
        a, sep, b = value.partition(":")
        if not sep:
            raise ValueError(f"pair must look like A:B, got {value!r}")
        return int(a), int(b)
    a, b = value
    return int(a), int(b)


def simulate(args: Args) -> str:
    """
    Run a scenario and write its artifact directory.

    Args:
        args: JSON with {"scenario": "<builtin name or path>"} or
              {"document": {...}}, plus optional "seed", "out", "decimate",
              "duration_s", "tags", "tag_format", "workers"

    Returns:
        JSON string with the run id, artifact list and per-pair summary
    """
    logger.info(f"simulate called with args: {args}")

    try:
        from .sync_lib.builtin_scenarios import load_scenario
        from .sync_lib.errors import ValidationError
        from .sync_lib.runner import run_scenario
        from .sync_lib.scenario import parse_scenario

        params = _params(args)
        if "document" in params:
            config = parse_scenario(params["document"])
        elif params.get("scenario"):
            config = load_scenario(params["scenario"])
        else:
            raise ValidationError(["simulate: scenario or document is required"])

        if params.get("seed") is not None:
            config = config.with_seed(params["seed"])
        if params.get("duration_s") is not None:
            config = config.with_duration(params["duration_s"])
        if params.get("decimate") is not None:
            config = config.decimated(params["decimate"])
        if params.get("tags") or params.get("tag_format"):
            config = config.with_changes(
                outputs={
                    "phases": config.outputs.phases,
                    "tags": True,
                    "tag_format": params.get("tag_format")
                    or config.outputs.tag_format,
                }
            )

        out = params.get("out") or f"runs/{config.name}-seed{config.seed}"
        result = run_scenario(config, out, workers=params.get("workers"))

        data = {
            "run_id": result.run_id,
            "out_dir": str(result.out_dir),
            "artifacts": result.artifacts,
            "summary": result.summary.to_dict("records"),
        }
        if result.sweep_summary is not None:
            data["sweep"] = result.sweep_summary.to_dict("records")
        logger.info(f"simulate finished: {result.run_id}")
        return json.dumps({"success": True, "data": {"Run": data}})

    except Exception as e:
        return _failure("simulate", e)


def analyze(args: Args) -> str:
    """
    Pairwise TDEV from a recorded or simulated tag file.

    Args:
        args: JSON with {"tags": "<file.csv|file.bin>", "pairs": ["1:2", ...],
              "rate_a": Hz, "rate_b": Hz}, optional "out" and "factors"

    Returns:
        JSON string with the TDEV points of each pair
    """
    logger.info(f"analyze called with args: {args}")

    try:
        from .sync_lib.errors import ValidationError
        from .sync_lib.runner import analyze_tags

        params = _params(args)
        required = ("tags", "pairs", "rate_a", "rate_b")
        missing = [k for k in required if not params.get(k)]
        if missing:
            raise ValidationError([f"analyze: {k} is required" for k in missing])
        pairs: List[Tuple[int, int]] = [_parse_pair(p) for p in params["pairs"]]

        results = analyze_tags(
            params["tags"],
            pairs,
            params["rate_a"],
            params["rate_b"],
            out_dir=params.get("out"),
            factors=params.get("factors"),
        )
        data = {
            name: [
                {
                    "tau_s": p.tau_s,
                    "tdev_ps": p.value,
                    "ci_low_ps": p.ci_low,
                    "ci_high_ps": p.ci_high,
                    "n_used": p.n_used,
                }
                for p in result.points
            ]
            for name, result in results.items()
        }
        logger.info(f"analyze finished: {len(data)} pair(s)")
        return json.dumps({"success": True, "data": {"Analysis": data}})

    except Exception as e:
        return _failure("analyze", e)


def hom(args: Args) -> str:
    """
    Indistinguishability for a relative jitter and a wavepacket width.

    Args:
        args: JSON with {"delta_t_ps": x} and exactly one of "sigma_ps" or
              "fwhm_ps"; optional "convention" and "curves" (output dir)
    """
    logger.info(f"hom called with args: {args}")

    try:
        from .sync_lib.errors import ValidationError
        from .sync_lib.indistinguishability import SIGMA, hom_report

        params = _params(args)
        if params.get("delta_t_ps") is None:
            raise ValidationError(["hom: delta_t_ps is required"])
        report = hom_report(
            float(params["delta_t_ps"]),
            sigma_ps=params.get("sigma_ps"),
            fwhm_ps=params.get("fwhm_ps"),
            convention=params.get("convention") or SIGMA,
            curves_dir=params.get("curves"),
        )
        return json.dumps({"success": True, "data": {"Hom": report}})

    except Exception as e:
        return _failure("hom", e)


def scenario_show(args: Args) -> str:
    """
    The normalized document of a built-in (or file) scenario.

    Args:
        args: JSON with {"name": "<builtin name or path>"}
    """
    logger.info(f"scenario_show called with args: {args}")

    try:
        from .sync_lib.builtin_scenarios import load_scenario
        from .sync_lib.errors import ValidationError

        params = _params(args)
        if not params.get("name"):
            raise ValidationError(["scenario show: name is required"])
        config = load_scenario(params["name"])
        return json.dumps(
            {
                "success": True,
                "data": {
                    "Scenario": config.to_dict(),
                    "config_hash": config.config_hash(),
                },
            }
        )

    except Exception as e:
        return _failure("scenario_show", e)


def get_status(args: Args) -> str:
    """
    Package and library versions, bundled scenarios and the run registry.

    Args:
        args: JSON string (can be empty dict)
    """
    logger.info("get_status called")

    try:
        import numpy
        import pandas
        import scipy

        from .sync_lib import entities
        from .sync_lib.builtin_scenarios import builtin_names

        entities.register_entities()
        status = {
            "version": __version__,
            "libraries": {
                "numpy": numpy.__version__,
                "scipy": scipy.__version__,
                "pandas": pandas.__version__,
            },
            "builtins": builtin_names(),
            "registry": entities.stats(),
        }
        logger.info("Successfully retrieved status")
        return json.dumps({"success": True, "data": {"Status": status}})

    except Exception as e:
        return _failure("get_status", e)
