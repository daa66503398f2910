"""
Scenario execution and tag-file analysis.

A run goes chain -> lasers -> tagger channels -> pairs -> stability. Work that
is independent (lasers, pairs, sweep points, ensemble members) is spread over a
thread pool; results are always merged in sorted key order so the output never
depends on completion order.
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import (
    Callable,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
    TypeVar,
    Union,
)

import numpy as np
import pandas as pd
import scipy
from kybra_simple_logging import get_logger

from . import __version__, entities
from .constants import FLOAT_FORMAT, FS_PER_PS, SCENARIO_SCHEMA_VERSION
from .detection import (
    divide,
    emit_tags,
    pair_tags,
    read_tag_binary,
    write_tag_binary,
)
from .errors import LinkBelowThresholdError, PairingError
from .indistinguishability import predicted_indistinguishability
from .laser import discipline
from .network import link_margin, simulate_chain
from .noisegen import PowerLawTerm, derive_seed, gen_drift, gen_power_law
from .scenario import DIRECT, ScenarioConfig, serialize
from .stability import (
    StabilityResult,
    adjacent_jitter,
    confidence,
    peak,
    tdev,
    write_stability_csv,
)
from .timebase import (
    Frequency,
    PhaseSeries,
    TimeTagSeries,
    read_tag_csv,
    write_phase_csv,
    write_tag_csv,
)

logger = get_logger("sync.runner")

K = TypeVar("K")
V = TypeVar("V")

# Averaging times over which the WR transceiver bump is looked for
BUMP_WINDOW_S = (1e-4, 1e-2)

SUMMARY_COLUMNS = [
    "pair",
    "leftmost_jitter_ps",
    "tdev_tau0_ps",
    "peak_tdev_ps",
    "peak_tau_s",
    "indistinguishability_at_peak",
]
SWEEP_COLUMNS = ["attenuation_db", "margin_db", "bump_peak_tdev_ps"]


@dataclass
class RunResult:
    run_id: str
    out_dir: Path
    results: Dict[str, StabilityResult]
    summary: pd.DataFrame
    artifacts: List[str] = field(default_factory=list)
    sweep_summary: Optional[pd.DataFrame] = None


def map_sorted(
    fn: Callable[[K], V], keys: Iterable[K], workers: Optional[int] = None
) -> Dict[K, V]:
    """fn over keys in a worker pool, returned in sorted key order."""
    keys = sorted(keys)
    if workers == 1 or len(keys) <= 1:
        return {k: fn(k) for k in keys}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {k: pool.submit(fn, k) for k in keys}
        return {k: futures[k].result() for k in keys}


def comparison_rate(config: ScenarioConfig) -> Frequency:
    return Frequency(1 / Fraction(repr(config.tau0_s)))


def _laser_reference(
    config: ScenarioConfig, clock: PhaseSeries, index: int
) -> PhaseSeries:
    """What a laser's signal generator sees of its clock."""
    if config.sync_mode != DIRECT:
        return clock
    laser = config.lasers[index].node
    n, tau0 = len(clock), clock.tau0
    x = clock.samples + gen_power_law(
        PowerLawTerm(0, config.direct.coax_white_pm_ps),
        n,
        tau0,
        derive_seed(config.seed, "coax", laser.name),
    ).samples
    oscillation = config.direct.oscillation
    if index == len(config.lasers) - 1 and index > 0 and not oscillation.is_zero:
        seed = derive_seed(config.seed, "coax")
        x = x + gen_drift(oscillation, n, tau0, seed).samples
    return clock.with_samples(x, f"{clock.origin}->{laser.name}")


def simulate_sources(
    config: ScenarioConfig, workers: Optional[int] = None
) -> Dict[str, PhaseSeries]:
    """Time error of every clock node and laser of the scenario."""
    try:
        clocks = simulate_chain(config.topology)
    except LinkBelowThresholdError as e:
        link = f"{config.name}/{e.link_name}"
        raise LinkBelowThresholdError(link, e.margin_db) from e
    logger.info(f"{config.name}: chain simulated ({len(clocks)} clocks)")

    def lock(index: int) -> PhaseSeries:
        laser = config.lasers[index]
        reference = _laser_reference(config, clocks[laser.upstream], index)
        return discipline(reference, laser.node, config.seed)

    lasers = map_sorted(lock, range(len(config.lasers)), workers)
    sources = dict(clocks)
    for index, series in lasers.items():
        sources[config.lasers[index].node.name] = series
    if lasers:
        logger.info(f"{config.name}: {len(lasers)} laser(s) disciplined")
    return sources


def measure_channels(
    config: ScenarioConfig, sources: Dict[str, PhaseSeries]
) -> Dict[int, TimeTagSeries]:
    """Tag stream of each channel at the comparison rate.

    Every channel goes through the tagger model; divider outputs then pass the
    divider with ratio 1, since one comparison tick already stands for one
    retained divided pulse.
    """
    rate = comparison_rate(config)
    per_tick = replace(config.divider, ratio=1)
    tags = {}
    for ch in config.channels:
        stream = emit_tags(
            sources[ch.source],
            rate,
            config.tagger,
            derive_seed(config.seed, "channel", ch.channel),
            channel=ch.channel,
            rf_chain=ch.rf_chain,
            split=ch.split,
        )
        if ch.divider:
            stream = divide(
                stream, per_tick, derive_seed(config.seed, "divider", ch.channel)
            )
        tags[ch.channel] = stream
    return tags


def tick_readings(
    config: ScenarioConfig, tags: Dict[int, TimeTagSeries]
) -> Dict[int, np.ndarray]:
    """Each channel's deviation from its nominal tick, integer femtoseconds."""
    offsets = comparison_rate(config).nominal_offsets_fs(config.n_samples)
    readings = {}
    for ch, stream in sorted(tags.items()):
        if len(stream) != offsets.size:
            raise PairingError(
                f"channel {ch}: {len(stream)} tags for {offsets.size} comparison ticks"
            )
        readings[ch] = stream.timestamps_fs - offsets
    return readings


def pair_series(
    config: ScenarioConfig, tags: Dict[int, TimeTagSeries]
) -> Dict[str, PhaseSeries]:
    readings = tick_readings(config, tags)
    return {
        p.name: PhaseSeries(
            config.tau0_s,
            (readings[p.b] - readings[p.a]).astype(np.float64) / FS_PER_PS,
            p.name,
        )
        for p in config.pairs
    }


def analyze_series(
    series: PhaseSeries,
    factors: Optional[Sequence[int]] = None,
    with_confidence: bool = True,
) -> StabilityResult:
    result = tdev(series, factors)
    return confidence(result, series) if with_confidence else result


def summary_row(name: str, series: PhaseSeries, result: StabilityResult) -> Dict:
    jitter = adjacent_jitter(series)
    top = peak(result)
    if top is None:
        top = max(result.points, key=lambda p: p.value)
    return {
        "pair": name,
        "leftmost_jitter_ps": jitter.first_difference_ps,
        "tdev_tau0_ps": jitter.tdev_tau0_ps,
        "peak_tdev_ps": top.value,
        "peak_tau_s": top.tau_s,
        "indistinguishability_at_peak": predicted_indistinguishability(top.value),
    }


def bump_peak(result: StabilityResult) -> float:
    """Largest TDEV inside the ms bump window."""
    lo, hi = BUMP_WINDOW_S
    inside = [p.value for p in result.points if lo <= p.tau_s <= hi]
    return max(inside) if inside else float("nan")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class _ArtifactWriter:
    """Writes files under a run directory and keeps the list for the manifest."""

    def __init__(self, out_dir: Path, run_id: str):
        self.out_dir = out_dir
        self.run_id = run_id
        self.written: List[Tuple[str, str]] = []

    def add(self, name: str, kind: str, write: Callable[[Path], object]) -> Path:
        path = self.out_dir / name
        write(path)
        self.written.append((name, kind))
        logger.debug(f"Wrote {kind} artifact {path}")
        return path

    def records(self) -> List[Dict[str, str]]:
        rows = []
        for name, kind in sorted(self.written):
            sha = _sha256(self.out_dir / name)
            entities.record_artifact(self.run_id, name, kind, sha)
            rows.append({"path": name, "kind": kind, "sha256": sha})
        return rows


def _write_csv(df: pd.DataFrame) -> Callable[[Path], object]:
    return lambda path: df.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def _write_sources(
    writer: _ArtifactWriter, sources: Dict[str, PhaseSeries], suffix: str = ""
) -> None:
    for name in sorted(sources):
        writer.add(
            f"phase_{name}{suffix}.csv",
            "phase",
            lambda path, s=sources[name]: write_phase_csv(path, s),
        )


def _write_tags(
    writer: _ArtifactWriter, config: ScenarioConfig, tags: Dict[int, TimeTagSeries]
) -> None:
    channels = [tags[ch] for ch in sorted(tags)]
    if config.outputs.tag_format == "bin":
        writer.add("tags.bin", "tags", lambda path: write_tag_binary(path, channels))
    else:
        writer.add("tags.csv", "tags", lambda path: write_tag_csv(path, channels))


def _manifest(config: ScenarioConfig, run_id: str, artifacts: List[Dict]) -> Dict:
    return {
        "schema": SCENARIO_SCHEMA_VERSION,
        "run_id": run_id,
        "scenario": config.name,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "n_samples": config.n_samples,
        "tau0_s": config.tau0_s,
        "duration_s": config.duration_s,
        "tag_rate_hz": float(comparison_rate(config)),
        "versions": {
            "sync_lib": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
        "artifacts": artifacts,
    }


def _simulate_point(
    config: ScenarioConfig, workers: Optional[int]
) -> Tuple[
    Dict[str, PhaseSeries], Dict[int, TimeTagSeries], Dict[str, PhaseSeries]
]:
    sources = simulate_sources(config, workers)
    tags = measure_channels(config, sources)
    return sources, tags, pair_series(config, tags)


def _run_sweep(
    config: ScenarioConfig, writer: _ArtifactWriter, workers: Optional[int]
) -> Tuple[Dict[str, StabilityResult], pd.DataFrame, pd.DataFrame]:
    sweep = config.sweep
    points = {}
    for i, attenuation in enumerate(sweep.attenuation_db):
        point = config.with_link_attenuation(sweep.link, attenuation)
        k = next(
            k for k in range(len(point.topology.links))
            if point.topology.link_name(k) == sweep.link
        )
        margin = link_margin(point.topology.links[k])
        if margin < 0:
            raise LinkBelowThresholdError(f"{config.name}/{sweep.link}", margin)
        points[i] = (attenuation, margin, point)

    def run_point(i: int):
        attenuation, margin, point = points[i]
        sources, _, pairs = _simulate_point(point, workers=1)
        results = {
            name: analyze_series(series, config.factors)
            for name, series in sorted(pairs.items())
        }
        logger.info(
            f"{config.name}: attenuation {attenuation:g} dB "
            f"(margin {margin:.2f} dB) done"
        )
        return sources, pairs, results

    outcome = map_sorted(run_point, points, workers)

    results, rows, sweep_rows = {}, [], []
    first_pair = config.pairs[0].name
    for i, (sources, pairs, point_results) in outcome.items():
        attenuation, margin, _ = points[i]
        suffix = f"_att{attenuation:g}dB"
        if config.outputs.phases:
            _write_sources(writer, sources, suffix)
        for name, result in point_results.items():
            key = f"{name}{suffix}"
            results[key] = result
            writer.add(
                f"tdev_{key}.csv",
                "stability",
                lambda path, r=result: write_stability_csv(path, r),
            )
            rows.append(summary_row(key, pairs[name], result))
        sweep_rows.append(
            {
                "attenuation_db": attenuation,
                "margin_db": margin,
                "bump_peak_tdev_ps": bump_peak(point_results[first_pair]),
            }
        )
    sweep_summary = pd.DataFrame(sweep_rows, columns=SWEEP_COLUMNS)
    writer.add("attenuation_summary.csv", "summary", _write_csv(sweep_summary))
    return results, pd.DataFrame(rows, columns=SUMMARY_COLUMNS), sweep_summary


def run_scenario(
    config: ScenarioConfig,
    out_dir: Union[str, Path],
    workers: Optional[int] = None,
) -> RunResult:
    """Simulate a scenario and write its artifact directory.

    Files: scenario.json, phase_<source>.csv, tags.csv|tags.bin (when asked
    for), tdev_<pair>.csv, summary.csv and manifest.json. Reruns with the same
    seed produce byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entities.register_entities()
    config_hash = config.config_hash()
    run = entities.record_run(
        config.name, config.seed, config_hash, str(out_dir), config.n_samples
    )
    run_id = entities.run_id_for(config.name, config_hash, config.seed)
    logger.info(
        f"Running scenario {config.name} (seed {config.seed}, "
        f"{config.n_samples} samples at tau0={config.tau0_s:g} s) into {out_dir}"
    )

    writer = _ArtifactWriter(out_dir, run_id)
    writer.add(
        "scenario.json", "config", lambda p: p.write_text(serialize(config) + "\n")
    )
    try:
        sweep_summary = None
        if config.sweep is not None:
            results, summary, sweep_summary = _run_sweep(config, writer, workers)
        else:
            sources, tags, pairs = _simulate_point(config, workers)
            if config.outputs.phases:
                _write_sources(writer, sources)
            if config.outputs.tags:
                _write_tags(writer, config, tags)
            results = map_sorted(
                lambda name: analyze_series(pairs[name], config.factors),
                pairs,
                workers,
            )
            for name, result in results.items():
                writer.add(
                    f"tdev_{name}.csv",
                    "stability",
                    lambda path, r=result: write_stability_csv(path, r),
                )
                logger.info(f"{config.name}: pair {name} analyzed")
            summary = pd.DataFrame(
                [
                    summary_row(p.name, pairs[p.name], results[p.name])
                    for p in config.pairs
                ],
                columns=SUMMARY_COLUMNS,
            )
        writer.add("summary.csv", "summary", _write_csv(summary))

        artifacts = writer.records()
        manifest = _manifest(config, run_id, artifacts)
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except Exception:
        run.status = "failed"
        raise

    run.status = "complete"
    logger.info(f"Scenario {config.name} complete: {len(artifacts)} artifacts")
    return RunResult(
        run_id,
        out_dir,
        results,
        summary,
        [a["path"] for a in artifacts] + ["manifest.json"],
        sweep_summary,
    )


def run_ensemble(
    config: ScenarioConfig,
    seeds: Sequence[int],
    pair_names: Optional[Sequence[str]] = None,
    workers: Optional[int] = None,
    with_confidence: bool = False,
) -> Dict[int, Dict[str, StabilityResult]]:
    """Monte Carlo repetitions of a scenario, keyed by seed; nothing is written."""
    names = list(pair_names) if pair_names else [p.name for p in config.pairs]

    def one(seed: int) -> Dict[str, StabilityResult]:
        _, _, pairs = _simulate_point(config.with_seed(seed), workers=1)
        return {
            name: analyze_series(pairs[name], config.factors, with_confidence)
            for name in names
        }

    logger.info(f"{config.name}: ensemble of {len(seeds)} seeds")
    return map_sorted(one, seeds, workers)


def read_tags(path: Union[str, Path]) -> Dict[int, TimeTagSeries]:
    path = Path(path)
    if path.suffix == ".bin":
        return read_tag_binary(path)
    return read_tag_csv(path)


def analyze_tags(
    path: Union[str, Path],
    pairs: Sequence[Tuple[int, int]],
    rate_a: Union[float, Frequency],
    rate_b: Union[float, Frequency],
    out_dir: Optional[Union[str, Path]] = None,
    factors: Optional[Sequence[int]] = None,
    workers: Optional[int] = None,
) -> Dict[str, StabilityResult]:
    """TDEV of channel B against channel A for each (A, B), from a tag file."""
    rate_a = rate_a if isinstance(rate_a, Frequency) else Frequency.of(rate_a)
    rate_b = rate_b if isinstance(rate_b, Frequency) else Frequency.of(rate_b)
    channels = read_tags(path)
    logger.info(f"Analyzing {path}: channels {sorted(channels)}")
    for a, b in pairs:
        for ch in (a, b):
            if ch not in channels:
                raise PairingError(
                    f"channels unpairable: channel {ch} not present in {path} "
                    f"(found {sorted(channels)})"
                )

    def one(pair: Tuple[int, int]) -> Tuple[PhaseSeries, StabilityResult]:
        a, b = pair
        series = pair_tags(channels[a], channels[b], rate_a, rate_b)
        return series, analyze_series(series, factors)

    outcome = map_sorted(one, [tuple(p) for p in pairs], workers)
    results, rows = {}, []
    for (a, b), (series, result) in outcome.items():
        name = f"ch{b}-ch{a}"
        results[name] = result
        rows.append(summary_row(name, series, result))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, result in results.items():
            write_stability_csv(out / f"tdev_{name}.csv", result)
        _write_csv(pd.DataFrame(rows, columns=SUMMARY_COLUMNS))(out / "summary.csv")
    return results
