import traceback

from kybra_simple_db import Entity, Integer, String, TimestampedMixin
from kybra_simple_logging import get_logger

logger = get_logger("sync.entities")


class ScenarioRun(Entity, TimestampedMixin):
    """One execution of a scenario: what ran, with which seed, and where it went."""

    scenario = String()
    seed = Integer(min_value=0)
    config_hash = String()
    output_dir = String()
    n_samples = Integer(min_value=0)
    status = String()


class Artifact(Entity, TimestampedMixin):
    """A file written by a run, relative to the run's output directory."""

    run_id = String()
    path = String()
    kind = String()
    sha256 = String()


def register_entities():
    """Register the run registry entity types with the Database."""
    from kybra_simple_db import Database

    for entity_type in (ScenarioRun, Artifact):
        try:
            Database.get_instance().register_entity_type(entity_type)
        except Exception as e:
            logger.error(
                f"Error registering entity type {entity_type.__name__}: {str(e)}\n"
                f"{traceback.format_exc()}"
            )


def run_id_for(scenario: str, config_hash: str, seed: int) -> str:
    return f"{scenario}:{config_hash[:12]}:{seed}"


def record_run(
    scenario: str,
    seed: int,
    config_hash: str,
    output_dir: str,
    n_samples: int,
    status: str = "running",
) -> ScenarioRun:
    """Create or refresh the registry entry of a run."""
    run_id = run_id_for(scenario, config_hash, seed)
    run = ScenarioRun[run_id] or ScenarioRun(_id=run_id)
    run.scenario = scenario
    run.seed = seed
    run.config_hash = config_hash
    run.output_dir = output_dir
    run.n_samples = n_samples
    run.status = status
    return run


def record_artifact(run_id: str, path: str, kind: str, sha256: str) -> Artifact:
    artifact_id = f"{run_id}:{path}"
    artifact = Artifact[artifact_id] or Artifact(_id=artifact_id)
    artifact.run_id = run_id
    artifact.path = path
    artifact.kind = kind
    artifact.sha256 = sha256
    return artifact


def artifacts_of(run_id: str):
    return sorted(
        (a for a in Artifact.instances() if a.run_id == run_id), key=lambda a: a.path
    )


def stats():
    """Every run and artifact in the registry."""
    return {
        "runs": [
            {
                "id": r._id,
                "scenario": r.scenario,
                "seed": r.seed,
                "config_hash": r.config_hash,
                "output_dir": r.output_dir,
                "n_samples": r.n_samples,
                "status": r.status,
            }
            for r in ScenarioRun.instances()
        ],
        "artifacts": len(Artifact.instances()),
    }
