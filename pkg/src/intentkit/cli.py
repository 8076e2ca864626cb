"""Command-line entry points.

Every command resolves its configuration through the same precedence
chain: built-in defaults, then an INI-style config file, then environment
variables (INTENTKIT_<SECTION>_<KEY>), then explicit flags. Unknown keys
in the file or the environment are rejected rather than ignored.

Each run writes a manifest.json into the output directory, success or
failure, recording the resolved configuration, its hash, the seed, the
output files, and wall-clock timing. Exit codes: 0 success, 2
configuration error, 3 data error, 4 model/embedding backend error.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from configparser import ConfigParser, Error as ConfigParserError
from pathlib import Path

import click

from . import __version__
from .agent import StrategyMode, run_inference
from .embedding import EmbedderSpec
from .errors import (
    ConfigError,
    DataFormatError,
    IntentKitError,
    RemoteBackendError,
    ScriptExhaustedError,
)
from .experiments import (
    AccumulationPlan,
    StrategyGrid,
    run_accumulation,
    run_strategy_grid,
    write_accumulation_csv,
    write_grid_csv,
)
from .library import IntentHistoryLibrary, build_library, discriminability_report
from .llm import RemoteLLM, ScriptedLLM, load_script
from .metrics import EvalRow, evaluate as evaluate_rows, write_report_csv, write_report_json
from .policy import (
    SyntheticWorld,
    TrainConfig,
    default_world,
    tied_accuracy_world,
    train,
    write_curve_csv,
)
from .rewards import RewardConfig, ablated_config
from .taxonomies import builtin_taxonomies, get_taxonomy
from .trajectory import GenConfig, export_sft_dataset, generate_dataset
from .types import load_records

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4

ENV_PREFIX = "INTENTKIT_"

# key -> (python type tag, default). The registry is the single source of
# truth for what may appear in config files and the environment.
KNOWN_KEYS: dict[str, tuple[str, object]] = {
    "run.seed": ("int", 0),
    "run.jobs": ("int", os.cpu_count() or 1),
    "embedder.backend": ("str", "hashed_bow"),
    "embedder.dim": ("int", 256),
    "embedder.endpoint_url": ("str", ""),
    "embedder.model_name": ("str", ""),
    "model.kind": ("str", "scripted"),
    "model.endpoint_url": ("str", ""),
    "model.name": ("str", ""),
    "model.script": ("str", ""),
    "model.timeout_ms": ("int", 60_000),
    "model.retries": ("int", 2),
    "agent.mode": ("str", "self_decided"),
    "agent.k": ("int", 3),
    "agent.max_turns": ("int", 6),
    "gen.i_max": ("int", 6),
    "gen.feedback_escalation_turn": ("int", 3),
    "gen.reveal_on_exhaustion": ("bool", True),
    "policy.steps": ("int", 2000),
    "policy.lr": ("float", 0.002),
    "policy.group_size": ("int", 8),
    "policy.ablation": ("str", "full"),
    "policy.world": ("str", "default"),
    "reward.r_format": ("float", 0.1),
    "reward.r_direct_bonus": ("float", 0.1),
    "reward.r_futile_penalty": ("float", -0.1),
    "reward.r_tool_bonus": ("float", 0.5),
    "reward.r_stubborn_penalty": ("float", -0.1),
    "reward.easy_threshold": ("float", 0.5),
    "reward.clip_eps": ("float", 0.2),
    "reward.kl_beta": ("float", 0.0),
    "grid.modes": ("csv", "forced_no_retrieval,self_decided,forced_retrieval"),
    "grid.k_values": ("csv", "3"),
    "grid.ablations": ("csv", "full"),
    "accumulation.ordering": ("str", "round_robin"),
    "accumulation.checkpoints": ("csv", ""),
    "data.split": ("str", "train"),
    "data.user": ("str", ""),
}


def _coerce(key: str, raw: str):
    kind = KNOWN_KEYS[key][0]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            lowered = str(raw).strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def _read_config_file(path: str) -> dict:
    parser = ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except ConfigParserError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        for option, raw in parser.items(section):
            key = f"{section}.{option}"
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key {key!r} in {path}")
            values[key] = _coerce(key, raw)
    return values


def _read_env() -> dict:
    values = {}
    known_env = {
        ENV_PREFIX + key.replace(".", "_").upper(): key for key in KNOWN_KEYS
    }
    for name, raw in os.environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        if name not in known_env:
            raise ConfigError(f"unknown environment override {name}")
        key = known_env[name]
        values[key] = _coerce(key, raw)
    return values


def resolve_config(config_path: str | None, flag_values: dict) -> dict:
    """Apply the precedence chain and return a fully-populated key map."""
    resolved = {key: default for key, (_, default) in KNOWN_KEYS.items()}
    if config_path:
        resolved.update(_read_config_file(config_path))
    resolved.update(_read_env())
    for key, value in flag_values.items():
        if value is not None:
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            resolved[key] = value
    return resolved


def _config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _classify_exit(exc: Exception) -> int:
    if isinstance(exc, (RemoteBackendError, ScriptExhaustedError)):
        return EXIT_BACKEND
    if isinstance(exc, ConfigError) or isinstance(exc, ValueError):
        return EXIT_CONFIG
    if isinstance(exc, (DataFormatError, FileNotFoundError, KeyError)):
        return EXIT_DATA
    if isinstance(exc, IntentKitError):
        traj = getattr(exc, "trajectory", "missing")
        if traj != "missing":
            return EXIT_BACKEND
        return EXIT_DATA
    return EXIT_DATA


def _execute(command: str, out_dir: str, resolve, body) -> None:
    """Resolve config, run a command body, write the manifest no matter what.

    resolve is deferred into the guarded region so that a bad config file
    or environment override still produces a manifest (with null config)
    and the config exit code.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": None,
        "config_hash": None,
        "seed": None,
        "version": __version__,
        "status": "ok",
        "error": None,
        "outputs": [],
    }
    start = time.perf_counter()
    code = EXIT_OK
    try:
        config = resolve()
        manifest["config"] = {k: config[k] for k in sorted(config)}
        manifest["config_hash"] = _config_hash(config)
        manifest["seed"] = config["run.seed"]
        manifest["outputs"] = body(config, out)
    except (IntentKitError, OSError, ValueError, KeyError) as exc:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        code = _classify_exit(exc)
    manifest["timings"] = {"total_s": round(time.perf_counter() - start, 6)}
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    if code != EXIT_OK:
        click.echo(f"error: {manifest['error']}", err=True)
    sys.exit(code)


def _embedder_from(config: dict) -> EmbedderSpec:
    backend = config["embedder.backend"]
    return EmbedderSpec(
        backend=backend,
        dim=config["embedder.dim"],
        endpoint_url=config["embedder.endpoint_url"] or None,
        model_name=config["embedder.model_name"] or None,
    )


def _model_backend(config: dict):
    kind = config["model.kind"]
    if kind == "scripted":
        script = config["model.script"]
        if not script:
            raise ConfigError("model.kind=scripted requires model.script")
        return ScriptedLLM(load_script(script))
    if kind == "remote":
        if not config["model.endpoint_url"]:
            raise ConfigError("model.kind=remote requires model.endpoint_url")
        return RemoteLLM(
            endpoint_url=config["model.endpoint_url"],
            model=config["model.name"] or "default",
            timeout_ms=config["model.timeout_ms"],
            retries=config["model.retries"],
        )
    raise ConfigError(f"unknown model.kind {kind!r}")


def _model_backend_factory(config: dict):
    kind = config["model.kind"]
    if kind == "scripted":
        script_path = config["model.script"]
        if not script_path:
            raise ConfigError("model.kind=scripted requires model.script")
        steps = load_script(script_path)
        return lambda: ScriptedLLM(steps)
    backend = _model_backend(config)
    return lambda: backend


def _taxonomy_from(name: str):
    try:
        return get_taxonomy(name)
    except KeyError:
        raise ConfigError(
            f"unknown taxonomy {name!r}; built-ins: "
            + ", ".join(sorted(builtin_taxonomies()))
        ) from None


def _reward_from(config: dict) -> RewardConfig:
    base = RewardConfig(
        r_format=config["reward.r_format"],
        r_direct_bonus=config["reward.r_direct_bonus"],
        r_futile_penalty=config["reward.r_futile_penalty"],
        r_tool_bonus=config["reward.r_tool_bonus"],
        r_stubborn_penalty=config["reward.r_stubborn_penalty"],
        easy_threshold=config["reward.easy_threshold"],
        clip_eps=config["reward.clip_eps"],
        kl_beta=config["reward.kl_beta"],
    )
    return ablated_config(base, config["policy.ablation"])


def _filter_records(records, config: dict):
    split = config["data.split"]
    if split not in ("train", "test", "all"):
        raise ConfigError(f"data.split must be train, test, or all, not {split!r}")
    if split != "all":
        records = [r for r in records if r.split == split]
    user = config["data.user"]
    if user:
        records = [r for r in records if r.context.user == user]
    if not records:
        raise DataFormatError("no records left after split/user filtering")
    return records


def _common_options(fn):
    fn = click.option("--config", "config_path", type=str, default=None,
                      help="INI config file; flags override it.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Run seed.")(fn)
    fn = click.option("--jobs", type=int, default=None,
                      help="Worker count for parallel cells (default: cores).")(fn)
    fn = click.option("--out", type=str, required=True,
                      help="Output directory (manifest.json is written here).")(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="intentkit")
def main() -> None:
    """Retrieval-conditioned intent inference toolkit."""


@main.command("build-library")
@_common_options
@click.option("--records", "records_path", required=True, type=str)
@click.option("--taxonomy", "taxonomy_name", required=True, type=str)
@click.option("--split", "split_flag", type=str, default=None)
@click.option("--embedder", "embedder_flag", type=str, default=None)
@click.option("--dim", "dim_flag", type=int, default=None)
def build_library_cmd(config_path, seed, jobs, out, records_path,
                      taxonomy_name, split_flag, embedder_flag, dim_flag):
    """Embed labeled records into a per-user history library file."""
    flags = {
        "run.seed": seed, "run.jobs": jobs, "data.split": split_flag,
        "embedder.backend": embedder_flag, "embedder.dim": dim_flag,
    }

    def body(config: dict, out_dir: Path) -> list[str]:
        taxonomy = _taxonomy_from(taxonomy_name)
        records = _filter_records(load_records(records_path), config)
        library = build_library(records, taxonomy, _embedder_from(config))
        library.save(out_dir / "library.jsonl")
        return ["library.jsonl"]

    _execute("build-library", out, lambda: resolve_config(config_path, flags), body)


@main.command("gen-trajectories")
@_common_options
@click.option("--records", "records_path", required=True, type=str)
@click.option("--library", "library_path", required=True, type=str)
@click.option("--taxonomy", "taxonomy_name", required=True, type=str)
@click.option("--script", "script_flag", type=str, default=None)
@click.option("--split", "split_flag", type=str, default=None)
@click.option("--k", "k_flag", type=int, default=None)
@click.option("--i-max", "i_max_flag", type=int, default=None)
def gen_trajectories_cmd(config_path, seed, jobs, out, records_path,
                         library_path, taxonomy_name, script_flag,
                         split_flag, k_flag, i_max_flag):
    """Generate supervision trajectories with a teacher backend."""
    flags = {
        "run.seed": seed, "run.jobs": jobs, "model.script": script_flag,
        "data.split": split_flag, "agent.k": k_flag, "gen.i_max": i_max_flag,
    }

    def body(config: dict, out_dir: Path) -> list[str]:
        taxonomy = _taxonomy_from(taxonomy_name)
        records = _filter_records(load_records(records_path), config)
        library = IntentHistoryLibrary.load(library_path, taxonomy)
        backend = _model_backend(config)
        cfg = GenConfig(
            i_max=config["gen.i_max"],
            feedback_escalation_turn=config["gen.feedback_escalation_turn"],
            reveal_on_exhaustion=config["gen.reveal_on_exhaustion"],
        )
        report = generate_dataset(records, library, backend, cfg, k=config["agent.k"])
        export = export_sft_dataset(report.outcomes, out_dir / "sft.jsonl")
        summary = {
            "generated": len(report.outcomes),
            "written": export.written,
            "rejected": [list(item) for item in export.rejected],
            "skips": [list(item) for item in report.skips],
            "statuses": {
                status: sum(1 for o in report.outcomes if o.status == status)
                for status in sorted({o.status for o in report.outcomes})
            },
        }
        with open(out_dir / "gen_report.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return ["sft.jsonl", "gen_report.json"]

    _execute("gen-trajectories", out, lambda: resolve_config(config_path, flags), body)


@main.command("evaluate")
@_common_options
@click.option("--records", "records_path", required=True, type=str)
@click.option("--library", "library_path", required=True, type=str)
@click.option("--taxonomy", "taxonomy_name", required=True, type=str)
@click.option("--script", "script_flag", type=str, default=None)
@click.option("--mode", "mode_flag", type=str, default=None)
@click.option("--k", "k_flag", type=int, default=None)
@click.option("--split", "split_flag", type=str, default=None)
def evaluate_cmd(config_path, seed, jobs, out, records_path, library_path,
                 taxonomy_name, script_flag, mode_flag, k_flag, split_flag):
    """Run inference over a record set and report metrics."""
    flags = {
        "run.seed": seed, "run.jobs": jobs, "model.script": script_flag,
        "agent.mode": mode_flag, "agent.k": k_flag, "data.split": split_flag,
    }

    def body(config: dict, out_dir: Path) -> list[str]:
        taxonomy = _taxonomy_from(taxonomy_name)
        records = _filter_records(load_records(records_path), config)
        library = IntentHistoryLibrary.load(library_path, taxonomy)
        backend = _model_backend(config)
        try:
            mode = StrategyMode(config["agent.mode"])
        except ValueError:
            raise ConfigError(f"unknown agent.mode {config['agent.mode']!r}") from None
        rows = []
        for record in records:
            outcome = run_inference(
                record.context, taxonomy, library, mode, backend,
                max_turns=config["agent.max_turns"], k=config["agent.k"],
            )
            rows.append(EvalRow(gt=record.gt_label, preds=(outcome.predicted,)))
        report = evaluate_rows(rows, taxonomy)
        write_report_json(report, out_dir / "report.json")
        write_report_csv(report, out_dir / "report.csv")
        return ["report.json", "report.csv"]

    _execute("evaluate", out, lambda: resolve_config(config_path, flags), body)


@main.command("simulate-accumulation")
@_common_options
@click.option("--records", "records_path", required=True, type=str)
@click.option("--taxonomy", "taxonomy_name", required=True, type=str)
@click.option("--script", "script_flag", type=str, default=None)
@click.option("--mode", "mode_flag", type=str, default=None)
@click.option("--ordering", "ordering_flag", type=str, default=None)
@click.option("--checkpoints", "checkpoints_flag", type=str, default=None)
@click.option("--user", "user_flag", type=str, default=None)
@click.option("--seed-library", "seed_library_path", type=str, default=None)
def simulate_accumulation_cmd(config_path, seed, jobs, out, records_path,
                              taxonomy_name, script_flag, mode_flag,
                              ordering_flag, checkpoints_flag, user_flag,
                              seed_library_path):
    """Stream one user's records, predicting before each insertion."""
    flags = {
        "run.seed": seed, "run.jobs": jobs, "model.script": script_flag,
        "agent.mode": mode_flag, "accumulation.ordering": ordering_flag,
        "accumulation.checkpoints": checkpoints_flag, "data.user": user_flag,
    }

    def body(config: dict, out_dir: Path) -> list[str]:
        taxonomy = _taxonomy_from(taxonomy_name)
        records = _filter_records(load_records(records_path), config)
        users = {r.context.user for r in records}
        if len(users) > 1:
            raise DataFormatError(
                "accumulation needs a single user; pass --user to choose one "
                f"of {sorted(users)}"
            )
        raw_checkpoints = config["accumulation.checkpoints"]
        checkpoints = tuple(
            int(c) for c in raw_checkpoints.split(",") if c.strip()
        ) if raw_checkpoints else ()
        plan = AccumulationPlan(
            records=tuple(records),
            ordering=config["accumulation.ordering"],
            checkpoints=checkpoints,
        )
        if seed_library_path:
            library = IntentHistoryLibrary.load(seed_library_path, taxonomy)
        else:
            library = IntentHistoryLibrary(taxonomy, _embedder_from(config))
        backend = _model_backend(config)
        mode = StrategyMode(config["agent.mode"])
        result = run_accumulation(
            plan, taxonomy, library, backend, mode=mode,
            k=config["agent.k"], max_turns=config["agent.max_turns"],
        )
        write_accumulation_csv(result.rows, out_dir / "curve.csv")
        return ["curve.csv"]

    _execute("simulate-accumulation", out,
             lambda: resolve_config(config_path, flags), body)


@main.command("simulate-policy")
@_common_options
@click.option("--steps", "steps_flag", type=int, default=None)
@click.option("--lr", "lr_flag", type=float, default=None)
@click.option("--group-size", "group_size_flag", type=int, default=None)
@click.option("--ablation", "ablation_flag", type=str, default=None)
@click.option("--world", "world_flag", type=str, default=None)
def simulate_policy_cmd(config_path, seed, jobs, out, steps_flag, lr_flag,
                        group_size_flag, ablation_flag, world_flag):
    """Train the tabular retrieval policy in the synthetic world."""
    flags = {
        "run.seed": seed, "run.jobs": jobs, "policy.steps": steps_flag,
        "policy.lr": lr_flag, "policy.group_size": group_size_flag,
        "policy.ablation": ablation_flag, "policy.world": world_flag,
    }

    def body(config: dict, out_dir: Path) -> list[str]:
        world_name = config["policy.world"]
        if world_name == "default":
            world = default_world()
        elif world_name == "tied":
            world = tied_accuracy_world()
        else:
            raise ConfigError(f"unknown policy.world {world_name!r}")
        cfg = TrainConfig(
            steps=config["policy.steps"],
            group_size=config["policy.group_size"],
            lr=config["policy.lr"],
            seed=config["run.seed"],
            reward=_reward_from(config),
        )
        result = train(world, cfg)
        write_curve_csv(result.curve, out_dir / "policy_curve.csv")
        final = result.final()
        summary = {
            "p_retrieve_easy": final.p_retrieve_easy,
            "p_retrieve_hard": final.p_retrieve_hard,
            "mean_reward_last": final.mean_reward,
            "steps": config["policy.steps"],
            "ablation": config["policy.ablation"],
            "world": world_name,
        }
        with open(out_dir / "policy_final.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return ["policy_curve.csv", "policy_final.json"]

    _execute("simulate-policy", out, lambda: resolve_config(config_path, flags), body)


@main.command("discriminability")
@_common_options
@click.option("--library", "library_path", required=True, type=str)
@click.option("--taxonomy", "taxonomy_name", required=True, type=str)
def discriminability_cmd(config_path, seed, jobs, out, library_path,
                         taxonomy_name):
    """Report explanation-embedding separability statistics for a library."""
    flags = {"run.seed": seed, "run.jobs": jobs}

    def body(config: dict, out_dir: Path) -> list[str]:
        taxonomy = _taxonomy_from(taxonomy_name)
        library = IntentHistoryLibrary.load(library_path, taxonomy)
        report = discriminability_report(library.entries)
        with open(out_dir / "discriminability.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return ["discriminability.json"]

    _execute("discriminability", out, lambda: resolve_config(config_path, flags), body)


@main.command("strategy-grid")
@_common_options
@click.option("--records", "records_path", required=True, type=str)
@click.option("--library", "library_path", required=True, type=str)
@click.option("--taxonomy", "taxonomy_name", required=True, type=str)
@click.option("--script", "script_flag", type=str, default=None)
@click.option("--modes", "modes_flag", type=str, default=None)
@click.option("--k-values", "k_values_flag", type=str, default=None)
@click.option("--split", "split_flag", type=str, default=None)
def strategy_grid_cmd(config_path, seed, jobs, out, records_path,
                      library_path, taxonomy_name, script_flag, modes_flag,
                      k_values_flag, split_flag):
    """Sweep retrieval modes and k over a fixed evaluation set."""
    flags = {
        "run.seed": seed, "run.jobs": jobs, "model.script": script_flag,
        "grid.modes": modes_flag, "grid.k_values": k_values_flag,
        "data.split": split_flag,
    }

    def body(config: dict, out_dir: Path) -> list[str]:
        taxonomy = _taxonomy_from(taxonomy_name)
        records = _filter_records(load_records(records_path), config)
        library = IntentHistoryLibrary.load(library_path, taxonomy)
        try:
            modes = tuple(
                StrategyMode(m.strip())
                for m in config["grid.modes"].split(",") if m.strip()
            )
        except ValueError as exc:
            raise ConfigError(f"bad grid.modes: {exc}") from None
        k_values = tuple(
            int(k) for k in config["grid.k_values"].split(",") if k.strip()
        )
        ablations = tuple(
            a.strip() for a in config["grid.ablations"].split(",") if a.strip()
        )
        grid = StrategyGrid(modes=modes, k_values=k_values,
                            reward_ablations=ablations)
        rows = run_strategy_grid(
            grid, records, taxonomy, library,
            _model_backend_factory(config),
            max_turns=config["agent.max_turns"],
            jobs=config["run.jobs"],
        )
        write_grid_csv(rows, out_dir / "grid.csv")
        return ["grid.csv"]

    _execute("strategy-grid", out, lambda: resolve_config(config_path, flags), body)


if __name__ == "__main__":
    main()
