"""``trajsynth`` command line.

Every subcommand resolves its parameters as defaults < ``--config`` file <
explicit flags, writes its outputs into ``--out`` and records the resolved
parameters in ``<out>/run.json``. ``trajsynth rerun <run.json> --out DIR``
repeats a run exactly.

Exit codes: 0 success, 2 usage, 3 invalid input, 4 runtime or numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import TrajsynthError, ValidationError

log = logging.getLogger("trajsynth")

MOBILITY_MODELS = ("rwp", "gm", "mrwp", "mgm")

# Resolved parameters per command; keys double as flag names (underscores -> dashes).
DEFAULTS: dict[str, dict] = {
    "gen-map": {
        "side": 640.0,
        "cell_size": 10.0,
        "origin_x": 0.0,
        "origin_y": 0.0,
        "grid_pitch": 160.0,
        "diagonal_count": 2,
        "major_fraction": 0.35,
        "png_scale": 1,
    },
    "gen-traj": {
        "map": None,
        "model": "gt",
        "count": 100,
        "ckpt": None,
        "speed": "matched",
        "horizon_steps": 64,
        "major_cost": 1.0,
        "minor_cost": 3.0,
        "threshold": 0.5,
        "batch_size": 64,
    },
    "train": {
        "map": [],
        "traj": [],
        "steps": 1000,
        "T": 100,
        "beta_start": 1e-3,
        "beta_end": 0.2,
        "base_width": 8,
        "depth": 2,
        "groups": 8,
        "attention": True,
        "lr": 1e-4,
        "batch_size": 16,
        "augment": True,
        "log_every": 100,
    },
    "evaluate": {
        "generated": None,
        "reference": None,
        "map": None,
        "tau": 20.0,
        "n_proj": 500,
    },
    "netsim": {
        "traj_source": "mrwp",
        "policy": "maxsinr",
        "policy_cmd": None,
        "trajs": None,
        "map": None,
        "ckpt": None,
        "episode": None,
        "users": 100,
        "horizon": 64,
        "spacing": 500.0,
        "handover_penalty": 0.0,
    },
    "render": {
        "input": None,
        "map": None,
        "png_scale": 1,
    },
    "pipeline": {
        "map": None,
        "reference": None,
        "ckpt": None,
        "count": 1000,
        "methods": ["rwp", "gm", "mrwp", "mgm"],
        "speed": "matched",
        "horizon_steps": 64,
        "tau": 20.0,
        "n_proj": 500,
    },
}

# -- helpers -------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_run(out: Path, command: str, params: dict, outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "params": params,
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    (out / "run.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise ValidationError("--threads must be at least 1")
    import numba
    import torch

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    torch.set_num_threads(n)


def _extent_of(map_path):
    from .geodata import load_map

    return load_map(map_path).extent


def _require(params: dict, *keys: str) -> None:
    missing = [k for k in keys if params.get(k) in (None, [], "")]
    if missing:
        raise ValidationError("missing required input: " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _mobility_cfg(model: str, extent, speed: str, horizon: int):
    from .mobility import MobilityConfig, speed_matched_config

    if speed == "matched":
        return speed_matched_config(model, extent, horizon_steps=horizon)
    if speed == "pedestrian":
        return MobilityConfig(model=model, horizon_steps=horizon)
    raise ValidationError(f"unknown speed profile {speed!r} (matched, pedestrian)")


def _mobility_trajs(model: str, street_map, count: int, seed: int, speed: str, horizon: int):
    from . import mobility
    from .raster import rasterize_map, street_mask

    cfg = _mobility_cfg(model, street_map.extent, speed, horizon)
    mask = street_mask(rasterize_map(street_map))
    return mobility.generate(cfg, count, seed, extent=street_map.extent, mask=mask)


def _diffusion_trajs(ckpt, street_map, count: int, seed: int, threshold: float, batch_size: int):
    """Sample rasters and trace each into a trajectory; blank samples are skipped."""
    from .diffusion import generate, load_checkpoint
    from .raster import RasterGrid, image_to_trajectory, rasterize_map

    if ckpt is None:
        raise ValidationError("diffusion generation needs --ckpt")
    model, sched, _ = load_checkpoint(ckpt)
    samples = generate(model, rasterize_map(street_map), sched, count, seed=seed, batch_size=batch_size)
    out, blank = [], 0
    for s in samples:
        try:
            out.append(image_to_trajectory(RasterGrid(street_map.extent, s), threshold))
        except ValidationError:
            blank += 1
    if blank:
        log.warning("%d of %d samples were blank after thresholding", blank, count)
    return out, blank


# -- commands ------------------------------------------------------------------


def cmd_gen_map(p: dict, out: Path) -> list[Path]:
    from .geodata import Extent, save_map, synth_map
    from .raster import rasterize_map, save_png

    extent = Extent(p["origin_x"], p["origin_y"], p["side"], p["cell_size"])
    m = synth_map(p["seed"], extent, p["grid_pitch"], p["diagonal_count"], p["major_fraction"])
    grid = rasterize_map(m)
    save_map(m, out / "map.json")
    shade = np.maximum(grid.data[0], 0.6 * grid.data[1])
    save_png(shade, out / "map.png", p["png_scale"])
    return [out / "map.json", out / "map.png"]


def cmd_gen_traj(p: dict, out: Path) -> list[Path]:
    from .geodata import load_map, save_trajectories, synth_trajectories

    _require(p, "map")
    if p["count"] < 1:
        raise ValidationError("--count must be positive")
    m = load_map(p["map"])
    model = p["model"]
    if model == "gt":
        trajs = synth_trajectories(m, p["count"], p["seed"], p["major_cost"], p["minor_cost"])
    elif model in MOBILITY_MODELS:
        trajs = _mobility_trajs(model, m, p["count"], p["seed"], p["speed"], p["horizon_steps"])
    elif model == "diffusion":
        trajs, _ = _diffusion_trajs(p["ckpt"], m, p["count"], p["seed"], p["threshold"], p["batch_size"])
    else:
        raise ValidationError(f"unknown model {model!r}")
    save_trajectories(trajs, out / "trajectories.csv")
    return [out / "trajectories.csv"]


def cmd_train(p: dict, out: Path) -> list[Path]:
    from .diffusion import DenoiserConfig, OptConfig, build_denoiser, make_schedule, save_checkpoint, train
    from .diffusion.training import TrainingSet
    from .geodata import Dataset, Split, load_map, load_trajectories

    _require(p, "map", "traj")
    if len(p["map"]) != len(p["traj"]):
        raise ValidationError("give one --traj file per --map")
    if p["steps"] < 1:
        raise ValidationError("--steps must be positive")
    entries = []
    for mp, tp in zip(p["map"], p["traj"]):
        m = load_map(mp)
        entries.append((m, load_trajectories(tp, m.extent)))
    data = TrainingSet.from_dataset(Dataset(entries, Split.TRAIN))
    sched = make_schedule(p["T"], p["beta_start"], p["beta_end"])
    cfg = DenoiserConfig(
        base_width=p["base_width"], depth=p["depth"], groups=p["groups"], attention=p["attention"]
    )
    model = build_denoiser(cfg, seed=p["seed"])
    opt = OptConfig(lr=p["lr"], batch_size=p["batch_size"], augment=p["augment"])
    result = train(model, data, sched, opt, p["steps"], p["seed"], p["log_every"], log)
    save_checkpoint(out / "model.ckpt", model, sched, {"steps": p["steps"], "seed": p["seed"]})
    (out / "loss.csv").write_text(result.loss_csv())
    return [out / "model.ckpt", out / "loss.csv"]


def cmd_evaluate(p: dict, out: Path) -> list[Path]:
    from .geodata import load_trajectories
    from .metrics import evaluate_sets

    _require(p, "generated", "reference", "map")
    extent = _extent_of(p["map"])
    gen = load_trajectories(p["generated"], extent)
    ref = load_trajectories(p["reference"], extent)
    if not gen or not ref:
        raise ValidationError("both trajectory sets must be non-empty")
    rep = evaluate_sets(gen, ref, extent, p["tau"], p["n_proj"], p["seed"])
    (out / "report.json").write_text(rep.to_json() + "\n")
    return [out / "report.json"]


def _episode_cfg(p: dict):
    from .netsim import EpisodeConfig

    base = {}
    if p["episode"]:
        base = _read_json(p["episode"])
    base.setdefault("n_users", p["users"])
    base.setdefault("horizon_steps", p["horizon"])
    base.setdefault("spacing", p["spacing"])
    base.setdefault("handover_penalty", p["handover_penalty"])
    return EpisodeConfig.from_dict(base)


def extend_to_horizon(trajs, steps: int):
    """Walk each path back and forth until it has ``steps`` points."""
    from .geodata import Trajectory

    out = []
    for tr in trajs:
        pts = tr.points
        if len(pts) >= steps:
            out.append(tr)
            continue
        cycle = np.concatenate([pts, pts[-2:0:-1]]) if len(pts) > 1 else pts
        reps = -(-steps // len(cycle))
        out.append(Trajectory(np.tile(cycle, (reps, 1))[:steps], tr.point_interval, tr.traj_id))
    return out


def cmd_netsim(p: dict, out: Path) -> list[Path]:
    from .geodata import load_map, load_trajectories, synth_map
    from .netsim import POLICIES, ExternalPolicy, run_episode

    cfg = _episode_cfg(p)
    source = p["traj_source"]
    if p["map"]:
        m = load_map(p["map"])
        if m.extent != cfg.extent:
            cfg = cfg.with_(extent=m.extent)
    else:
        m = synth_map(p["seed"], cfg.extent)
    seed = p["seed"]
    if source == "file":
        _require(p, "trajs")
        trajs = load_trajectories(p["trajs"], cfg.extent)
    elif source in MOBILITY_MODELS:
        trajs = _mobility_trajs(source, m, cfg.n_users, seed, "pedestrian", cfg.horizon_steps)
    elif source == "diffusion":
        trajs, _ = _diffusion_trajs(p["ckpt"], m, cfg.n_users, seed, 0.5, 64)
        steps = int(np.ceil(cfg.horizon_steps * cfg.step_seconds))
        trajs = extend_to_horizon(trajs, steps)
    else:
        raise ValidationError(f"unknown trajectory source {source!r}")

    name = p["policy"]
    if name == "extern":
        _require(p, "policy_cmd")
        policy = ExternalPolicy(p["policy_cmd"], cfg.extern_candidates)
    elif name in POLICIES:
        policy = POLICIES[name]()
    else:
        raise ValidationError(f"unknown policy {name!r}")
    try:
        result = run_episode(trajs, policy, cfg, seed)
    finally:
        if name == "extern":
            policy.close()
    (out / "kpi.csv").write_text(result.kpi_csv())
    (out / "summary.json").write_text(result.summary_json() + "\n")
    (out / "episode.json").write_text(cfg.to_json() + "\n")
    return [out / "kpi.csv", out / "summary.json", out / "episode.json"]


def cmd_render(p: dict, out: Path) -> list[Path]:
    from .geodata import load_map, load_trajectories
    from .metrics import heatmap_from
    from .raster import rasterize_map, read_pgm, save_png

    _require(p, "input")
    src = Path(p["input"])
    if not src.is_file():
        raise ValidationError(f"cannot read {src}")
    suffix = src.suffix.lower()
    if suffix == ".json":
        grid = rasterize_map(load_map(src))
        img = np.maximum(grid.data[0], 0.6 * grid.data[1])
    elif suffix == ".csv":
        _require(p, "map")
        h = heatmap_from(load_trajectories(src, _extent_of(p["map"])), _extent_of(p["map"]))
        peak = h.data.max()
        img = h.data / peak if peak > 0 else np.zeros_like(h.data)
    elif suffix == ".pgm":
        img = read_pgm(src)
    else:
        raise ValidationError(f"unsupported input type {suffix!r} (json, csv, pgm)")
    target = out / (src.stem + ".png")
    save_png(img, target, p["png_scale"])
    return [target]


def cmd_pipeline(p: dict, out: Path) -> list[Path]:
    from .geodata import Extent, load_map, load_trajectories, synth_map, synth_trajectories
    from .metrics import evaluate_sets

    if p["count"] < 1:
        raise ValidationError("--count must be positive")
    methods = list(p["methods"])
    allowed = set(MOBILITY_MODELS) | {"diffusion", "gt", "reference"}
    bad = [mth for mth in methods if mth not in allowed]
    if bad:
        raise ValidationError(f"unknown methods {bad}; choose from {sorted(allowed)}")
    if "diffusion" in methods and not p["ckpt"]:
        raise ValidationError("method 'diffusion' needs --ckpt")

    seeds = np.random.SeedSequence(p["seed"]).generate_state(3)
    m = load_map(p["map"]) if p["map"] else synth_map(int(p["seed"]), Extent())
    if p["reference"]:
        ref = load_trajectories(p["reference"], m.extent)
    else:
        ref = synth_trajectories(m, p["count"], int(seeds[0]))
    rows = []
    for k, method in enumerate(methods):
        mseed = int(np.random.SeedSequence([int(seeds[1]), k]).generate_state(1)[0])
        if method in MOBILITY_MODELS:
            gen = _mobility_trajs(method, m, p["count"], mseed, p["speed"], p["horizon_steps"])
        elif method == "gt":
            gen = synth_trajectories(m, p["count"], mseed)
        elif method == "reference":
            gen = ref
        else:
            gen, _ = _diffusion_trajs(p["ckpt"], m, p["count"], mseed, 0.5, 64)
            if not gen:
                raise TrajsynthError("every diffusion sample was blank")
        log.info("evaluating %s", method)
        rep = evaluate_sets(gen, ref, m.extent, p["tau"], p["n_proj"], int(seeds[2]))
        rows.append({"method": method, **rep.to_dict()})
    (out / "report.json").write_text(json.dumps({"rows": rows}, sort_keys=True, indent=2) + "\n")
    lines = ["method,edr,dtw,cosine,sliced_wasserstein,n_generated"]
    for r in rows:
        lines.append(
            f"{r['method']},{r['edr_mean']:.6f},{r['dtw_mean']:.6f},{r['cosine']:.6f},"
            f"{r['sliced_wasserstein']:.6f},{r['n_generated']}"
        )
    (out / "report.csv").write_text("\n".join(lines) + "\n")
    return [out / "report.json", out / "report.csv"]


COMMANDS = {
    "gen-map": cmd_gen_map,
    "gen-traj": cmd_gen_traj,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "netsim": cmd_netsim,
    "render": cmd_render,
    "pipeline": cmd_pipeline,
}


# -- argument handling -----------------------------------------------------------


def _read_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"cannot read {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return data


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _flag_type(value):
    if isinstance(value, bool):
        return _bool
    if isinstance(value, int):
        return int
    if isinstance(value, float):
        return float
    return str


CHOICES = {
    ("gen-traj", "model"): ("gt", "diffusion") + MOBILITY_MODELS,
    ("gen-traj", "speed"): ("matched", "pedestrian"),
    ("pipeline", "speed"): ("matched", "pedestrian"),
    ("netsim", "traj_source"): ("file", "diffusion") + MOBILITY_MODELS,
    ("netsim", "policy"): ("maxsinr", "greedy", "extern"),
}

ALIASES = {
    ("evaluate", "generated"): ("--gen",),
    ("evaluate", "reference"): ("--ref",),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="global seed (default 0)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (default: all cores)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config", help="JSON parameters (or a run.json); flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="trajsynth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in DEFAULTS.items():
        sp = sub.add_parser(name, parents=[common])
        for key, value in defaults.items():
            flags = ("--" + key.replace("_", "-"),) + ALIASES.get((name, key), ())
            kw = {"dest": key, "default": argparse.SUPPRESS}
            if (name, key) in CHOICES:
                kw["choices"] = CHOICES[(name, key)]
            if isinstance(value, list):
                sp.add_argument(*flags, nargs="+", **kw)
            else:
                sp.add_argument(*flags, type=_flag_type(value), **kw)

    rr = sub.add_parser("rerun", help="repeat a run from its run.json")
    rr.add_argument("manifest")
    rr.add_argument("--out", required=True)
    rr.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve(command: str, args: argparse.Namespace) -> dict:
    params = {"seed": 0, "threads": None, **DEFAULTS[command]}
    if getattr(args, "config", None):
        raw = _read_json(args.config)
        if "command" in raw and "params" in raw:
            if raw["command"] != command:
                raise ValidationError(f"{args.config} records a '{raw['command']}' run, not '{command}'")
            raw = raw["params"]
        unknown = set(raw) - set(params)
        if unknown:
            raise ValidationError(f"unknown config keys for {command}: {sorted(unknown)}")
        params.update(raw)
    for key in params:
        if key in vars(args):
            params[key] = getattr(args, key)
    return params


def run(command: str, params: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    _set_threads(params.get("threads"))
    outputs = COMMANDS[command](params, out)
    _write_run(out, command, params, outputs)
    for path in outputs:
        log.info("wrote %s", path)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "rerun":
            manifest = _read_json(args.manifest)
            if manifest.get("command") not in COMMANDS or not isinstance(manifest.get("params"), dict):
                raise ValidationError(f"{args.manifest} is not a run manifest")
            return run(manifest["command"], manifest["params"], Path(args.out))
        return run(args.command, resolve(args.command, args), Path(args.out))
    except ValidationError as exc:
        print(f"trajsynth: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except TrajsynthError as exc:
        print(f"trajsynth: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"trajsynth: error: {exc}", file=sys.stderr)
        return ValidationError.exit_code
    except (OSError, ArithmeticError, RuntimeError) as exc:
        print(f"trajsynth: error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
