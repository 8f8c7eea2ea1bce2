"""
Subcommand implementations: learn, sample, instantiate, render, pipeline,
validate, stats.

Each cmd_* returns data (paths, findings, tables) and raises SceneSynthError
subclasses on failure; main.py owns printing of usage and exit codes.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import Config
from constants import Emojis
from data_models import CDConfig, CameraSpec, ChainTrace, PipelineConfig, SamplerConfig
from energy import total_energy
from errors import RenderError, SceneSynthError, UsageError, ValidationError
from grammar import SAOG, build_grammar
from gtrender import CHANNELS, render_ground_truth, write_frame
from learning import collect_statistics, learn_grammar
from logger import logger
from sampler import run_chain
from scene import export_obj, instantiate_scene
from serialization import (
    cameras_from_doc, detect_kind, dump_json, layout_from_doc, layout_to_doc, load_catalog,
    load_cameras, load_grammar, load_json, load_training_scenes, parse_graph_from_doc,
    parse_graph_to_doc, sha256_file, training_scenes_from_doc, validate_file, write_grammar,
)


def _require(*paths: Optional[str]):
    missing = [p for p in paths if p is None or not os.path.exists(p)]
    if missing:
        raise UsageError(f"input path not found: {', '.join(str(p) for p in missing)}")


def _seed(seed: Optional[int]) -> int:
    return int(Config.get('SEED', 0) if seed is None else seed)


def _jobs(jobs: Optional[int]) -> int:
    return max(1, int(Config.get('JOBS', 1) if jobs is None else jobs))


def _stem(path: str) -> str:
    name = os.path.basename(path)
    return name[:-5] if name.endswith(".json") else os.path.splitext(name)[0]


def _parallel(fn, items: Sequence, jobs: int) -> list:
    """Order-preserving map; results do not depend on the worker count."""
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# ---------------------------------------------------------------------------
# learn
# ---------------------------------------------------------------------------

def trace_table(trace: List[dict]) -> pd.DataFrame:
    if not trace:
        return pd.DataFrame(columns=["iteration", "eta", "mismatch"])
    return pd.DataFrame(trace).set_index("iteration")


def cmd_learn(skeleton_path: str, scenes_path: str, out_path: str, seed: Optional[int] = None,
              jobs: Optional[int] = None, iterations: Optional[int] = None,
              alpha: Optional[float] = None) -> Tuple[str, pd.DataFrame]:
    _require(skeleton_path, scenes_path)
    skeleton = load_grammar(skeleton_path, require_sizes=False)
    scenes = load_training_scenes(scenes_path)
    if not scenes:
        raise ValidationError("no training scenes")

    cfg = CDConfig.from_config(iterations=iterations)
    rng = np.random.default_rng(_seed(seed))
    grammar, trace, stats = learn_grammar(scenes, skeleton, cfg, rng, alpha=alpha, jobs=_jobs(jobs))
    for category, count in sorted(stats.unknown_categories.items()):
        logger.warning(f"{Emojis.WARN} unknown category '{category}' skipped in {count} objects")

    write_grammar(grammar, out_path)
    table = trace_table(trace)
    if not table.empty:
        print(f"\n{Emojis.CHART} Contrastive-divergence moment mismatch")
        print(table[["eta", "mismatch"]].to_string(float_format=lambda v: f"{v:.6f}"))
    print(f"{Emojis.DISK} bundle written: {out_path}")
    return out_path, table


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------

def _trace_lines(chain: int, seed: int, trace: ChainTrace) -> List[str]:
    lines = []
    for r in trace.records:
        lines.append(json.dumps({
            "chain": chain, "seed": seed, "step": r.step, "stage": r.stage, "move": r.move,
            "delta": float(r.delta) if math.isfinite(r.delta) else None, "accepted": bool(r.accepted),
            "energy": float(r.energy),
        }, allow_nan=False))
    return lines


def sample_chains(grammar: SAOG, cfg: SamplerConfig, seed: int, n: int, jobs: int = 1):
    """n chains with seeds seed+0..seed+n-1; returns [(seed, pg, trace)] in chain order."""
    def one(i):
        chain_seed = seed + i
        pg, trace = run_chain(grammar, cfg, chain_seed)
        return chain_seed, pg, trace
    return _parallel(one, list(range(n)), jobs)


def cmd_sample(bundle_path: str, out_dir: str, n: int = 1, seed: Optional[int] = None,
               jobs: Optional[int] = None, beta: Optional[float] = None, iters: Optional[int] = None,
               staged: Optional[bool] = None, trace_path: Optional[str] = None) -> List[str]:
    _require(bundle_path)
    if n < 1:
        raise UsageError("chain count must be >= 1")
    grammar = load_grammar(bundle_path, require_sizes=True)
    cfg = SamplerConfig.from_config(beta=beta, iter_max=iters, staged=staged)
    seed = _seed(seed)

    logger.info(f"{Emojis.DICE} sampling {n} chain(s), beta={cfg.beta}, iter_max={cfg.iter_max}, staged={cfg.staged}")
    results = sample_chains(grammar, cfg, seed, n, _jobs(jobs))

    paths, trace_lines = [], []
    for i, (chain_seed, pg, trace) in enumerate(results):
        energy = total_energy(pg, grammar, cfg.beta)
        path = os.path.join(out_dir, f"scene_{i:03d}.json")
        dump_json(parse_graph_to_doc(pg, grammar, seed=chain_seed, trace=trace, energy=energy), path)
        paths.append(path)
        trace_lines.extend(_trace_lines(i, chain_seed, trace))
        status = Emojis.CHECK if trace.converged else Emojis.WARN
        logger.info(f"{status} chain {i} (seed {chain_seed}): E={energy.total:.4f}, "
                    f"{len(trace.records)} steps, acceptance {trace.acceptance_rate:.2f}, converged={trace.converged}")

    if trace_path:
        os.makedirs(os.path.dirname(trace_path) or ".", exist_ok=True)
        with open(trace_path, "w", encoding="utf-8") as f:
            f.writelines(line + "\n" for line in trace_lines)
    return paths


# ---------------------------------------------------------------------------
# instantiate
# ---------------------------------------------------------------------------

def cmd_instantiate(parse_paths: Sequence[str], catalog_path: str, out_dir: str,
                    seed: Optional[int] = None, obj: bool = False,
                    ranges: Optional[dict] = None) -> List[str]:
    _require(catalog_path, *parse_paths)
    catalog = load_catalog(catalog_path)
    ranges = Config.get('ATTRIBUTES', {}) if ranges is None else ranges
    seed = _seed(seed)

    written = []
    for i, path in enumerate(parse_paths):
        doc = load_json(path)
        if detect_kind(doc) != "parse_graph":
            raise ValidationError(f"{path}: expected a parse_graph file, got '{detect_kind(doc)}'")
        pg = parse_graph_from_doc(doc)
        layout = instantiate_scene(pg, catalog, ranges, np.random.default_rng(seed + i))
        out = os.path.join(out_dir, f"{_stem(path)}_layout.json")
        dump_json(layout_to_doc(layout), out)
        written.append(out)
        if obj:
            obj_path = os.path.join(out_dir, f"{_stem(path)}.obj")
            export_obj(layout, obj_path)
            written.append(obj_path)
        logger.info(f"{Emojis.BUILD} {path} -> {out} ({len(layout.placed)} objects)")
    return written


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------

def cmd_render(layout_paths: Sequence[str], out_dir: str, camera_path: Optional[str] = None,
               channels: Sequence[str] = CHANNELS, jobs: Optional[int] = None,
               cameras: Optional[List[CameraSpec]] = None) -> List[str]:
    """Renders every camera for every layout; explicit cameras override the layout's own."""
    _require(*layout_paths)
    if camera_path is not None:
        _require(camera_path)
        cameras = load_cameras(camera_path)
    unknown = [c for c in channels if c not in CHANNELS]
    if unknown:
        raise UsageError(f"unknown channels {unknown}; choose from {', '.join(CHANNELS)}")

    written = []
    for path in layout_paths:
        layout = layout_from_doc(load_json(path))
        specs = cameras if cameras else layout.attributes.cameras
        if not specs:
            raise RenderError(f"{path}: no cameras given and none stored in the layout")
        for k, spec in enumerate(specs):
            frame = render_ground_truth(layout, spec, jobs=_jobs(jobs))
            base = os.path.join(out_dir, f"{_stem(path)}_cam{k}")
            written.extend(write_frame(frame, base, spec, layout.label_table, channels))
            hits = int(np.count_nonzero(frame.instance))
            logger.info(f"{Emojis.CAMERA} {base}: {hits}/{frame.instance.size} pixels hit")
    return written


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def pipeline_config_from_doc(doc: dict) -> PipelineConfig:
    """The `pipeline` section of a run config; tuning sections are overlaid on Config separately."""
    section = dict((doc or {}).get("pipeline", {}) or {})
    known = {"grammar", "scenes", "catalog", "output_dir", "bundle", "n", "cameras", "channels"}
    unknown = set(section) - known
    if unknown:
        raise ValidationError(f"pipeline config: unknown keys {sorted(unknown)}")
    render = Config.get('RENDER', {}) or {}
    return PipelineConfig(
        grammar_path=section.get("grammar"),
        scenes_path=section.get("scenes"),
        catalog_path=section.get("catalog"),
        output_dir=section.get("output_dir", Config.get('OUTPUT_DIR', 'output')),
        bundle_path=section.get("bundle"),
        n=int(section.get("n", 1)),
        learning=CDConfig.from_config(),
        sampling=SamplerConfig.from_config(),
        attribute_ranges=Config.get('ATTRIBUTES', {}) or {},
        cameras=cameras_from_doc(section["cameras"]) if section.get("cameras") else [],
        channels=tuple(section.get("channels", render.get("channels", CHANNELS))),
    )


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ValidationError as e:
        raise ValidationError(f"{name}: {e}", findings=e.findings) from e
    except (SceneSynthError, OSError) as e:
        raise SceneSynthError(f"{name}: {e}") from e


def cmd_pipeline(pcfg: PipelineConfig, seed: Optional[int] = None, jobs: Optional[int] = None) -> str:
    """learn (or load) -> sample n -> instantiate -> render; returns the manifest path."""
    if pcfg.bundle_path:
        _require(pcfg.bundle_path, pcfg.catalog_path)
    else:
        _require(pcfg.grammar_path, pcfg.scenes_path, pcfg.catalog_path)
    seed, jobs = _seed(seed), _jobs(jobs)
    out = pcfg.output_dir
    artifacts: List[Tuple[str, str]] = []

    logger.info(f"{Emojis.ROCKET} pipeline: n={pcfg.n}, seed={seed}, output={out}")
    if pcfg.bundle_path:
        bundle_path = pcfg.bundle_path
    else:
        bundle_path = os.path.join(out, "bundle.json")
        _stage("learn", cmd_learn, pcfg.grammar_path, pcfg.scenes_path, bundle_path, seed=seed, jobs=jobs,
               iterations=pcfg.learning.iterations)
        artifacts.append(("bundle", bundle_path))

    def sample():
        grammar = load_grammar(bundle_path, require_sizes=True)
        paths = []
        for i, (chain_seed, pg, trace) in enumerate(sample_chains(grammar, pcfg.sampling, seed, pcfg.n, jobs)):
            path = os.path.join(out, "parse", f"scene_{i:03d}.json")
            energy = total_energy(pg, grammar, pcfg.sampling.beta)
            dump_json(parse_graph_to_doc(pg, grammar, seed=chain_seed, trace=trace, energy=energy), path)
            paths.append(path)
        return paths

    parse_paths = _stage("sample", sample)
    artifacts += [("parse_graph", p) for p in parse_paths]

    layout_paths = _stage("instantiate", cmd_instantiate, parse_paths, pcfg.catalog_path,
                          os.path.join(out, "layouts"), seed=seed, ranges=pcfg.attribute_ranges)
    artifacts += [("layout", p) for p in layout_paths]

    frames = _stage("render", cmd_render, layout_paths, os.path.join(out, "frames"),
                    channels=pcfg.channels, jobs=jobs, cameras=pcfg.cameras or None)
    artifacts += [(_frame_role(p), p) for p in frames]

    def manifest():
        entries = [{"role": role, "path": os.path.relpath(path, out).replace(os.sep, "/"),
                    "sha256": sha256_file(path)} for role, path in artifacts]
        doc = {"kind": "manifest", "version": 1, "seed": seed, "n": pcfg.n,
               "channels": list(pcfg.channels), "artifacts": entries}
        return dump_json(doc, os.path.join(out, "manifest.json"))

    path = _stage("manifest", manifest)
    logger.info(f"{Emojis.CHECK} pipeline complete: {len(artifacts)} artifacts, manifest {path}")
    return path


def _frame_role(path: str) -> str:
    name = os.path.basename(path)
    if name.endswith(".json"):
        return "frame_sidecar"
    for channel in CHANNELS:
        if f"_{channel}." in name:
            return f"frame_{channel}"
    return "frame"


# ---------------------------------------------------------------------------
# validate / stats
# ---------------------------------------------------------------------------

def cmd_validate(path: str) -> Tuple[str, List[str]]:
    _require(path)
    kind, findings = validate_file(path)
    if findings:
        for finding in findings:
            print(f"{Emojis.FAIL} {finding}")
    else:
        print(f"{Emojis.CHECK} {path}: valid {kind}")
    return kind, findings


def scene_tables(scenes) -> Dict[str, pd.DataFrame]:
    rows = [{"scene": s.scene_id, "room_type": s.room_type, "category": o.category,
             "length": o.size[0], "width": o.size[1], "height": o.size[2],
             "supported": o.support_parent is not None}
            for s in scenes for o in s.objects]
    rooms = pd.DataFrame([{"scene": s.scene_id, "room_type": s.room_type, "width": s.room_dims[0],
                           "depth": s.room_dims[1], "height": s.room_dims[2], "objects": len(s.objects)}
                          for s in scenes])
    objects = pd.DataFrame(rows, columns=["scene", "room_type", "category", "length", "width", "height", "supported"])
    per_category = (objects.groupby("category")
                    .agg(count=("scene", "size"), length=("length", "mean"), width=("width", "mean"),
                         height=("height", "mean"), supported=("supported", "mean"))
                    if not objects.empty else objects)
    return {"rooms": rooms, "categories": per_category}


def bundle_tables(grammar: SAOG) -> Dict[str, pd.DataFrame]:
    branches = []
    for nid, node in sorted(grammar.nodes.items()):
        if node.probs is not None:
            branches += [{"node": nid, "branch": child, "p": p} for child, p in zip(node.children, node.probs)]
        if node.counts is not None:
            for child, table in node.counts.items():
                branches += [{"node": nid, "branch": f"{child} x{k}", "p": p} for k, p in table.items()]
    names = ["w_con", "w_wall", "c_occ", "o_pos", "o_ori", "o_add", "g_dis", "g_ori"]
    weights = pd.DataFrame({"weight": grammar.weights.as_vector()}, index=names)
    groups = pd.DataFrame(sorted(grammar.group_occurrence.items()), columns=["group", "p"])
    priors = pd.DataFrame([{"slot": slot, "target": target, "p": p}
                           for slot, prior in sorted(grammar.address_priors.items()) for target, p in prior.items()])
    return {"branches": pd.DataFrame(branches), "weights": weights, "groups": groups, "address_priors": priors}


def cmd_stats(path: str, grammar_path: Optional[str] = None) -> Dict[str, pd.DataFrame]:
    """Summary tables for a training-scene file or a grammar bundle."""
    _require(path)
    doc = load_json(path)
    kind = detect_kind(doc)
    if kind == "training_scenes":
        scenes = training_scenes_from_doc(doc)
        tables = scene_tables(scenes)
        if grammar_path:
            _require(grammar_path)
            skeleton = load_grammar(grammar_path, require_sizes=False)
            stats = collect_statistics(scenes, skeleton)
            tables["unknown_categories"] = pd.DataFrame(sorted(stats.unknown_categories.items()),
                                                        columns=["category", "objects"])
    elif kind in ("bundle", "grammar"):
        tables = bundle_tables(build_grammar(doc, require_sizes=(kind == "bundle")))
    else:
        raise ValidationError(f"{path}: stats supports training scenes and grammar bundles, got '{kind}'")

    for name, table in tables.items():
        print(f"\n{Emojis.CHART} {name}")
        print(table.to_string() if not table.empty else "(empty)")
    return tables
