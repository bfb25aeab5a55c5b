"""Command-line interface.

Every subcommand writes into ``--out DIR`` and leaves a ``run.json`` there
holding the resolved arguments; ``earsym replay DIR/run.json`` re-executes
it.  Exit codes: 0 success, 2 input error, 3 computation error.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, geometry, io, metrics, synth
from .embedding import EmbedderSpec, FileEmbedder, embed_image
from .errors import EarSymError, InputError
from .protocols import Manifest, Entry, arrange_classes, generate_pairs, score_pairs
from .sides import resolve_sides

log = logging.getLogger("earsym")

# argument names holding input paths; resolved to absolute form in run.json
_INPUT_PATHS = ("images", "masks", "external", "manifest", "sides", "pairs", "store",
                "scores", "gallery", "probes", "source_store")


def _derive_seed(seed, *keys):
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, np.uint64)[0])


def _check_inputs(args):
    for name in _INPUT_PATHS:
        value = getattr(args, name, None)
        if value is not None and not Path(value).exists():
            raise InputError(f"--{name.replace('_', '-')}: {value} does not exist")


def _pgm_files(directory):
    return {p.stem: p for p in sorted(Path(directory).glob("*.pgm"))}


def _load_sides_into(manifest, sides_path):
    if sides_path is None:
        return manifest
    return manifest.with_sides(io.read_side_labels(sides_path))


# -- subcommands --------------------------------------------------------------

def cmd_align(args, out):
    images = _pgm_files(args.images)
    masks = _pgm_files(args.masks)
    missing = sorted(set(masks) - set(images))
    if missing:
        raise InputError(f"no image for mask(s) {missing[:5]}")
    (out / "images").mkdir(exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    lines = []
    for image_id in sorted(masks):
        img, msk, result = geometry.align(
            io.read_pgm(images[image_id]), io.read_mask(masks[image_id]), k=args.k,
            target=args.target,
        )
        io.write_pgm(out / "images" / f"{image_id}.pgm", img)
        io.write_mask(out / "masks" / f"{image_id}.pgm", msk)
        lines.append(io.dumps_json(result.to_dict(image_id)))
    (out / "alignment.jsonl").write_text("".join(line + "\n" for line in lines))
    log.info("aligned %d image(s)", len(lines))


def cmd_side(args, out):
    masks = {}
    if args.masks is not None:
        masks = {k: io.read_mask(p) for k, p in _pgm_files(args.masks).items()}
    if args.manifest is not None:
        manifest = io.load_manifest(args.manifest)
    else:
        manifest = Manifest([Entry(image_id, image_id) for image_id in sorted(masks)])
    external = io.read_side_predictions(args.external) if args.external else None
    res = resolve_sides(manifest, masks, external, positive_is_right=not args.invert_geometric)
    io.write_side_labels(out / "sides.csv", res.labels)
    io.write_json(out / "conflicts.json", res.conflicts)
    log.info("labelled %d image(s), %d conflict(s)", len(res.labels), len(res.conflicts))


def cmd_embed(args, out):
    wanted = None
    if args.manifest is not None:
        wanted = sorted(e.id for e in io.load_manifest(args.manifest).entries)
    if args.embedder == "file":
        if args.source_store is None:
            raise InputError("--embedder file needs --source-store")
        source = FileEmbedder.open(args.source_store)
        ids = wanted if wanted is not None else sorted(source.store.ids)
        vectors = np.vstack([source(i) for i in ids]) if ids else np.empty((0, source.dim))
    else:
        if args.images is None:
            raise InputError("--embedder toy needs --images")
        if args.align and args.masks is None:
            raise InputError("--align needs --masks")
        spec = EmbedderSpec(seed=args.seed, dim=args.dim)
        images = _pgm_files(args.images)
        masks = _pgm_files(args.masks) if args.masks else {}
        ids = wanted if wanted is not None else sorted(images)
        rows = []
        for image_id in ids:
            if image_id not in images:
                raise InputError(f"no image file for {image_id!r}")
            mask = io.read_mask(masks[image_id]) if args.align else None
            rows.append(embed_image(io.read_pgm(images[image_id]), mask, spec,
                                    use_alignment=args.align, k=args.k))
        vectors = np.vstack(rows) if rows else np.empty((0, args.dim))
    io.store_embeddings(out, io.EmbeddingStore(tuple(ids), vectors))
    log.info("stored %d embedding(s)", len(ids))


def cmd_pairs(args, out):
    manifest = _load_sides_into(io.load_manifest(args.manifest), args.sides)
    pairs = generate_pairs(manifest, args.protocol, side=args.side,
                           max_impostors=args.max_impostors, seed=args.seed)
    io.write_pairs(out / "pairs.csv", pairs)
    summary = {"protocol": pairs.protocol.value, "n_pairs": len(pairs),
               "n_genuine": int(pairs.genuine.sum()),
               "n_impostor": int((~pairs.genuine).sum())}
    io.write_json(out / "pairs.json", summary)
    log.info("%d pair(s)", len(pairs))


def cmd_score(args, out):
    scores = score_pairs(io.read_pairs(args.pairs), io.load_embeddings(args.store))
    io.write_scores(out / "scores.csv", scores)


def _report_for(scores, args, seed):
    relations = set(np.unique(scores.relation).tolist())
    if {0, 1} <= relations:
        return synth.symmetry_report(scores, args.fmr, args.bootstrap, args.level, seed), None
    rep = metrics.compute_report(scores.genuine_scores, scores.impostor_scores, args.fmr,
                                 args.bootstrap, args.level, seed, protocol=scores.protocol)
    return rep, scores


def cmd_metrics(args, out):
    report, single = _report_for(io.read_scores(args.scores), args, args.seed)
    io.emit_report(report, out, svg=args.svg, scores=single)


def cmd_arrange(args, out):
    manifest = _load_sides_into(io.load_manifest(args.manifest), args.sides)
    io.write_classes(out, arrange_classes(manifest, args.mode))


def _synth_config(args):
    return synth.SynthConfig(
        n_subjects=args.n_subjects, imgs_per_side=args.imgs_per_side, dim=args.dim,
        delta=args.delta, epsilon=args.epsilon, seed=args.seed,
    ).validate()


def cmd_synth(args, out):
    cfg = _synth_config(args)
    manifest, store = synth.gen_subjects(cfg)
    io.write_manifest(out / "manifest.csv", manifest)
    io.store_embeddings(out, store)
    truth = []
    if args.with_masks:
        (out / "masks").mkdir(exist_ok=True)
        (out / "images").mkdir(exist_ok=True)
    for index, entry in enumerate(manifest.entries):
        rotation = 0.0
        if args.with_masks:
            rng = np.random.default_rng(_derive_seed(cfg.seed, 1, index))
            rotation = float(rng.uniform(-args.max_rotation, args.max_rotation))
            mask, _ = synth.gen_mask(entry.side, rotation, args.canvas,
                                     seed=_derive_seed(cfg.seed, 2, index))
            io.write_mask(out / "masks" / f"{entry.id}.pgm", mask)
            io.write_pgm(out / "images" / f"{entry.id}.pgm",
                         synth.render_ear_image(mask, seed=_derive_seed(cfg.seed, 3, index)))
        truth.append((entry.id, entry.subject, entry.side.value, rotation))
    io.write_ground_truth(out / "ground_truth.csv", truth)


def cmd_experiment(args, out):
    cfg = _synth_config(args)
    # float32 matches scoring embeddings read back from the EARB store
    report = synth.run_symmetry_experiment(cfg, args.fmr, args.bootstrap, args.level,
                                           store_dtype=np.float32)
    io.emit_report(report, out, svg=args.svg)
    log.info("d' same %.4f, opposite %.4f, gap %.4f", report.same_side.dprime,
             report.opposite_side.dprime, report.dprime_gap)


def cmd_identify(args, out):
    store = io.load_embeddings(args.store)

    def triples(path):
        return [(e.id, e.subject, store.matrix_for([e.id])[0])
                for e in io.load_manifest(path).entries]

    gallery, probes = triples(args.gallery), triples(args.probes)
    curve = metrics.rank_curve(gallery, probes, args.k)
    io.write_json(out / "rank.json", {
        "k": args.k, "rank_k": curve[-1], "curve": curve,
        "n_gallery": len(gallery), "n_probes": len(probes),
    })


# -- parser -------------------------------------------------------------------

def _add_synth_flags(p):
    p.add_argument("--n-subjects", type=int, default=200)
    p.add_argument("--imgs-per-side", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--delta", type=float, default=0.4)
    p.add_argument("--epsilon", type=float, default=0.3)


def _add_metric_flags(p):
    p.add_argument("--fmr", type=float, default=metrics.DEFAULT_FMR,
                   help="FMR target for the FNMR operating point")
    p.add_argument("--bootstrap", type=int, default=0,
                   help="bootstrap replicates for confidence intervals (0 = none)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--svg", action="store_true", help="also write a histogram SVG")


def build_parser():
    parser = argparse.ArgumentParser(prog="earsym", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        return p

    p = add("align", cmd_align, "rotate and crop images by their ear masks")
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--k", type=int, default=geometry.DEFAULT_K)
    p.add_argument("--target", type=int, default=geometry.TARGET_MIN_SIDE)

    p = add("side", cmd_side, "resolve left/right labels")
    p.add_argument("--manifest")
    p.add_argument("--masks")
    p.add_argument("--external", help="CSV id,side with predictions")
    p.add_argument("--invert-geometric", action="store_true",
                   help="map positive column skew to LEFT instead of RIGHT")

    p = add("embed", cmd_embed, "compute flip-fused embeddings into an EARB store")
    p.add_argument("--embedder", choices=["toy", "file"], default="toy")
    p.add_argument("--images")
    p.add_argument("--masks")
    p.add_argument("--manifest")
    p.add_argument("--source-store")
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--align", action="store_true")
    p.add_argument("--k", type=int, default=geometry.DEFAULT_K)

    p = add("pairs", cmd_pairs, "generate verification pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sides", help="side labels CSV overriding the manifest")
    p.add_argument("--protocol", choices=["same-side", "opposite-side", "all"], default="all")
    p.add_argument("--side", choices=["L", "R"], help="restrict same-side pairs to one side")
    p.add_argument("--max-impostors", type=int)

    p = add("score", cmd_score, "cosine-score a pair set")
    p.add_argument("--pairs", required=True)
    p.add_argument("--store", required=True)

    p = add("metrics", cmd_metrics, "verification metrics from a score set")
    p.add_argument("--scores", required=True)
    _add_metric_flags(p)

    p = add("arrange", cmd_arrange, "assign training classes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sides")
    p.add_argument("--mode", choices=["single", "split"], default="single")

    p = add("synth", cmd_synth, "write a synthetic dataset")
    _add_synth_flags(p)
    p.add_argument("--with-masks", action="store_true", help="also render masks and images")
    p.add_argument("--canvas", type=int, default=128)
    p.add_argument("--max-rotation", type=float, default=30.0)

    p = add("experiment", cmd_experiment, "same- vs opposite-side symmetry experiment")
    p.add_argument("name", choices=["symmetry"])
    _add_synth_flags(p)
    _add_metric_flags(p)

    p = add("identify", cmd_identify, "closed-set rank-k identification")
    p.add_argument("--store", required=True)
    p.add_argument("--gallery", required=True, help="manifest CSV of gallery images")
    p.add_argument("--probes", required=True, help="manifest CSV of probe images")
    p.add_argument("--k", type=int, default=1)

    p = sub.add_parser("replay", help="re-run a subcommand from its run.json")
    p.add_argument("run_json")
    p.add_argument("--out", help="write to this directory instead of the recorded one")
    p.set_defaults(func=None)
    return parser


def _resolved(args):
    config = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    for name in _INPUT_PATHS + ("out",):
        if config.get(name) is not None:
            config[name] = str(Path(config[name]).resolve())
    return config


def execute(args):
    _check_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    args.func(args, out)
    io.write_json(out / "run.json", {"earsym_version": __version__, "args": _resolved(args)})


def replay(run_json, out=None):
    record = io.read_json(run_json)
    parser = build_parser()
    stored = record["args"]
    command = stored["command"]
    argv = [command]
    if command == "experiment":
        argv.append(stored["name"])
    argv += ["--out", out or stored["out"]]
    args = parser.parse_args(argv + _required_stub(command, stored))
    for key, value in stored.items():
        if key not in ("out", "command"):
            setattr(args, key, value)
    if out is not None:
        args.out = out
    execute(args)


def _required_stub(command, stored):
    # satisfy argparse's required flags; real values are overwritten afterwards
    required = {"align": ["images", "masks"], "pairs": ["manifest"], "score": ["pairs", "store"],
                "metrics": ["scores"], "arrange": ["manifest"],
                "identify": ["store", "gallery", "probes"]}.get(command, [])
    argv = []
    for name in required:
        argv += [f"--{name.replace('_', '-')}", str(stored[name])]
    return argv


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            replay(args.run_json, args.out)
        else:
            execute(args)
    except EarSymError as exc:
        print(f"earsym: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"earsym: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
