"""Command line entry point.

Subcommands: simulate | run | score | eval | serve | report.
Exit codes: 0 success, 1 usage error, 2 runtime error. Log level comes from
the HAT_LOG environment variable (default WARNING).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import __version__

log = logging.getLogger("hat")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_config_file(path: str) -> dict:
    if path.endswith(".toml"):
        import tomli

        with open(path, "rb") as fh:
            return tomli.load(fh)
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _world_config(args) -> "WorldConfig":
    from .simulator import WorldConfig

    raw = _load_config_file(args.config) if args.config else {}
    raw = dict(raw.get("world", raw))
    if args.seed is not None:
        raw["seed"] = args.seed
    return WorldConfig(**raw)


def _load_world(run_dir: str):
    from .simulator import WorldConfig, generate_world

    path = os.path.join(run_dir, "world.json")
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"{path} not found; create the run directory with `hat simulate`"
        )
    with open(path, "r", encoding="utf-8") as fh:
        cfg = WorldConfig(**json.load(fh))
    return cfg, generate_world(cfg)


def _parse_alpha(specs: list[str]) -> dict[str, float]:
    alpha: dict[str, float] = {}
    for spec in specs or []:
        term, _, value = spec.partition("=")
        alpha[term.strip()] = float(value)
    return alpha


def _run_config(args, world_seed: int) -> "RunConfig":
    from .acquisition import ABE_STRATEGIES, AcquisitionConfig
    from .loop import RunConfig

    seed = args.seed if args.seed is not None else world_seed
    variant = ABE_STRATEGIES.get(args.acquisition, "n_best")
    acquisition = AcquisitionConfig(
        variant=variant,
        n=args.n_best,
        alpha=_parse_alpha(args.alpha) or None,
        beam_width=args.beam_width,
        max_len=args.max_len,
        k_mult=args.k_mult,
        seed=seed,
        factorized=not args.no_factorized,
    )
    fractions = tuple(float(f) for f in args.fractions.split(","))
    return RunConfig(
        strategy=args.acquisition,
        acquisition=acquisition,
        fractions=fractions,
        seed=seed,
        workers=args.workers,
        mode=args.mode,
    )


# --- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .core import write_examples_jsonl
    from .simulator import generate_world

    cfg = _world_config(args)
    bundle, _ = generate_world(cfg)
    os.makedirs(os.path.join(args.out, "data"), exist_ok=True)
    with open(os.path.join(args.out, "world.json"), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(cfg), fh, indent=2, sort_keys=True)
    data = os.path.join(args.out, "data")
    write_examples_jsonl(os.path.join(data, "d_source.jsonl"), bundle.d_source)
    write_examples_jsonl(os.path.join(data, "d_mt.jsonl"), bundle.d_mt)
    write_examples_jsonl(os.path.join(data, "test_source.jsonl"), bundle.test_source)
    write_examples_jsonl(os.path.join(data, "test_target.jsonl"), bundle.test_target)
    with open(os.path.join(data, "alignment.json"), "w", encoding="utf-8") as fh:
        json.dump(dict(bundle.alignment), fh, indent=2, sort_keys=True)
    print(
        f"world written to {args.out}: {len(bundle.d_source)} pool utterances, "
        f"{cfg.n_lfs} LF templates, seed {cfg.seed}"
    )
    return 0


def _ht_provider(args, run_cfg, oracles):
    if args.mode == "simulated":
        return None  # run_hat defaults to the simulated annotators
    from .client import AnnotationClient, HumanServiceHt

    token = args.token or os.environ.get("HAT_TOKEN")
    if not args.service_url or not token:
        raise ValueError(
            "human-service mode needs --service-url and --token (or HAT_TOKEN)"
        )
    client = AnnotationClient(args.service_url, token)
    return HumanServiceHt(
        client,
        target_language=oracles.config.target_language,
        poll_interval=args.poll_interval,
        timeout=args.timeout,
    )


def cmd_run(args) -> int:
    from .core import BudgetSchedule
    from .experiments import compare_strategies
    from .loop import resume_run, run_hat

    world_cfg, (bundle, oracles) = _load_world(args.dir)
    run_cfg = _run_config(args, world_cfg.seed)

    if args.compare or args.seeds > 1:
        strategies = [args.acquisition] + (args.compare or [])
        seeds = list(range(args.seeds))
        report = compare_strategies(
            world_cfg, run_cfg, strategies, seeds, os.path.join(args.dir, "compare")
        )
        for strategy in strategies:
            r = report["results"][strategy]
            line = f"{strategy}: mean final accuracy {r['mean_final']:.4f}"
            if "p_primary_greater" in r:
                line += (
                    f" (gap to {strategies[0]}: {r['mean_gap_to_primary']:+.4f}, "
                    f"one-sided paired p={r['p_primary_greater']:.4g})"
                )
            print(line)
        return 0

    schedule = BudgetSchedule(
        pool_size=len(bundle.d_source), cumulative_fractions=run_cfg.fractions
    )
    provider = _ht_provider(args, run_cfg, oracles)
    if args.resume:
        history = resume_run(args.dir, schedule, run_cfg, oracles, ht_provider=provider)
    else:
        if os.path.exists(os.path.join(args.dir, "metrics.csv")):
            raise FileExistsError(
                f"{args.dir}/metrics.csv exists; use --resume or a fresh directory"
            )
        history = run_hat(
            bundle, schedule, run_cfg, oracles, args.dir, ht_provider=provider
        )
    final = history[-1].metrics
    print(
        f"finished round {history[-1].round_index}: "
        f"target accuracy {final['accuracy_target']:.4f}, "
        f"source accuracy {final['accuracy_source']:.4f}"
    )
    return 0


def cmd_score(args) -> int:
    from .core import BudgetSchedule, budget_for_round, checkpoint_load
    from .loop import build_round_models
    from .acquisition import score_pool, write_scores_csv
    from .loop import _embed_all  # reuse the worker-aware embedding pass

    world_cfg, (bundle, oracles) = _load_world(args.dir)
    run_cfg = _run_config(args, world_cfg.seed)
    ckpt = os.path.join(args.dir, "checkpoints", f"round_{args.round}.json")
    if os.path.exists(ckpt):
        state, bundle = checkpoint_load(ckpt)
    else:
        from .core import RoundState

        state = RoundState(
            round_index=0,
            selected_ids=(),
            remaining_pool=tuple(ex.utterance.id for ex in bundle.d_source),
            metrics={},
            rng_seed=run_cfg.seed,
        )
    schedule = BudgetSchedule(
        pool_size=len(bundle.d_source), cumulative_fractions=run_cfg.fractions
    )
    if not state.remaining_pool:
        raise ValueError("pool is exhausted; nothing to score")
    if state.round_index + 1 <= schedule.num_rounds:
        cumulative, k_q = budget_for_round(schedule, state.round_index + 1)
    else:
        # schedule exhausted: score as if one more round of the final size ran
        _, last_increment = budget_for_round(schedule, schedule.num_rounds)
        k_q = min(last_increment, len(state.remaining_pool))
        cumulative = len(state.selected_ids) + k_q
    embeddings = _embed_all(bundle.d_source, run_cfg.embed_dim, run_cfg.workers)
    models = build_round_models(
        bundle, state, run_cfg, oracles, embeddings, k_q, cumulative
    )
    src_by_id = bundle.source_by_id()
    pool = [src_by_id[sid] for sid in state.remaining_pool]
    scores = score_pool(run_cfg.strategy, pool, models, run_cfg.acquisition)
    out = args.out or os.path.join(args.dir, "scores_preview.csv")
    write_scores_csv(out, scores, [])
    if args.export_features:
        from .geometry import export_feature_matrix

        export_feature_matrix(args.export_features, embeddings)
        print(f"feature matrix -> {args.export_features}")
    print(f"scored {len(pool)} pool utterances with {run_cfg.strategy} -> {out}")
    return 0


def cmd_eval(args) -> int:
    from .core import checkpoint_load, merge_training_set
    from .parser import evaluate_accuracy, train_parser

    _, (bundle, _) = _load_world(args.dir)
    ckpt_dir = os.path.join(args.dir, "checkpoints")
    rounds = sorted(
        int(f[len("round_") : -len(".json")])
        for f in os.listdir(ckpt_dir)
        if f.startswith("round_") and f.endswith(".json")
    ) if os.path.isdir(ckpt_dir) else []
    if rounds:
        _, bundle = checkpoint_load(os.path.join(ckpt_dir, f"round_{rounds[-1]}.json"))
    parser = train_parser(merge_training_set(bundle))
    result = {
        "round": rounds[-1] if rounds else 0,
        "accuracy_target": evaluate_accuracy(parser, bundle.test_target),
        "accuracy_source": evaluate_accuracy(parser, bundle.test_source),
        "training_size": len(merge_training_set(bundle)),
    }
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    token = args.token or os.environ.get("HAT_TOKEN")
    if not token:
        raise ValueError("serve needs --token (or HAT_TOKEN)")
    app = create_app(args.dir, token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_report(args) -> int:
    import csv as _csv

    out: dict = {}
    metrics = os.path.join(args.dir, "metrics.csv")
    if os.path.exists(metrics):
        with open(metrics, "r", encoding="utf-8") as fh:
            rounds = list(_csv.DictReader(fh))
        for row in rounds:  # JS is stored raw (bits); published tables use x100
            row["js_x100"] = repr(100.0 * float(row["js"]))
        out["rounds"] = rounds
    compare = os.path.join(args.dir, "compare", "report.json")
    if os.path.exists(compare):
        with open(compare, "r", encoding="utf-8") as fh:
            out["comparison"] = json.load(fh)
    if not out:
        raise FileNotFoundError(f"nothing to report under {args.dir}")
    target = args.out or os.path.join(args.dir, "report.json")
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
    print(f"report written to {target}")
    return 0


# --- argument wiring ---------------------------------------------------------


def _add_acquisition_flags(p: argparse.ArgumentParser) -> None:
    from .acquisition import ALL_STRATEGIES

    p.add_argument(
        "--acquisition",
        default="abe-nbest",
        choices=list(ALL_STRATEGIES),
        help="selection strategy",
    )
    p.add_argument("--n-best", type=int, default=10, help="N-best size")
    p.add_argument("--beam-width", type=int, default=32)
    p.add_argument("--max-len", type=int, default=16, help="beam decode length cap")
    p.add_argument("--k-mult", type=int, default=1, help="clusters per budget unit")
    p.add_argument(
        "--alpha",
        action="append",
        metavar="TERM=COEFF",
        help="term coefficient override (bias/error/density/diversity)",
    )
    p.add_argument(
        "--no-factorized",
        action="store_true",
        help="estimate translations per utterance instead of per LF",
    )
    p.add_argument(
        "--fractions",
        default="0.01,0.02,0.04,0.08,0.16",
        help="cumulative budget fractions per round",
    )
    p.add_argument("--workers", type=int, default=1, help="scoring parallelism")
    p.add_argument("--seed", type=int, default=None, help="override the run seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hat", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic bilingual world")
    p.add_argument("--config", help="world config file (.toml or .json)")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("run", help="run the selection loop on a run directory")
    p.add_argument("--dir", required=True)
    _add_acquisition_flags(p)
    p.add_argument("--mode", default="simulated", choices=["simulated", "human-service"])
    p.add_argument("--resume", action="store_true", help="continue from checkpoints")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds (comparison)")
    p.add_argument(
        "--compare",
        action="append",
        metavar="STRATEGY",
        help="additional strategies for a paired multi-seed comparison",
    )
    p.add_argument("--service-url", help="annotation service base url (human mode)")
    p.add_argument("--token", help="annotation service bearer token")
    p.add_argument("--poll-interval", type=float, default=2.0)
    p.add_argument("--timeout", type=float, default=None)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("score", help="score the current pool without selecting")
    p.add_argument("--dir", required=True)
    _add_acquisition_flags(p)
    p.add_argument("--mode", default="simulated", help=argparse.SUPPRESS)
    p.add_argument("--round", type=int, default=0, help="checkpoint round to score from")
    p.add_argument("--out", help="output CSV path")
    p.add_argument(
        "--export-features",
        metavar="CSV",
        help="also write the pool's feature matrix (one row per utterance id)",
    )
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("eval", help="evaluate the latest checkpoint's parser")
    p.add_argument("--dir", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="serve the annotation API for a run directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--token", help="shared bearer token (or HAT_TOKEN)")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("report", help="collect run outputs into one report")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", help="output JSON path")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("HAT_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failures exit 2 with a clean message
        log.debug("traceback", exc_info=True)
        print(f"hat: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
