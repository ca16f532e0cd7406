"""Command-line pipeline: learn | convert | infer | eval.

Heavy imports happen inside the command handlers so that --threads can pin
the BLAS pool size through environment variables before numpy loads. Every
command writes a JSON manifest next to its outputs with the resolved
configuration, seeds, paths and wall time, so runs can be replayed.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="spntt",
                     description="Learn SPNs, compress them into non-negative "
                                 "tensor trains, query and evaluate both.")
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP thread pools")
    parser.add_argument("--quiet", action="store_true", help="suppress stdout")
    parser.add_argument("--config", default=None,
                        help="JSON file with option overrides (flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_learn = sub.add_parser("learn", help="learn an SPN from a 0/1 dataset")
    p_learn.add_argument("dataset")
    p_learn.add_argument("out_spn")
    p_learn.add_argument("--g-threshold", type=float, default=None)
    p_learn.add_argument("--min-slice", type=int, default=None)
    p_learn.add_argument("--clusters", type=int, default=None)
    p_learn.add_argument("--alpha", type=float, default=None)

    p_conv = sub.add_parser("convert", help="fit a tensor train to an SPN")
    p_conv.add_argument("spn")
    p_conv.add_argument("dataset")
    p_conv.add_argument("out_tt")
    p_conv.add_argument("--rank", type=int, default=None)
    p_conv.add_argument("--non-sample-ratio", type=float, default=None)
    p_conv.add_argument("--max-sweeps", type=int, default=None)
    p_conv.add_argument("--rel-tol", type=float, default=None)
    p_conv.add_argument("--y-scaling", choices=["none", "max"], default=None)

    p_infer = sub.add_parser("infer", help="query an SPN or tensor-train model")
    p_infer.add_argument("model")
    p_infer.add_argument("--state", default=None,
                         help="complete state, e.g. 1,0,1")
    p_infer.add_argument("--evidence", default=None,
                         help="partial state, e.g. x1=1,x3=0 (variables 1-based)")
    p_infer.add_argument("--mpe", action="store_true",
                         help="most probable explanation (SPN models only)")

    p_eval = sub.add_parser("eval", help="compare an SPN against its tensor train")
    p_eval.add_argument("spn")
    p_eval.add_argument("tt")
    p_eval.add_argument("train_dataset")
    p_eval.add_argument("test_dataset")
    p_eval.add_argument("--out-dir", default="eval_out")
    p_eval.add_argument("--tv-limit", type=int, default=None)
    p_eval.add_argument("--profile-cap", type=int, default=None,
                        help="max states per profile set")
    p_eval.add_argument("--svg", action="store_true",
                        help="also write a profile scatter SVG")
    return parser


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise UsageError("--config file must hold a JSON object")
    return payload


def _resolve(cli_value, config: dict, key: str, default):
    if cli_value is not None:
        return cli_value
    return config.get(key, default)


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _write_manifest(path, command: str, config: dict, seed: int,
                    inputs: list[str], outputs: list[str], t0: float) -> None:
    from . import __version__

    manifest = {"command": command,
                "config": config,
                "seed": seed,
                "inputs": [str(p) for p in inputs],
                "outputs": [str(p) for p in outputs],
                "version": __version__,
                "seconds": time.perf_counter() - t0}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def _cmd_learn(args, config: dict) -> int:
    from .datasets import load_dataset
    from .learn import LearnConfig, learn_spn
    from .metrics import spn_parameter_count

    t0 = time.perf_counter()
    cfg = LearnConfig(
        g_test_threshold=_resolve(args.g_threshold, config, "g_test_threshold", 4.0),
        min_instances_to_slice=_resolve(args.min_slice, config,
                                        "min_instances_to_slice", 50),
        num_clusters=_resolve(args.clusters, config, "num_clusters", 2),
        laplace_alpha=_resolve(args.alpha, config, "laplace_alpha", 1.0),
        rng_seed=args.seed)
    data = load_dataset(args.dataset)
    spn = learn_spn(data, cfg)
    spn.save(args.out_spn)
    z = spn.partition_function()
    _say(args, f"variables: {spn.num_variables}")
    _say(args, f"layers: {spn.num_layers()}")
    _say(args, f"leaf nodes: {spn.num_leaves()}")
    _say(args, f"weights: {spn.num_sum_weights()}")
    _say(args, f"parameters: {spn_parameter_count(spn)}")
    _say(args, f"partition function: {z!r}")
    _write_manifest(str(args.out_spn) + ".manifest.json", "learn",
                    dataclasses.asdict(cfg), args.seed, [args.dataset],
                    [str(args.out_spn)], t0)
    return EXIT_OK


def _cmd_convert(args, config: dict) -> int:
    from .converter import ConversionConfig, convert
    from .datasets import load_dataset
    from .metrics import spn_parameter_count
    from .spn import SpnGraph
    from .tensor_train import save_tt

    t0 = time.perf_counter()
    cfg = ConversionConfig(
        initial_rank=_resolve(args.rank, config, "initial_rank", 10),
        non_sample_ratio=_resolve(args.non_sample_ratio, config,
                                  "non_sample_ratio", 1.0),
        max_sweeps=_resolve(args.max_sweeps, config, "max_sweeps", 50),
        rel_tol=_resolve(args.rel_tol, config, "rel_tol", 1e-6),
        rng_seed=args.seed,
        y_scaling=_resolve(args.y_scaling, config, "y_scaling", "none"))
    spn = SpnGraph.load(args.spn)
    data = load_dataset(args.dataset)
    tt, report = convert(spn, data, cfg)
    save_tt(tt, args.out_tt)
    report_path = str(args.out_tt) + ".report.json"
    report.save(report_path)
    spn_params = spn_parameter_count(spn)
    reduction = spn_params / report.params_nonzero if report.params_nonzero else float("inf")
    _say(args, f"final objective: {report.objective_history[-1]!r}")
    _say(args, f"sweeps: {report.sweeps} (converged: {report.converged})")
    _say(args, f"ranks: {','.join(str(r) for r in report.final_ranks)}")
    _say(args, f"parameters: total {report.params_total}, "
               f"nonzero {report.params_nonzero}")
    _say(args, f"reduction vs SPN ({spn_params} params): {reduction:.1f}x")
    _write_manifest(str(args.out_tt) + ".manifest.json", "convert",
                    cfg.to_dict(), args.seed, [args.spn, args.dataset],
                    [str(args.out_tt), report_path], t0)
    return EXIT_OK


def _parse_state(text: str, d: int):
    import numpy as np

    try:
        values = [int(tok) for tok in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --state {text!r}: {exc}") from exc
    if len(values) != d or any(v not in (0, 1) for v in values):
        raise UsageError(f"--state needs {d} comma-separated 0/1 values")
    return np.asarray(values, dtype=np.uint8)


def _parse_evidence(text: str, d: int) -> dict[int, int]:
    evidence: dict[int, int] = {}
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if "=" not in token:
            raise UsageError(f"bad evidence token {token!r}, expected xK=V")
        name, _, value = token.partition("=")
        name = name.strip().lstrip("xX")
        try:
            var = int(name) - 1  # 1-based on the command line
            val = int(value)
        except ValueError as exc:
            raise UsageError(f"bad evidence token {token!r}: {exc}") from exc
        if not 0 <= var < d:
            raise UsageError(f"evidence variable x{var + 1} out of range (d={d})")
        if val not in (0, 1):
            raise UsageError(f"evidence value for x{var + 1} must be 0 or 1")
        evidence[var] = val
    return evidence


def _cmd_infer(args, config: dict) -> int:
    from .spn import SpnGraph
    from .states import Assignment
    from .tensor_train import load_tt, tt_eval, tt_partition

    with open(args.model, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if "nodes" in payload:
        model_kind = "spn"
        spn = SpnGraph.from_dict(payload)
        d = spn.num_variables
    elif "cores" in payload:
        model_kind = "tt"
        tt = load_tt(args.model)
        d = tt.d
    else:
        raise UsageError(f"{args.model}: neither an SPN nor a tensor-train file")

    queries = sum(x is not None for x in (args.state, args.evidence)) + args.mpe
    if args.state is not None and (args.mpe or args.evidence is not None):
        raise UsageError("--state cannot be combined with --evidence/--mpe")
    if queries == 0:
        raise UsageError("one of --state, --evidence, --mpe is required")

    if args.mpe:
        if model_kind == "tt":
            raise UsageError("MPE unsupported for tSPN models")
        evidence = _parse_evidence(args.evidence, d) if args.evidence else {}
        state, value = spn.mpe(evidence)
        _say(args, "state: " + ",".join(str(int(v)) for v in state))
        _say(args, f"value: {value!r}")
        return EXIT_OK

    if args.state is not None:
        bits = _parse_state(args.state, d)
        a = Assignment.from_state(bits)
    else:
        evidence = _parse_evidence(args.evidence, d)
        a = Assignment.from_evidence(d, evidence)
    if model_kind == "spn":
        prob = spn.evaluate(a) / spn.partition_function()
    else:
        prob = tt_eval(tt, a) / tt_partition(tt)
    _say(args, f"probability: {prob!r}")
    return EXIT_OK


def _cmd_eval(args, config: dict) -> int:
    import numpy as np

    from .converter import generate_non_samples
    from .datasets import load_dataset
    from .learn import Dataset
    from .metrics import report as eval_report
    from .metrics import write_profile_csv, write_profile_svg
    from .spn import SpnGraph
    from .tensor_train import load_tt

    t0 = time.perf_counter()
    tv_limit = _resolve(args.tv_limit, config, "tv_limit", 20)
    cap = _resolve(args.profile_cap, config, "profile_cap", 2000)
    spn = SpnGraph.load(args.spn)
    tt = load_tt(args.tt)
    train = load_dataset(args.train_dataset)
    test = load_dataset(args.test_dataset)
    if test.num_variables != train.num_variables:
        raise UsageError("train and test datasets disagree on the variable count")

    train_rows = train.rows[:cap]
    test_rows = test.rows[:cap]
    train_neg = generate_non_samples(train, len(train_rows),
                                     seed=np.random.SeedSequence([args.seed, 1]))
    both = Dataset(np.vstack([train.rows, test.rows]))
    test_neg = generate_non_samples(both, len(test_rows),
                                    seed=np.random.SeedSequence([args.seed, 2]))
    sets = [("train-sample", train_rows),
            ("test-sample", test_rows),
            ("train-non-sample", train_neg),
            ("test-non-sample", test_neg)]

    rep = eval_report(spn, tt, sets, limit=tv_limit)
    os.makedirs(args.out_dir, exist_ok=True)
    report_path = os.path.join(args.out_dir, "report.json")
    csv_path = os.path.join(args.out_dir, "profile.csv")
    rep.save(report_path)
    write_profile_csv(rep.profile_rows, csv_path)
    outputs = [report_path, csv_path]
    if args.svg:
        svg_path = os.path.join(args.out_dir, "profile.svg")
        write_profile_svg(rep.profile_rows, svg_path)
        outputs.append(svg_path)
    tv_text = "n/a (d above limit)" if rep.tv_distance is None else repr(rep.tv_distance)
    _say(args, f"TV distance: {tv_text}")
    _say(args, f"SPN parameters: {rep.spn_params}")
    _say(args, f"tSPN parameters: total {rep.tspn_params_total}, "
               f"nonzero {rep.tspn_params_nonzero}")
    _say(args, f"reduction: {rep.reduction_factor:.1f}x")
    _write_manifest(os.path.join(args.out_dir, "manifest.json"), "eval",
                    {"tv_limit": tv_limit, "profile_cap": cap, "svg": args.svg},
                    args.seed,
                    [args.spn, args.tt, args.train_dataset, args.test_dataset],
                    outputs, t0)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.threads is not None and args.threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    handlers = {"learn": _cmd_learn, "convert": _cmd_convert,
                "infer": _cmd_infer, "eval": _cmd_eval}
    try:
        config = _load_config(args.config)
        return handlers[args.command](args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # mapped by module below
        from .converter import ConversionError
        from .learn import DatasetError
        from .metrics import MetricsError
        from .spn import SpnError
        from .tensor_train import TensorTrainError

        if isinstance(exc, (DatasetError, SpnError, TensorTrainError, MetricsError)):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        if isinstance(exc, (ConversionError, FloatingPointError, ArithmeticError)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        raise


if __name__ == "__main__":
    sys.exit(main())
