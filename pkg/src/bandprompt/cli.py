"""Command-line surface: gen / train / eval / diag / bank dump / gradcheck.

Every command resolves one flat RunConfig (defaults < config file < --set <
SPECPL_SEED) and stamps the resolved values as a comment header on whatever
report it writes, so runs are reproducible from their own output. Exit codes:
0 success, 1 usage or config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .bank import write_bank
from .config import SEED_ENV_VAR, RunConfig, apply_setting, load_config, resolve_config
from .diagnostics import diagnose, write_report
from .errors import BandpromptError, ConfigError, ProtocolError
from .evaluate import accuracy_percent, predict, run_base_to_novel
from .teacher import generate_dataset, read_cache, write_cache
from .trainer import (
    FD_TOLERANCE,
    ToyVisualEncoder,
    fit,
    load_checkpoint,
    run_gradient_check,
    save_checkpoint,
    state_from_values,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandprompt",
        description="Band-factorized prompt training on synthetic latent caches.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic latent cache")
    _add_common(gen)
    gen.add_argument("--out", default=None, help="cache output path")
    gen.set_defaults(func=cmd_gen)

    train = sub.add_parser("train", help="train on a cache per the configured protocol")
    _add_common(train)
    train.add_argument("--cache", default=None, help="input cache path")
    train.add_argument("--checkpoint", default=None, help="checkpoint output path")
    train.add_argument("--history", default=None, help="loss history output path")
    train.add_argument("--report", default=None, help="evaluation report output path")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="score a saved checkpoint on a cache")
    _add_common(ev)
    ev.add_argument("--checkpoint", required=True, help="checkpoint to load")
    ev.add_argument("--cache", default=None, help="cache to score")
    ev.add_argument("--report", default=None, help="report output path")
    ev.set_defaults(func=cmd_eval)

    diag = sub.add_parser("diag", help="spectral overlap report for a cache")
    _add_common(diag)
    diag.add_argument("--cache", default=None, help="input cache path")
    diag.add_argument("--k", type=int, default=None, help="box filter size")
    diag.add_argument("--bands", type=int, default=None, help="radial bin count")
    diag.add_argument("--grid", type=int, default=None,
                      help="square alignment grid; 0 disables resampling")
    diag.add_argument("--report", default=None, help="report output path")
    diag.set_defaults(func=cmd_diag)

    bank = sub.add_parser("bank", help="bank inspection commands")
    bank_sub = bank.add_subparsers(dest="bank_command", required=True)
    dump = bank_sub.add_parser("dump", help="write a checkpoint's bank as text")
    dump.add_argument("--checkpoint", required=True, help="checkpoint to read")
    dump.add_argument("--out", default=None, help="dump output path")
    dump.set_defaults(func=cmd_bank_dump)

    gc = sub.add_parser("gradcheck",
                        help="finite-difference audit of the analytic gradients")
    _add_common(gc)
    gc.add_argument("--cache", default=None,
                    help="optional cache; generated from the config when omitted")
    gc.set_defaults(func=cmd_gradcheck)

    return parser


def _resolve(args, **path_flags: str | None) -> RunConfig:
    cfg = resolve_config(args.config, args.overrides)
    for key, value in path_flags.items():
        if value is not None:
            cfg = apply_setting(cfg, key, value)
    return cfg


def cmd_gen(args) -> int:
    cfg = _resolve(args, cache_path=args.out)
    cache = generate_dataset(cfg.synthetic_spec(), cfg.n_per_class)
    write_cache(cache, cfg.cache_path)
    print(f"wrote {len(cache)} latents to {cfg.cache_path}")
    return 0


def _write_history(path, header: list[str], history) -> None:
    lines = list(header)
    lines.append("epoch cls sem gf gcf total")
    for i, parts in enumerate(history):
        cells = [str(i)]
        for name in ("cls", "sem", "granule_f", "granule_cf", "total"):
            v = getattr(parts, name)
            cells.append("none" if v is None else f"{v:.9f}")
        lines.append(" ".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_train(args) -> int:
    cfg = _resolve(args, cache_path=args.cache, checkpoint_path=args.checkpoint,
                   history_path=args.history, eval_report_path=args.report)
    cache = read_cache(cfg.cache_path)
    tcfg = cfg.train_config()
    header = cfg.header_lines()
    if cfg.protocol == "base_to_novel":
        out = run_base_to_novel(cache, tcfg, shots=cfg.shots,
                                select_by_base_val=cfg.select_by_base_val)
        state, res = out.state, out.result
        lines = header + [
            f"base_acc {res.base_acc:.6f}",
            f"novel_acc {res.novel_acc:.6f}",
            f"hm {res.hm:.6f}",
            f"gap_percent {res.gap_percent:.6f}",
            f"base_count {res.base_count}",
            f"novel_count {res.novel_count}",
        ]
        with open(cfg.eval_report_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"base {res.base_acc:.2f}  novel {res.novel_acc:.2f}  "
              f"hm {res.hm:.2f}  gap {res.gap_percent:.2f}")
    else:
        state = fit(cache, tcfg)
        print(f"trained {tcfg.epochs} epochs on {len(cache)} latents")
    save_checkpoint(cfg.checkpoint_path, state, cfg.items())
    _write_history(cfg.history_path, header, state.epoch_history)
    print(f"checkpoint: {cfg.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    header_items, param_values, bank = load_checkpoint(args.checkpoint)
    cfg = RunConfig()
    for key, value in header_items.items():
        try:
            cfg = apply_setting(cfg, key, value)
        except ConfigError:
            continue  # foreign header comment, not a config key
    if args.config is not None:
        cfg = load_config(args.config, cfg)
    for pair in args.overrides:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        cfg = apply_setting(cfg, key, raw)
    if SEED_ENV_VAR in os.environ:
        cfg = apply_setting(cfg, "seed", os.environ[SEED_ENV_VAR])
    if args.cache is not None:
        cfg = apply_setting(cfg, "cache_path", args.cache)
    if args.report is not None:
        cfg = apply_setting(cfg, "eval_report_path", args.report)
    cache = read_cache(cfg.cache_path)
    tcfg = cfg.train_config()
    encoder = ToyVisualEncoder.create(cfg.embed_dim, cache.grid, cfg.seed)
    state = state_from_values(param_values, bank, encoder, tcfg)
    labels = cache.labels()
    if labels.max() >= state.num_classes:
        raise ProtocolError(
            f"cache labels go up to {labels.max()} but the checkpoint "
            f"trained {state.num_classes} classes"
        )
    visual = encoder.encode_batch(cache.arrays())
    _, pred = predict(visual, state.text_features(tcfg), tcfg.logit_scale)
    acc = accuracy_percent(pred, labels)
    lines = cfg.header_lines() + [f"accuracy {acc:.6f}", f"samples {len(cache)}"]
    with open(cfg.eval_report_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"accuracy {acc:.2f} on {len(cache)} samples")
    return 0


def cmd_diag(args) -> int:
    cfg = _resolve(args, cache_path=args.cache, diag_report_path=args.report)
    if args.k is not None:
        cfg = apply_setting(cfg, "kernel", str(args.k))
    if args.bands is not None:
        cfg = apply_setting(cfg, "diag_bands", str(args.bands))
    if args.grid is not None:
        cfg = apply_setting(cfg, "align_h", str(args.grid))
        cfg = apply_setting(cfg, "align_w", str(args.grid))
    cache = read_cache(cfg.cache_path)
    align = (cfg.align_h, cfg.align_w) if cfg.align_h > 0 and cfg.align_w > 0 else None
    report = diagnose(cache, kernel=cfg.kernel, num_bins=cfg.diag_bands, align=align)
    write_report(cfg.diag_report_path, report, cfg.header_lines())
    print(f"overlap_mean {report.overlap_mean:.6f}  "
          f"skipped {report.skipped_count}  report: {cfg.diag_report_path}")
    return 0


def cmd_bank_dump(args) -> int:
    _, _, bank = load_checkpoint(args.checkpoint)
    if bank is None:
        raise BandpromptError(f"{args.checkpoint}: checkpoint carries no bank")
    out = args.out if args.out is not None else RunConfig().bank_dump_path
    write_bank(bank, out)
    print(f"wrote {bank.size}x{bank.dim} bank to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _resolve(args, cache_path=args.cache)
    if args.cache is not None:
        cache = read_cache(cfg.cache_path)
    else:
        cache = generate_dataset(cfg.synthetic_spec(), cfg.n_per_class)
    report = run_gradient_check(cache, cfg.train_config())
    for name in sorted(report.per_param):
        print(f"{name} {report.per_param[name]:.3e}")
    print(f"worst {report.worst_param} {report.worst_error:.3e}")
    print(f"excluded: {', '.join(report.excluded)}")
    if not report.passed:
        print(f"error: relative error exceeds {FD_TOLERANCE}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems and 0 for --help
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BandpromptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
