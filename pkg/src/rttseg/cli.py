"""Command-line driver: segment, score, aggregate, compare, serve."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import gmm_em_fit, hmm_baum_welch_fit, select_k_by_bic
from .changepoint import (
    ChangePointSet, aggregate_metrics, change_frequency, extract_changepoints, read_truth,
    score, write_frequency,
)
from .dist import derive_seed
from .dpmm import dpmm_fit
from .errors import RttsegError
from .hdphmm import HdpHmmConfig, fit
from .ingest import RegularSeries, read_series
from .report import result_to_dict

MODELS = ("gmm", "hmm", "dpmm", "hdphmm")
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    p = _Parser(prog="rttseg", description="RTT time-series segmentation with a sticky HDP-HMM.")
    p.add_argument("--version", action="version", version=f"rttseg {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(sp):
        sp.add_argument("--interval", type=int, default=None, help="grid interval in seconds (default: inferred)")
        sp.add_argument("--sweeps", type=int, default=500)
        sp.add_argument("--burn-in", type=int, default=200)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--kappa", type=float, default=10.0)
        sp.add_argument("--alpha", type=float, default=1.0)
        sp.add_argument("--gamma", type=float, default=1.0)

    sp = sub.add_parser("segment", help="segment series files into JSON results")
    sp.add_argument("series", nargs="+", type=Path)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--threads", type=_positive, default=1)
    model_flags(sp)

    sp = sub.add_parser("score", help="score segmentations against labeled changes")
    sp.add_argument("--pred", type=Path, required=True, help="directory written by 'segment'")
    sp.add_argument("--truth", type=Path, required=True,
                    help="a time,magnitude CSV, or a directory of <series_id>.csv files")
    sp.add_argument("--tolerance", type=float, default=2.0, help="matching tolerance in ticks")
    sp.add_argument("--out", type=Path, default=None)

    sp = sub.add_parser("aggregate", help="change frequency across segmentations")
    sp.add_argument("results", nargs="+", type=Path)
    sp.add_argument("--bucket", type=_positive, default=360)
    sp.add_argument("--start", type=int, default=None)
    sp.add_argument("--stop", type=int, default=None)
    sp.add_argument("--out", type=Path, default=None)

    sp = sub.add_parser("compare", help="fit baseline models and the HDP-HMM to one series")
    sp.add_argument("series", type=Path)
    sp.add_argument("--models", default=",".join(MODELS))
    sp.add_argument("--k-max", type=_positive, default=12)
    sp.add_argument("--out", type=Path, default=None)
    model_flags(sp)

    sp = sub.add_parser("serve", help="run the HTTP trends service")
    sp.add_argument("--host", default=None)
    sp.add_argument("--port", type=int, default=None)
    sp.add_argument("--fixture-root", default=None)
    sp.add_argument("--interval", type=int, default=None)
    sp.add_argument("--sweeps", type=int, default=None)
    sp.add_argument("--burn-in", type=int, default=None)
    sp.add_argument("--seed-salt", type=int, default=None)
    return p


def _config(args, seed):
    try:
        return HdpHmmConfig(alpha=args.alpha, gamma=args.gamma, kappa=args.kappa,
                            sweeps=args.sweeps, burn_in=args.burn_in, seed=seed)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _emit(obj, out):
    text = json.dumps(obj, indent=2, allow_nan=False)
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n", encoding="utf-8")


def segment_one(path, args):
    s = read_series(path, interval=args.interval)
    # seed keyed on the series id so results do not depend on argument order
    cfg = _config(args, derive_seed(args.seed, s.series_id))
    return s.series_id, result_to_dict(fit(s, cfg))


def cmd_segment(args):
    _config(args, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    failed = 0
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        futs = [(p, pool.submit(segment_one, p, args)) for p in args.series]
        for path, fut in futs:
            try:
                sid, d = fut.result()
            except (RttsegError, OSError, ValueError) as e:
                print(f"rttseg: {path}: {e}", file=sys.stderr)
                failed += 1
                continue
            _emit(d, args.out / f"{sid}.json")
    return EXIT_DATA if failed else EXIT_OK


def _load_result(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if "states" not in d or "start" not in d or "interval" not in d:
        raise RttsegError(f"{path}: not a segmentation result")
    return d


def _result_changes(d):
    s = RegularSeries(d["start"], d["interval"], np.zeros(len(d["states"])), series_id=d["series_id"])
    return extract_changepoints(d["states"], s)


def cmd_score(args):
    if not args.truth.exists():
        raise FileNotFoundError(f"truth file {args.truth} does not exist")
    preds = sorted(args.pred.glob("*.json"))
    if not preds:
        raise RttsegError(f"no results in {args.pred}")
    per, pooled = {}, []
    for p in preds:
        d = _load_result(p)
        truth_path = args.truth / f"{d['series_id']}.csv" if args.truth.is_dir() else args.truth
        if not truth_path.exists():
            raise FileNotFoundError(f"truth file {truth_path} does not exist")
        truth = read_truth(truth_path)
        cps = _result_changes(d)
        m = score(cps, truth, args.tolerance * d["interval"])
        per[d["series_id"]] = m.to_dict()
        total = sum(c.magnitude for c in truth)
        pooled.append((m, m.weighted_recall * total, total))
    out = {"tolerance_ticks": args.tolerance, "overall": aggregate_metrics(pooled).to_dict(), "series": per}
    _emit(out, args.out)
    return EXIT_OK


def cmd_aggregate(args):
    sets, lo, hi = [], [], []
    for p in args.results:
        d = _load_result(p)
        sets.append(_result_changes(d))
        lo.append(d["start"])
        hi.append(d["start"] + d["interval"] * len(d["states"]))
    start = min(lo) if args.start is None else args.start
    stop = max(hi) if args.stop is None else args.stop
    freq = change_frequency(sets, start, stop, args.bucket)
    if args.out is None:
        print("bucket_start,count")
        for b, c in zip(freq.bucket_starts, freq.counts):
            print(f"{int(b)},{int(c)}")
    else:
        write_frequency(freq, args.out)
    return EXIT_OK


def _segments(states):
    return int(1 + np.count_nonzero(np.diff(states)))


def compare_models(series, models, config, k_max=12, seed=0):
    """Per-model states, K, log-likelihood and (for the parametric models) BIC."""
    out = {}
    ks = range(1, k_max + 1)
    for name in models:
        rng = np.random.default_rng(derive_seed(seed, series.series_id, name))
        if name == "gmm":
            rep = select_k_by_bic(gmm_em_fit, series.present_values(), ks, rng)
            states = np.full(len(series), -1)
            states[series.present] = rep.states
            entry = dict(k=rep.k, log_likelihood=rep.log_likelihood, bic=rep.bic, n_params=rep.n_params)
        elif name == "hmm":
            rep = select_k_by_bic(hmm_baum_welch_fit, series, ks, rng)
            states = rep.states
            entry = dict(k=rep.k, log_likelihood=rep.log_likelihood, bic=rep.bic, n_params=rep.n_params)
        elif name == "dpmm":
            _, st = dpmm_fit(series.present_values(), rng=rng, return_state=True)
            labels = np.asarray(st.assignments)
            states = np.full(len(series), -1)
            states[series.present] = labels
            entry = dict(k=int(np.unique(labels).size), log_likelihood=None, bic=None)
        elif name == "hdphmm":
            res = fit(series, replace(config, seed=derive_seed(seed, series.series_id, name)))
            states = res.states
            entry = dict(k=res.num_states, log_likelihood=res.log_likelihood, bic=None)
        else:
            raise UsageError(f"unknown model {name!r}; choose from {', '.join(MODELS)}")
        present = states[states >= 0]
        entry["num_segments"] = _segments(present) if present.size else 0
        entry["states"] = [int(z) for z in states]
        out[name] = entry
    return out


def cmd_compare(args):
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    if not models:
        raise UsageError("--models is empty")
    bad = [m for m in models if m not in MODELS]
    if bad:
        raise UsageError(f"unknown model(s) {', '.join(bad)}; choose from {', '.join(MODELS)}")
    s = read_series(args.series, interval=args.interval)
    cfg = _config(args, args.seed)
    res = compare_models(s, models, cfg, args.k_max, args.seed)
    _emit({"series_id": s.series_id, "config": dict(cfg.to_dict(), k_max=args.k_max), "models": res}, args.out)
    return EXIT_OK


def cmd_serve(args):
    from .service import Settings, serve

    serve(Settings.from_env(host=args.host, port=args.port, fixture_root=args.fixture_root,
                            interval=args.interval, sweeps=args.sweeps, burn_in=args.burn_in,
                            seed_salt=args.seed_salt))
    return EXIT_OK


COMMANDS = {"segment": cmd_segment, "score": cmd_score, "aggregate": cmd_aggregate,
            "compare": cmd_compare, "serve": cmd_serve}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"rttseg: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (RttsegError, FileNotFoundError, ValueError) as e:
        print(f"rttseg: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"rttseg: internal error: {e!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
