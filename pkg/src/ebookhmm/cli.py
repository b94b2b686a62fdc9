"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 numerical failure (for example a band that stays too narrow after
retries).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .alphabet import Alphabet, AlphabetPolicy, build_alphabet, default_alphabet, load_corpus, read_text
from .errors import ConfigurationError, EbookHmmError
from .pairwise import ScoringScheme

log = logging.getLogger("ebookhmm")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _scoring(args) -> ScoringScheme:
    return ScoringScheme(args.match, args.mismatch, args.gap)


def _alphabet(args) -> Alphabet:
    if getattr(args, "alphabet", None):
        return Alphabet.load(args.alphabet)
    return default_alphabet()


def _diagonal_centers(T, M):
    return np.rint(np.arange(1, T + 1) * (M / max(T, 1))).astype(np.int64)


def _write(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands


def cmd_alphabet(args):
    if not args.inputs and not args.explicit:
        raise ConfigurationError("no input files given")
    if args.explicit:
        symbols = tuple(ord(ch) for ch in read_text(args.explicit) if ch not in "\r")
        policy = AlphabetPolicy(mode="explicit-list", symbols=symbols)
        alphabet = build_alphabet([], policy)
    else:
        texts = [read_text(p) for p in args.inputs]
        alphabet = build_alphabet(texts, AlphabetPolicy(min_frequency=args.min_frequency))
    alphabet.save(args.output)
    print(len(alphabet))


def cmd_align(args):
    from .pairwise import identity_matrix, identity_matrix_json, needleman_wunsch, render_alignment, sequence_identity

    alphabet = _alphabet(args)
    seqs = load_corpus(args.inputs, alphabet)
    if len(seqs) < 2:
        raise ConfigurationError("align needs at least two input files")
    scoring = _scoring(args)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    ids = [s.source_id for s in seqs]
    if len(seqs) == 2:
        aln = needleman_wunsch(seqs[0], seqs[1], scoring)
        stats = sequence_identity(aln)
        _write(out / "alignment.txt", render_alignment(aln, args.width))
        matrix = [[1.0, stats.identity], [stats.identity, 1.0]]
        print(f"{ids[0]}\t{ids[1]}\t{stats.matches}\t{stats.alignment_length}\t{stats.identity:.4f}")
    else:
        matrix = identity_matrix(seqs, scoring).tolist()
    _write(out / "identity.json", identity_matrix_json(ids, matrix))
    rows = ["\t".join(["id"] + ids)] + ["\t".join([ids[i]] + [f"{v:.6f}" for v in row]) for i, row in enumerate(matrix)]
    _write(out / "identity.tsv", "\n".join(rows) + "\n")
    if not args.no_figures:
        from .plotting import plot_identity_matrix

        plot_identity_matrix(ids, matrix, out / "identity.png")


def cmd_msa(args):
    from .msa import barton_sternberg, mark_match_columns, msa_sidecar, msa_to_text

    alphabet = _alphabet(args)
    seqs = load_corpus(args.inputs, alphabet)
    msa = barton_sternberg(seqs, _scoring(args), args.rounds)
    marked = mark_match_columns(msa, args.gap_threshold)
    out = Path(args.output)
    _write(out / "msa.txt", msa_to_text(msa))
    _write(out / "msa.json", msa_sidecar(marked))
    print(f"{msa.n_columns} columns, {marked.match_columns.size} match columns")


def cmd_build(args):
    from .model import PseudocountConfig, build_model, save_model
    from .msa import marked_from_sidecar

    marked = marked_from_sidecar(read_text(args.msa))
    if args.gap_threshold is not None:
        from .msa import mark_match_columns

        marked = mark_match_columns(marked.alignment, args.gap_threshold)
    model = build_model(marked, PseudocountConfig(args.emission_pseudocount, args.transition_pseudocount))
    save_model(model, args.output)
    print(f"M={model.M}")


def cmd_train(args):
    from .inference import baum_welch
    from .model import PseudocountConfig, load_model, model_to_json, save_model
    from .pipeline import fit_band

    model = load_model(args.model)
    if args.epochs == 0:
        _write(args.output, model_to_json(model))
        return
    seqs = load_corpus(args.inputs, model.alphabet)
    if args.msa:
        from .msa import marked_from_sidecar

        marked = marked_from_sidecar(read_text(args.msa))
        rows = {rid: i for i, rid in enumerate(marked.alignment.row_ids)}
        missing = [s.source_id for s in seqs if s.source_id not in rows]
        if missing:
            raise ConfigurationError(f"sequences not in the alignment: {', '.join(missing)}")
        bands = [fit_band(model, s, marked.model_positions(rows[s.source_id]), args.half_width) for s in seqs]
    elif args.no_band:
        bands = None
    else:
        bands = [fit_band(model, s, _diagonal_centers(len(s), model.M), args.half_width) for s in seqs]
    pseudo = PseudocountConfig(args.emission_pseudocount, args.transition_pseudocount)
    trained, trace = baum_welch(model, seqs, args.epochs, args.tol, pseudo, bands)
    save_model(trained, args.output)
    if args.trace:
        _write(args.trace, trace.to_json())
    print(f"epochs={trace.epochs} converged={str(trace.converged).lower()} log_likelihood={trace.log_likelihood[-1]:.6f}")


def cmd_consensus(args):
    from .inference import consensus, match_probabilities
    from .model import load_model

    model = load_model(args.model)
    modal = consensus(model)
    _write(args.output, modal.text)
    if args.profile:
        from .plotting import plot_match_profile

        plot_match_profile(match_probabilities(model), args.profile)
    print(len(modal))


def cmd_eval(args):
    from .evaluation import describe, identity_report, summary_table

    report = identity_report(read_text(args.candidate), read_text(args.reference), _scoring(args))
    out = Path(args.output)
    _write(out / "report.json", report.to_json())
    _write(out / "report.tsv", summary_table({args.name: report}))
    if not args.no_figures:
        from .plotting import plot_mismatch_classes

        plot_mismatch_classes(report, out / "mismatches.png")
    sys.stdout.write(summary_table({args.name: report}))
    for m in report.substantive[: args.show]:
        print(describe(m))


def cmd_pipeline(args):
    from .pipeline import PipelineConfig, run_pipeline

    overrides = {
        "inputs": args.inputs or None,
        "output_dir": args.output,
        "alphabet_file": args.alphabet,
        "alphabet_mode": args.alphabet_mode,
        "match_score": args.match,
        "mismatch_score": args.mismatch,
        "gap_score": args.gap,
        "refinement_rounds": args.rounds,
        "gap_threshold": args.gap_threshold,
        "emission_pseudocount": args.emission_pseudocount,
        "transition_pseudocount": args.transition_pseudocount,
        "band_half_width": args.half_width,
        "train": args.train,
        "epochs": args.epochs,
        "tol": args.tol,
        "reference": args.reference,
        "figures": False if args.no_figures else None,
    }
    config = PipelineConfig.resolve(args.config, **overrides)
    manifest = run_pipeline(config)
    print(f"model length {manifest['model_length']}, consensus {manifest['consensus_length']} characters")
    if "percentages" in manifest:
        print(json.dumps(manifest["percentages"]))


def cmd_synth(args):
    from .synth import styles_json, synthesize_editions

    text = read_text(args.ground_truth)
    editions, styles = synthesize_editions(text, args.editions, args.noise, args.seed)
    out = Path(args.output)
    for i, body in enumerate(editions, 1):
        _write(out / f"edition-{i}.txt", body)
    _write(out / "styles.json", styles_json(styles))
    print(f"wrote {len(editions)} editions to {out}")


# ---------------------------------------------------------------------------
# parser


def _add_scoring(p, default=True):
    d = (lambda v: v) if default else (lambda v: None)
    p.add_argument("--match", type=int, default=d(1), help="match score (default 1)")
    p.add_argument("--mismatch", type=int, default=d(-1), help="mismatch score (default -1)")
    p.add_argument("--gap", type=int, default=d(-1), help="linear gap score (default -1)")


def _add_pseudo(p, default=True):
    d = (lambda v: v) if default else (lambda v: None)
    p.add_argument("--emission-pseudocount", type=float, default=d(1.0))
    p.add_argument("--transition-pseudocount", type=float, default=d(1.0))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebookhmm",
        description="Estimate an ebook text from print transcriptions with a profile HMM.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("alphabet", help="derive an emission alphabet from sample texts")
    p.add_argument("inputs", nargs="*", help="UTF-8 text files")
    p.add_argument("-o", "--output", default="alphabet.json")
    p.add_argument("--min-frequency", type=int, default=1)
    p.add_argument("--explicit", help="file whose characters form the alphabet (mandatory ones are added)")
    p.set_defaults(func=cmd_alphabet)

    p = sub.add_parser("align", help="pairwise alignment and identity of two or more transcriptions")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", default="align-out")
    p.add_argument("--alphabet")
    p.add_argument("--width", type=int, default=80, help="columns per rendered line")
    p.add_argument("--no-figures", action="store_true")
    _add_scoring(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("msa", help="Barton-Sternberg multiple alignment with match columns marked")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", default="msa-out")
    p.add_argument("--alphabet")
    p.add_argument("--rounds", type=int, default=2, help="refinement rounds (default 2)")
    p.add_argument("--gap-threshold", type=float, default=0.5)
    _add_scoring(p)
    p.set_defaults(func=cmd_msa)

    p = sub.add_parser("build", help="estimate a profile HMM from an alignment sidecar (msa.json)")
    p.add_argument("msa")
    p.add_argument("-o", "--output", default="model.json")
    p.add_argument("--gap-threshold", type=float, help="re-mark match columns with this threshold")
    _add_pseudo(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="refine a model with Baum-Welch")
    p.add_argument("model")
    p.add_argument("inputs", nargs="*")
    p.add_argument("-o", "--output", default="model-trained.json")
    p.add_argument("--trace", help="write the training trace JSON here")
    p.add_argument("--msa", help="alignment sidecar used to centre the bands")
    p.add_argument("--half-width", type=int, default=64)
    p.add_argument("--no-band", action="store_true", help="unbanded dynamic programming")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-6)
    _add_pseudo(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("consensus", help="write a model's modal sequence")
    p.add_argument("model")
    p.add_argument("-o", "--output", default="consensus.txt")
    p.add_argument("--profile", help="also plot per-position match probability to this image file")
    p.set_defaults(func=cmd_consensus)

    p = sub.add_parser("eval", help="compare a candidate text with a reference ebook text")
    p.add_argument("candidate")
    p.add_argument("reference")
    p.add_argument("-o", "--output", default="eval-out")
    p.add_argument("--name", default="candidate")
    p.add_argument("--show", type=int, default=20, help="substantive mismatches to print")
    p.add_argument("--no-figures", action="store_true")
    _add_scoring(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="load, align, build, (train) and decode in one run")
    p.add_argument("inputs", nargs="*")
    p.add_argument("-o", "--output")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--alphabet")
    p.add_argument("--alphabet-mode", choices=["default", "corpus-derived"])
    p.add_argument("--reference", help="reference ebook text for the evaluation report")
    p.add_argument("--rounds", type=int)
    p.add_argument("--gap-threshold", type=float)
    p.add_argument("--half-width", type=int)
    p.add_argument("--train", action="store_true", default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--no-figures", action="store_true")
    _add_scoring(p, default=False)
    _add_pseudo(p, default=False)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("synth", help=argparse.SUPPRESS)
    p.add_argument("ground_truth")
    p.add_argument("-o", "--output", default="synth-out")
    p.add_argument("--editions", type=int, default=7)
    p.add_argument("--noise", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    # argparse still lists suppressed subcommands; drop the hidden one
    sub._choices_actions = [a for a in sub._choices_actions if a.help != argparse.SUPPRESS]
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except EbookHmmError as exc:
        print(f"ebookhmm: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"ebookhmm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ebookhmm: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
