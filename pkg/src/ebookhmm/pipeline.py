"""End-to-end run: transcriptions in, consensus text (and report) out."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .alphabet import Alphabet, AlphabetPolicy, build_alphabet, default_alphabet, load_corpus, read_text
from .errors import BandingError, ConfigurationError
from .evaluation import identity_report, summary_table
from .inference import BAND_RETRIES, Band, baum_welch, consensus, forward, match_probabilities
from .model import PseudocountConfig, build_model, model_to_json
from .msa import barton_sternberg, mark_match_columns, msa_sidecar, msa_to_text
from .pairwise import ScoringScheme

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "ebookhmm-run/1"


@dataclass
class PipelineConfig:
    inputs: list[str] = field(default_factory=list)
    output_dir: str = "out"
    alphabet_file: str | None = None
    alphabet_mode: str = "default"  # default | corpus-derived
    min_frequency: int = 1
    match_score: int = 1
    mismatch_score: int = -1
    gap_score: int = -1
    refinement_rounds: int = 2
    gap_threshold: float = 0.5
    emission_pseudocount: float = 1.0
    transition_pseudocount: float = 1.0
    band_half_width: int = 64
    train: bool = False
    epochs: int = 10
    tol: float = 1e-6
    reference: str | None = None
    figures: bool = True

    def validate(self) -> "PipelineConfig":
        if len(self.inputs) < 2:
            raise ConfigurationError(
                "the method requires at least two print editions with distinct pagination; "
                f"got {len(self.inputs)} input file(s)"
            )
        if self.alphabet_mode not in ("default", "corpus-derived"):
            raise ConfigurationError(f"unknown alphabet mode {self.alphabet_mode!r}")
        if self.min_frequency < 1 or self.refinement_rounds < 0 or self.epochs < 0:
            raise ConfigurationError("min_frequency >= 1, refinement_rounds >= 0 and epochs >= 0 are required")
        if not 0 < self.gap_threshold <= 1:
            raise ConfigurationError("gap_threshold must be in (0, 1]")
        if self.band_half_width < 1 or self.tol <= 0:
            raise ConfigurationError("band_half_width must be >= 1 and tol > 0")
        self.scoring()
        self.pseudocounts()
        return self

    def scoring(self) -> ScoringScheme:
        return ScoringScheme(self.match_score, self.mismatch_score, self.gap_score)

    def pseudocounts(self) -> PseudocountConfig:
        try:
            return PseudocountConfig(self.emission_pseudocount, self.transition_pseudocount)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def resolve(cls, config_file=None, **overrides) -> "PipelineConfig":
        """Defaults, then the JSON config file, then explicitly given overrides."""
        values = {}
        if config_file:
            try:
                values.update(json.loads(Path(config_file).read_text(encoding="utf-8")))
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config file {config_file} is not valid JSON: {exc}") from exc
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**values).validate()


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def resolve_alphabet(config: PipelineConfig, texts: list[str]) -> Alphabet:
    if config.alphabet_file:
        return Alphabet.load(config.alphabet_file)
    if config.alphabet_mode == "corpus-derived":
        return build_alphabet(texts, AlphabetPolicy(min_frequency=config.min_frequency))
    return default_alphabet()


def fit_band(model, seq, centers, half_width, retries=BAND_RETRIES) -> Band:
    """Band around ``centers`` wide enough to hold a complete path."""
    width = half_width
    for attempt in range(retries + 1):
        band = Band.from_centers(centers, model.M, width)
        try:
            forward(model, seq, band)
            return band
        except BandingError:
            if attempt == retries:
                raise
            log.info("band of half width %d too narrow for %s; doubling", width, seq.source_id)
            width *= 2


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every stage and write the artifacts into ``config.output_dir``.

    Returns the manifest that is also written as ``manifest.json``.
    """
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    clock = time.perf_counter()

    def lap(name):
        nonlocal clock
        now = time.perf_counter()
        timings[name] = round(now - clock, 3)
        clock = now

    texts = [read_text(p) for p in config.inputs]
    alphabet = resolve_alphabet(config, texts)
    seqs = load_corpus(config.inputs, alphabet)
    lap("load")

    scoring = config.scoring()
    msa = barton_sternberg(seqs, scoring, config.refinement_rounds)
    marked = mark_match_columns(msa, config.gap_threshold)
    lap("msa")

    pseudo = config.pseudocounts()
    model = build_model(marked, pseudo)
    lap("build")

    trace = None
    if config.train and config.epochs > 0:
        bands = [fit_band(model, s, marked.model_positions(i), config.band_half_width) for i, s in enumerate(seqs)]
        model, trace = baum_welch(model, seqs, config.epochs, config.tol, pseudo, bands)
        lap("train")

    modal = consensus(model)
    lap("consensus")

    outputs = {}

    def write(name, text):
        path = out / name
        path.write_text(text, encoding="utf-8")
        outputs[name] = path

    write("consensus.txt", modal.text)
    write("model.json", model_to_json(model))
    write("msa.txt", msa_to_text(msa))
    write("msa.json", msa_sidecar(marked))
    write("alphabet.json", alphabet.to_json())
    if trace is not None:
        write("trace.json", trace.to_json())

    report = None
    if config.reference:
        report = identity_report(modal.text, read_text(config.reference), scoring)
        write("report.json", report.to_json())
        write("report.tsv", summary_table({"profile HMM mode": report}))
        lap("evaluate")

    if config.figures:
        from .plotting import plot_match_profile, plot_mismatch_classes

        plot_match_profile(match_probabilities(model), out / "match_profile.png")
        outputs["match_profile.png"] = out / "match_profile.png"
        if report is not None:
            plot_mismatch_classes(report, out / "mismatches.png")
            outputs["mismatches.png"] = out / "mismatches.png"
        lap("figures")

    manifest = {
        "format": MANIFEST_FORMAT,
        "config": dataclasses.asdict(config),
        "inputs": {str(p): sha256(p) for p in config.inputs + ([config.reference] if config.reference else [])},
        "outputs": {name: sha256(path) for name, path in sorted(outputs.items())},
        "model_length": model.M,
        "consensus_length": len(modal),
        "timings": timings,
    }
    if report is not None:
        manifest["percentages"] = report.percentages()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return manifest
