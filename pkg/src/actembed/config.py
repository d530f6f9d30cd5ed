"""Strict INI-style experiment configuration.

Format: ``[section]`` headers followed by ``key = value`` lines. ``#`` starts
a comment. Lists are comma separated; matrices separate rows with ``;`` and
entries with whitespace or commas. Unknown sections or keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .autoencoder import MODES, TrainingConfig, check_weights
from .errors import ConfigError, ConfigTypeError, InvalidConfig, MissingRequired, UnknownKey
from .ingest import SynthConfig

METHODS = ("PCA",) + MODES
SOURCES = ("synthetic", "csv", "pamap2")
REQUIRED = object()


def _to_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _split(text):
    return [p.strip() for p in text.split(",") if p.strip()]


def _opt_float(text):
    return None if text.strip() == "" else float(text)


def _matrix(text):
    rows = [r.strip() for r in text.split(";") if r.strip()]
    return tuple(tuple(float(v) for v in r.replace(",", " ").split()) for r in rows)


def _fmt_matrix(m):
    return "; ".join(" ".join(repr(float(v)) for v in row) for row in m)


# (section, key) -> (parser, formatter, default, help)
_INT_LIST = (lambda t: tuple(int(v) for v in _split(t)), lambda v: ", ".join(str(x) for x in v))
_STR_LIST = (lambda t: tuple(_split(t)), lambda v: ", ".join(v))
_FLOAT = (float, repr)
_INT = (int, str)
_STR = (str.strip, str)
_BOOL = (_to_bool, lambda v: "true" if v else "false")
_OPT_FLOAT = (_opt_float, lambda v: "" if v is None else repr(v))
_MATRIX = (_matrix, _fmt_matrix)

SCHEMA = {
    "dataset": {
        "source": (*_STR, REQUIRED, "synthetic | csv | pamap2"),
        "path": (*_STR, "", "CSV file or PAMAP2 directory"),
        "channels": (*_INT_LIST, (), "channel indices to keep (empty: all)"),
        "sample_rate": (*_OPT_FLOAT, None, "Hz; csv: inferred when empty, pamap2: 100"),
        "window_seconds": (*_FLOAT, 5.12, "sliding window length"),
        "step_seconds": (*_FLOAT, 1.0, "sliding window step"),
        "max_gap_seconds": (*_FLOAT, 1.0, "pamap2: timestamp gap that starts a new session"),
    },
    "synthetic": {
        "class_names": (*_STR_LIST, (), "activity names"),
        "amplitudes": (*_MATRIX, (), "per class ';'-separated rows of per-channel amplitudes"),
        "frequencies": (*_MATRIX, (), "per class rows of per-channel frequencies (Hz)"),
        "subjects": (*_INT, 4, "synthetic subjects"),
        "sessions_per_subject": (*_INT, 2, "sessions per subject"),
        "bouts_per_session": (*_INT, 6, "activity bouts per session"),
        "min_bout_seconds": (*_FLOAT, 30.0, "shortest bout"),
        "max_bout_seconds": (*_FLOAT, 30.0, "longest bout"),
        "sample_rate": (*_FLOAT, 20.0, "Hz"),
        "noise_std": (*_FLOAT, 0.1, "additive Gaussian noise"),
        "subject_offset_std": (*_FLOAT, 0.5, "std of random per-subject offsets"),
        "subject_offsets": (*_MATRIX, (), "explicit per-subject offset rows"),
    },
    "neighbors": {
        "m": (*_INT, 5, "temporal neighbours per row"),
        "n": (*_INT, 5, "feature-space neighbours per row"),
    },
    "model": {
        "encoder": (*_INT_LIST, REQUIRED, "hidden layer sizes after the input, e.g. 128, 64"),
        "leaky_slope": (*_FLOAT, 0.01, "LeakyReLU negative slope"),
    },
    "training": {
        "alpha": (*_FLOAT, 0.3, "temporal coherence weight"),
        "beta": (*_FLOAT, 0.3, "locality preservation weight"),
        "learning_rate": (*_FLOAT, 0.01, "SGD step size"),
        "batch_size": (*_INT, 32, "mini-batch size"),
        "max_epochs": (*_INT, 500, "epoch cap"),
        "patience": (*_INT, 10, "epochs without improvement before stopping"),
        "val_fraction": (*_FLOAT, 0.15, "share of training rows (whole sessions) held out"),
    },
    "experiment": {
        "methods": (*_STR_LIST, METHODS, "subset of " + ", ".join(METHODS)),
        "k_offsets": (*_INT_LIST, (0, 1, 2, 3), "k = classes + offset"),
        "folds": (*_INT, 5, "cross-validation folds (session level)"),
        "kmeans_restarts": (*_INT, 10, "k-means++ restarts"),
        "kmeans_max_iters": (*_INT, 300, "Lloyd iteration cap"),
        "kmeans_tol": (*_FLOAT, 1e-6, "centroid shift tolerance"),
        "output_dir": (*_STR, "out", "report directory"),
        "seed": (*_INT, 0, "master seed"),
        "score_all": (*_BOOL, False, "score train + test rows instead of test rows only"),
    },
}


@dataclass(eq=True)
class ExperimentConfig:
    source: str
    encoder: tuple
    path: str = ""
    channels: tuple = ()
    sample_rate: float | None = None
    window_seconds: float = 5.12
    step_seconds: float = 1.0
    max_gap_seconds: float = 1.0
    synth: SynthConfig | None = None
    m: int = 5
    n: int = 5
    leaky_slope: float = 0.01
    training: TrainingConfig = field(default_factory=TrainingConfig)
    methods: tuple = METHODS
    k_offsets: tuple = (0, 1, 2, 3)
    folds: int = 5
    kmeans_restarts: int = 10
    kmeans_max_iters: int = 300
    kmeans_tol: float = 1e-6
    output_dir: str = "out"
    seed: int = 0
    score_all: bool = False

    def validate(self, check_paths: bool = False):
        if self.source not in SOURCES:
            raise InvalidConfig(f"dataset.source must be one of {', '.join(SOURCES)}")
        if self.source == "synthetic":
            if self.synth is None:
                raise MissingRequired("[synthetic] class_names, amplitudes and frequencies are required")
            self.synth.validate()
        elif not self.path:
            raise MissingRequired(f"dataset.path is required for source {self.source}")
        if check_paths and self.source != "synthetic" and not Path(self.path).exists():
            raise InvalidConfig(f"dataset.path {self.path!r} does not exist")
        if not self.encoder or any(h < 1 for h in self.encoder):
            raise InvalidConfig("model.encoder needs positive layer sizes")
        if self.window_seconds <= 0 or self.step_seconds <= 0:
            raise InvalidConfig("window_seconds and step_seconds must be positive")
        if self.m < 1 or self.n < 1:
            raise InvalidConfig("neighbors.m and neighbors.n must be >= 1")
        try:
            check_weights(self.training.alpha, self.training.beta)
        except InvalidConfig as exc:
            raise InvalidConfig(f"[training] {exc}") from None
        self.training.validate()
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise InvalidConfig(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
        if any(k < 0 for k in self.k_offsets) or not self.k_offsets:
            raise InvalidConfig("k_offsets must be non-empty and >= 0")
        if self.folds < 2:
            raise InvalidConfig("folds must be >= 2")
        if self.kmeans_restarts < 1 or self.kmeans_max_iters < 1:
            raise InvalidConfig("kmeans_restarts and kmeans_max_iters must be >= 1")
        return self


def _read(text, source):
    values: dict[tuple, tuple] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise UnknownKey(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"{source}:{lineno}: key outside of a section")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in SCHEMA[section]:
            raise UnknownKey(f"{source}:{lineno}: unknown key {key!r} in [{section}]")
        if (section, key) in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[(section, key)] = (value.strip(), lineno)
    return values


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    raw = _read(text, source)
    parsed: dict[str, dict] = {s: {} for s in SCHEMA}
    for section, keys in SCHEMA.items():
        for key, (parse, _fmt, default, _help) in keys.items():
            if (section, key) in raw:
                value, lineno = raw[(section, key)]
                try:
                    parsed[section][key] = parse(value)
                except ValueError as exc:
                    raise ConfigTypeError(f"{source}:{lineno}: {section}.{key}: {exc}") from None
            elif default is REQUIRED:
                raise MissingRequired(f"{source}: {section}.{key} is required")
            else:
                parsed[section][key] = default

    synth = None
    if any(sec == "synthetic" for sec, _ in raw):
        synth = SynthConfig(**parsed["synthetic"])
    ds = parsed["dataset"]
    cfg = ExperimentConfig(
        source=ds["source"], path=ds["path"], channels=ds["channels"],
        sample_rate=ds["sample_rate"], window_seconds=ds["window_seconds"],
        step_seconds=ds["step_seconds"], max_gap_seconds=ds["max_gap_seconds"],
        synth=synth, m=parsed["neighbors"]["m"], n=parsed["neighbors"]["n"],
        encoder=parsed["model"]["encoder"], leaky_slope=parsed["model"]["leaky_slope"],
        training=TrainingConfig(**parsed["training"]),
        **parsed["experiment"],
    )
    return cfg.validate()


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config_text(text, str(path))


def _section_values(cfg: ExperimentConfig, section):
    if section == "dataset":
        return {k: getattr(cfg, k) for k in SCHEMA["dataset"]}
    if section == "synthetic":
        return None if cfg.synth is None else dataclasses.asdict(cfg.synth)
    if section == "neighbors":
        return {"m": cfg.m, "n": cfg.n}
    if section == "model":
        return {"encoder": cfg.encoder, "leaky_slope": cfg.leaky_slope}
    if section == "training":
        return {k: getattr(cfg.training, k) for k in SCHEMA["training"]}
    return {k: getattr(cfg, k) for k in SCHEMA["experiment"]}


def format_config(cfg: ExperimentConfig) -> str:
    """Serialize every resolved value; ``parse_config_text`` inverts it."""
    lines = []
    for section, keys in SCHEMA.items():
        vals = _section_values(cfg, section)
        if vals is None:
            continue
        lines.append(f"[{section}]")
        for key, (_parse, fmt, _default, _help) in keys.items():
            lines.append(f"{key} = {fmt(vals[key])}".rstrip())
        lines.append("")
    return "\n".join(lines)


def defaults_help() -> str:
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, (_parse, fmt, default, help_) in keys.items():
            shown = "(required)" if default is REQUIRED else fmt(default) or "(empty)"
            out.append(f"  {key} = {shown}    {help_}")
    return "\n".join(out)


def parse_synth_config(path) -> SynthConfig:
    """Read only the [synthetic] section of a config file."""
    raw = _read(Path(path).read_text(encoding="utf-8"), str(path))
    kwargs = {}
    for key, (parse, _fmt, default, _help) in SCHEMA["synthetic"].items():
        if ("synthetic", key) in raw:
            value, lineno = raw[("synthetic", key)]
            try:
                kwargs[key] = parse(value)
            except ValueError as exc:
                raise ConfigTypeError(f"{path}:{lineno}: synthetic.{key}: {exc}") from None
        else:
            kwargs[key] = default
    synth = SynthConfig(**kwargs)
    synth.validate()
    return synth
