"""
Experiment orchestration and reporting

Two experiment kinds are supported:

* model_selection: one base-template row per backend, compared on BLEU and
  COMET for the dev and test splits.
* emotion_conditioning: a baseline row (base template, no emotion) plus any
  part of the dimension x emotion-template grid, each row retrained from the
  backend's initial state.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Optional, Tuple

from emomt import config
from emomt.backends import BACKEND_TYPES, make_backend
from emomt.comet_client import make_comet_client
from emomt.corpus import Split, load_corpus
from emomt.emotion import EmotionDimension, EndpointAnnotator, annotate, load_annotations, parse_dimension
from emomt.errors import IncompleteReportError, UsageError, ValidationError
from emomt.evaluation import evaluate_run
from emomt.prompting import EMOTION_KINDS, TemplateKind, build_training_set, parse_template
from emomt.training import TrainingConfig, train
from emomt.utils import error_log, read_json, run_directory, write_json, write_jsonl

logger = logging.getLogger(__name__)

MODEL_SELECTION = "model_selection"
EMOTION_CONDITIONING = "emotion_conditioning"
EXPERIMENT_KINDS = (MODEL_SELECTION, EMOTION_CONDITIONING)

METRICS = ("bleu_dev", "bleu_test", "comet_dev", "comet_test")
SIDE_LABELS = {
    TemplateKind.EMOTION_SOURCE: "source-side",
    TemplateKind.EMOTION_TARGET: "target-side",
    TemplateKind.EMOTION_TOKEN: "token",
}

# any of these would let a row warm-start from another row's checkpoint
WARM_START_KEYS = ("resume_from", "init_checkpoint", "init_from", "warm_start")


def emotion_grid(dimensions=None, kinds=EMOTION_KINDS):
    """
    Dimension x emotion-template grid, dimension-major

    Returns:
        list: (TemplateKind, EmotionDimension) pairs, arousal source-side first
    """
    dimensions = list(EmotionDimension) if dimensions is None else [parse_dimension(d) for d in dimensions]
    return [(parse_template(kind), dimension) for dimension in dimensions for kind in kinds]


def row_label(backend_name, template, dimension):
    """Baseline rows are named after their backend, emotion rows after what they condition on"""
    template = parse_template(template)
    if not template.uses_emotion:
        return backend_name
    return f"{parse_dimension(dimension).value} {SIDE_LABELS[template]}"


@dataclass(frozen=True)
class BackendSpec:
    name: str
    backend_type: str
    template: TemplateKind = TemplateKind.BASE_PLAIN
    options: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.backend_type not in BACKEND_TYPES:
            raise ValidationError(f"backend {self.name!r}: unknown type {self.backend_type!r}")
        object.__setattr__(self, "template", parse_template(self.template))
        if self.template.uses_emotion:
            raise ValidationError(f"backend {self.name!r}: default template must be a base template")
        object.__setattr__(self, "options", MappingProxyType(dict(self.options)))


@dataclass(frozen=True)
class RowSpec:
    label: str
    backend: str
    template: TemplateKind
    dimension: Optional[EmotionDimension] = None

    def __post_init__(self):
        object.__setattr__(self, "template", parse_template(self.template))
        object.__setattr__(self, "dimension", parse_dimension(self.dimension))
        if self.template.uses_emotion and self.dimension is None:
            raise ValidationError(f"row {self.label!r}: template {self.template} needs a dimension")
        if not self.template.uses_emotion and self.dimension is not None:
            raise ValidationError(f"row {self.label!r}: template {self.template} takes no dimension")

    @property
    def is_baseline(self):
        return not self.template.uses_emotion


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    manifest: str
    backends: Mapping[str, BackendSpec]
    rows: Tuple[RowSpec, ...]
    training: TrainingConfig = field(default_factory=TrainingConfig)
    annotations: Optional[str] = None
    comet_endpoint: Optional[str] = None
    ser_endpoint: Optional[str] = None
    run_root: str = config.RUN_ROOT
    threshold: float = config.EMOTION_THRESHOLD
    baseline_label: Optional[str] = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValidationError(f"unknown experiment kind {self.kind!r}, expected one of {EXPERIMENT_KINDS}")
        if not self.rows:
            raise ValidationError("experiment has no configurations")
        labels = [row.label for row in self.rows]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise ValidationError(f"duplicate row label(s): {', '.join(duplicates)}")
        for row in self.rows:
            if row.backend not in self.backends:
                raise ValidationError(f"row {row.label!r} uses undefined backend {row.backend!r}")

        if self.kind == EMOTION_CONDITIONING:
            baselines = [row for row in self.rows if row.is_baseline]
            if len(baselines) != 1:
                raise ValidationError(
                    f"emotion_conditioning needs exactly one baseline row, found {len(baselines)}"
                )
            if self.baseline_label is None:
                object.__setattr__(self, "baseline_label", baselines[0].label)
        elif any(not row.is_baseline for row in self.rows):
            raise ValidationError("model_selection rows must use base templates")

        if self.baseline_label is not None and self.baseline_label not in labels:
            raise ValidationError(f"baseline label {self.baseline_label!r} is not a row label")
        if self.needs_annotations and not (self.annotations or self.ser_endpoint):
            raise ValidationError("emotion rows need an annotations file or an SER endpoint")

    @property
    def configurations(self):
        return [(row.template, row.dimension) for row in self.rows]

    @property
    def needs_annotations(self):
        return any(not row.is_baseline for row in self.rows)

    @classmethod
    def from_dict(cls, data, base_dir="."):
        """
        Build a spec from its JSON form

        Relative paths are resolved against base_dir (the spec file's directory).
        """
        _reject_warm_start(data, "spec")
        _reject_warm_start(data.get("training") or {}, "training")

        def resolve(path):
            if path is None or os.path.isabs(path):
                return path
            return os.path.join(base_dir, path)

        if not data.get("backends"):
            raise ValidationError("spec defines no backends")
        backends = {}
        for name, entry in data["backends"].items():
            _reject_warm_start(entry, f"backend {name!r}")
            _reject_warm_start(entry.get("options") or {}, f"backend {name!r} options")
            backends[name] = BackendSpec(
                name=name,
                backend_type=entry.get("type", "toy"),
                template=entry.get("template", TemplateKind.BASE_PLAIN),
                options=entry.get("options") or {},
            )

        kind = data.get("kind", EMOTION_CONDITIONING)
        rows = _rows_from_dict(kind, data.get("configurations"), data.get("dimensions"), backends)
        return cls(
            kind=kind,
            manifest=resolve(data["manifest"]),
            backends=MappingProxyType(backends),
            rows=tuple(rows),
            training=TrainingConfig.from_dict(data.get("training") or {}),
            annotations=resolve(data.get("annotations")),
            comet_endpoint=data.get("comet_endpoint"),
            ser_endpoint=data.get("ser_endpoint"),
            run_root=resolve(data.get("run_root", config.RUN_ROOT)),
            threshold=data.get("threshold", config.EMOTION_THRESHOLD),
            baseline_label=data.get("baseline_label"),
        )


def _reject_warm_start(entry, where):
    found = [key for key in WARM_START_KEYS if key in entry]
    if found:
        raise UsageError(
            f"{where} sets {', '.join(found)}: every configuration trains from the backend's initial state"
        )


def _default_backend(backends, what):
    if len(backends) != 1:
        raise ValidationError(f"{what} must name its backend when the spec defines several")
    return next(iter(backends))


def _rows_from_dict(kind, configurations, dimensions, backends):
    if kind == MODEL_SELECTION and configurations is None:
        return [RowSpec(label=name, backend=name, template=b.template) for name, b in backends.items()]

    if configurations == "grid" or configurations is None:
        backend = _default_backend(backends, "grid configuration")
        baseline = backends[backend].template
        pairs = [(baseline, None)] + emotion_grid(dimensions)
        return [
            RowSpec(label=row_label(backend, t, d), backend=backend, template=t, dimension=d)
            for t, d in pairs
        ]

    rows = []
    for entry in configurations:
        _reject_warm_start(entry, "configuration")
        backend = entry.get("backend") or _default_backend(backends, "configuration")
        if backend not in backends:
            raise ValidationError(f"configuration uses undefined backend {backend!r}")
        template = parse_template(entry.get("template", backends[backend].template))
        dimension = parse_dimension(entry.get("dimension"))
        rows.append(RowSpec(
            label=entry.get("label") or row_label(backend, template, dimension),
            backend=backend,
            template=template,
            dimension=dimension,
        ))
    return rows


def load_spec(path):
    """Read an ExperimentSpec JSON file"""
    return ExperimentSpec.from_dict(read_json(path), base_dir=os.path.dirname(os.path.abspath(path)))


@dataclass(frozen=True)
class ReportRow:
    label: str
    bleu_dev: Optional[float] = None
    bleu_test: Optional[float] = None
    comet_dev: Optional[float] = None
    comet_test: Optional[float] = None
    error: Optional[str] = None

    @property
    def complete(self):
        return self.error is None and all(getattr(self, m) is not None for m in METRICS)

    def to_dict(self):
        return {
            "label": self.label,
            **{m: getattr(self, m) for m in METRICS},
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            label=data["label"],
            error=data.get("error"),
            **{m: (float(data[m]) if data.get(m) is not None else None) for m in METRICS},
        )


@dataclass(frozen=True)
class ExperimentReport:
    rows: Tuple[ReportRow, ...]
    baseline_label: Optional[str] = None
    deltas: Mapping[str, Mapping[str, Optional[float]]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    @property
    def labels(self):
        return [row.label for row in self.rows]

    @property
    def incomplete(self):
        return [row.label for row in self.rows if not row.complete]

    def row(self, label):
        for row in self.rows:
            if row.label == label:
                return row
        raise UsageError(f"no row labelled {label!r}; rows are {self.labels}")

    def delta(self, label, metric, digits=1):
        """Delta rounded for display; None when either cell is missing"""
        value = self.deltas.get(label, {}).get(metric)
        return None if value is None else round(value, digits)

    def to_dict(self):
        return {
            "baseline_label": self.baseline_label,
            "rows": [row.to_dict() for row in self.rows],
            "deltas": {label: dict(cells) for label, cells in self.deltas.items()},
        }

    @classmethod
    def from_dict(cls, data):
        report = cls(rows=[ReportRow.from_dict(r) for r in data["rows"]])
        baseline = data.get("baseline_label")
        # deltas are always recomputed from the cells, never trusted from the file
        return compute_deltas(report, baseline) if baseline else report


def compute_deltas(report, baseline_label=None):
    """
    Cellwise row minus baseline

    Args:
        report: ExperimentReport
        baseline_label: Row to subtract; defaults to report.baseline_label

    Returns:
        ExperimentReport: Copy with baseline_label and full-precision deltas set
    """
    baseline_label = baseline_label or report.baseline_label
    if baseline_label is None:
        raise UsageError("no baseline label given")
    baseline = report.row(baseline_label)
    deltas = {}
    for row in report.rows:
        cells = {}
        for metric in METRICS:
            value, reference = getattr(row, metric), getattr(baseline, metric)
            cells[metric] = None if value is None or reference is None else value - reference
        deltas[row.label] = MappingProxyType(cells)
    return replace(report, baseline_label=baseline_label, deltas=MappingProxyType(deltas))


def select_best(report, primary_metric="comet_dev"):
    """
    Label of the best row

    Ranks on the primary metric (dev COMET by default), breaks ties on dev
    BLEU, then keeps the earlier row.

    Raises:
        IncompleteReportError: some row lacks a cell or failed
    """
    if primary_metric not in METRICS:
        raise UsageError(f"unknown metric {primary_metric!r}, expected one of {METRICS}")
    if not report.rows:
        raise IncompleteReportError("report has no rows")
    if report.incomplete:
        raise IncompleteReportError(f"report has incomplete row(s): {', '.join(report.incomplete)}")
    secondary = "bleu_dev" if primary_metric != "bleu_dev" else "comet_dev"
    best = max(
        enumerate(report.rows),
        key=lambda item: (getattr(item[1], primary_metric), getattr(item[1], secondary), -item[0]),
    )
    return best[1].label


def load_report(path):
    """Read a report JSON file (rows plus optional baseline label)"""
    return ExperimentReport.from_dict(read_json(path))


def _cell(value, signed=False):
    if value is None:
        return "n/a"
    return f"{value:+.1f}" if signed else f"{value:.1f}"


def _pair(first, second, signed=False):
    if first is None and second is None:
        return ""
    return f"{_cell(first, signed)}/{_cell(second, signed)}"


def render_table(report, markdown=False, selected=None):
    """
    Render a report as an aligned text table or a markdown pipe table

    The selected row is starred; failed rows show n/a and are listed
    with their error under the table.
    """
    header = ["Model", "BLEU dev", "BLEU test", "COMET dev", "COMET test"]
    with_deltas = report.baseline_label is not None
    if with_deltas:
        header += ["dBLEU dev/test", "dCOMET dev/test"]

    body = []
    for row in report.rows:
        line = [f"{row.label} *" if row.label == selected else row.label]
        line += [_cell(getattr(row, m)) for m in METRICS]
        if with_deltas:
            line.append(_pair(report.delta(row.label, "bleu_dev"), report.delta(row.label, "bleu_test"), True))
            line.append(_pair(report.delta(row.label, "comet_dev"), report.delta(row.label, "comet_test"), True))
        body.append(line)

    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]

    def fmt(line):
        cells = [line[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(line[1:], widths[1:])]
        return f"| {' | '.join(cells)} |" if markdown else "  ".join(cells)

    lines = [fmt(header)]
    if markdown:
        lines.append("|" + "|".join(["-" * (widths[0] + 2)] + ["-" * (w + 1) + ":" for w in widths[1:]]) + "|")
    else:
        lines.append("-" * len(lines[0]))
    lines += [fmt(line) for line in body]

    notes = []
    if selected:
        notes.append(f"* selected: {selected}")
    if with_deltas:
        notes.append(f"deltas relative to {report.baseline_label}")
    for row in report.rows:
        if row.error:
            notes.append(f"n/a {row.label}: {row.error}")
    if notes:
        lines.append("")
        lines += notes
    return "\n".join(lines) + "\n"


def report_to_dict(report, selected=None):
    return {
        **report.to_dict(),
        "selected": selected,
        "incomplete": report.incomplete,
    }


def save_report(report, path, selected=None):
    """Write a report as JSON (.json), markdown (.md) or text (anything else)"""
    extension = os.path.splitext(path)[1].lower()
    if extension == ".json":
        write_json(path, report_to_dict(report, selected))
        return
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(render_table(report, markdown=extension == ".md", selected=selected))


def _resolve_annotations(spec, corpus):
    if not spec.needs_annotations:
        return None
    if spec.annotations:
        return load_annotations(spec.annotations, corpus)
    return annotate(corpus, EndpointAnnotator(spec.ser_endpoint))


def _run_row(spec, row, corpus, annotations, comet_client):
    """
    Train and evaluate one configuration in its own run directory

    Returns:
        tuple: (ReportRow, ModelHandle or None, expected initial checksum or None)
    """
    backend_spec = spec.backends[row.backend]
    run_dir = run_directory(spec.run_root, row.label, spec.training.seed)
    os.makedirs(run_dir, exist_ok=True)
    handle = None
    expected_checksum = None
    try:
        write_json(os.path.join(run_dir, "config.json"), {
            "label": row.label,
            "backend": row.backend,
            "backend_type": backend_spec.backend_type,
            "backend_options": dict(backend_spec.options),
            "template": row.template.value,
            "dimension": row.dimension.value if row.dimension else None,
            "training": spec.training.to_dict(),
            "threshold": spec.threshold,
        })
        backend = make_backend(backend_spec.backend_type, work_dir=run_dir, **backend_spec.options)
        expected_checksum = backend.initial_checksum(spec.training.seed)

        sets = {}
        for split in (Split.TRAIN, Split.DEV):
            sets[split] = build_training_set(
                corpus, split, row.template, dimension=row.dimension,
                annotations=annotations, threshold=spec.threshold,
            )
            write_jsonl(os.path.join(run_dir, f"{split.value}.jsonl"), (e.to_dict() for e in sets[split]))

        logger.info(f"[{row.label}] training")
        handle = train(backend, sets[Split.TRAIN], sets[Split.DEV], spec.training)
        handle.save(os.path.join(run_dir, "handle.json"))
        if expected_checksum and handle.init_checksum and handle.init_checksum != expected_checksum:
            raise UsageError(f"row {row.label!r} did not start from the backend's initial state")

        results = {}
        for split in (Split.DEV, Split.TEST):
            results[split] = evaluate_run(
                handle, corpus, split, annotations=annotations, comet_client=comet_client,
                backend=backend, threshold=spec.threshold, run_dir=run_dir,
            )
        report_row = ReportRow(
            label=row.label,
            bleu_dev=results[Split.DEV]["bleu"].score,
            bleu_test=results[Split.TEST]["bleu"].score,
            comet_dev=results[Split.DEV]["comet"].score,
            comet_test=results[Split.TEST]["comet"].score,
        )
    except Exception as e:
        logger.error(f"[{row.label}] failed: {e}")
        error_log(f"{row.label}: {type(e).__name__}: {e}", run_dir)
        return ReportRow(label=row.label, error=f"{type(e).__name__}: {e}"), handle, expected_checksum
    return report_row, handle, expected_checksum


def _check_fresh_start(spec, outcomes):
    """Rows of one backend share initial parameters and never share a checkpoint"""
    checksums = {}
    checkpoints = {}
    for row, (_, handle, expected) in zip(spec.rows, outcomes):
        if handle is None:
            continue
        checksum = handle.init_checksum or expected
        if checksum:
            first = checksums.setdefault(row.backend, (row.label, checksum))
            if first[1] != checksum:
                raise UsageError(
                    f"rows {first[0]!r} and {row.label!r} started from different initial parameters"
                )
        other = checkpoints.setdefault(handle.checkpoint_ref, row.label)
        if other != row.label:
            raise UsageError(f"rows {other!r} and {row.label!r} share checkpoint {handle.checkpoint_ref}")


def run_experiment(spec, max_workers=1, comet_client=None):
    """
    Train and evaluate every configuration of an experiment

    Args:
        spec: ExperimentSpec
        max_workers: Rows trained concurrently; each row gets its own backend
        comet_client: CometClient; built from the spec's endpoint when omitted

    Returns:
        ExperimentReport: One row per configuration, in spec order, with
        deltas when the spec has a baseline
    """
    corpus = load_corpus(spec.manifest)
    annotations = _resolve_annotations(spec, corpus)
    if comet_client is None:
        comet_client = make_comet_client(spec.comet_endpoint)

    logger.info(f"Running {spec.kind} experiment with {len(spec.rows)} configuration(s)")

    def run(row):
        return _run_row(spec, row, corpus, annotations, comet_client)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(run, spec.rows))
    else:
        outcomes = [run(row) for row in spec.rows]

    _check_fresh_start(spec, outcomes)
    report = ExperimentReport(rows=[outcome[0] for outcome in outcomes])
    if spec.baseline_label:
        report = compute_deltas(report, spec.baseline_label)
    if report.incomplete:
        logger.warning(f"Incomplete row(s): {', '.join(report.incomplete)}")
    return report
