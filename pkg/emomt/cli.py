#!/usr/bin/env python3
"""
Command line entry point for the emotion-conditioned translation pipeline
"""
import argparse
import json
import logging
import os
import sys
from datetime import datetime

from emomt import __version__, config
from emomt.backends import BACKEND_TYPES, make_backend
from emomt.comet_client import make_comet_client
from emomt.corpus import load_corpus, write_manifest
from emomt.emotion import (EndpointAnnotator, FileAnnotator, annotate, annotation_stats,
                           load_annotations, save_annotations)
from emomt.errors import EmomtError, UsageError
from emomt.evaluation import evaluate_run, scores_to_dict
from emomt.experiment import load_report, load_spec, run_experiment, save_report, select_best, render_table
from emomt.prompting import TemplateKind, build_training_set
from emomt.training import ModelHandle, TrainingConfig, load_training_config, train
from emomt.utils import write_json, write_jsonl


def check_config():
    """Verify the numeric settings and report endpoints that fall back to defaults"""
    valid = True
    for name in ('REQUEST_TIMEOUT', 'REQUEST_BATCH_SIZE', 'MAX_WORKERS'):
        if getattr(config, name) <= 0:
            logging.error(f"{name} must be positive, got {getattr(config, name)}")
            valid = False
    if not 0.0 <= config.EMOTION_THRESHOLD <= 1.0:
        logging.error(f"EMOTION_THRESHOLD must lie in [0, 1], got {config.EMOTION_THRESHOLD}")
        valid = False
    if not config.SER_ENDPOINT:
        logging.debug("EMOMT_SER_ENDPOINT not set; annotate needs --from-file or --endpoint")
    if not config.COMET_ENDPOINT:
        logging.warning("EMOMT_COMET_ENDPOINT not set; COMET falls back to the stub scorer unless --comet-endpoint is given")
    if config.EXTERNAL_TRAIN_COMMAND and not config.EXTERNAL_GENERATE_COMMAND:
        logging.warning("External train command configured without a generate command")
    return valid


def _add_prompt_arguments(parser, required_template=True):
    parser.add_argument('--manifest', required=True, help='Corpus manifest (JSONL)')
    parser.add_argument('--template', required=required_template, choices=[k.value for k in TemplateKind],
                        help='Prompt template')
    parser.add_argument('--dimension', choices=['arousal', 'dominance', 'valence'],
                        help='Emotion dimension for emotion_* templates')
    parser.add_argument('--annotations', help='Emotion annotation file (JSONL)')
    parser.add_argument('--threshold', type=float, default=config.EMOTION_THRESHOLD,
                        help='Binarization threshold (default: %(default)s)')


def parse_arguments(argv=None):
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(prog='emomt', description='Emotion-conditioned English-French MT pipeline')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--verbose', action='store_true', help='Log at DEBUG level')
    parser.add_argument('--log-dir', default='.', help='Directory for the run log file')
    subparsers = parser.add_subparsers(dest='command', required=True)

    ingest = subparsers.add_parser('ingest', help='Validate a corpus manifest')
    ingest.add_argument('--manifest', required=True, help='Corpus manifest (JSONL)')
    ingest.add_argument('--check', action='store_true', help='Only validate, print nothing but errors')
    ingest.add_argument('--out', help='Write the normalized manifest here')

    annotate_cmd = subparsers.add_parser('annotate', help='Attach emotion scores to a corpus')
    annotate_cmd.add_argument('--manifest', required=True, help='Corpus manifest (JSONL)')
    source = annotate_cmd.add_mutually_exclusive_group()
    source.add_argument('--from-file', help='Precomputed annotation file (JSONL)')
    source.add_argument('--endpoint', help='SER endpoint URL (default: EMOMT_SER_ENDPOINT)')
    annotate_cmd.add_argument('--audio-root', help='Directory audio_ref paths are relative to')
    annotate_cmd.add_argument('--out', help='Write the annotation set here')
    annotate_cmd.add_argument('--stats', action='store_true', help='Print per-dimension statistics')
    annotate_cmd.add_argument('--threshold', type=float, default=config.EMOTION_THRESHOLD,
                              help='Threshold used by --stats (default: %(default)s)')

    prompts = subparsers.add_parser('build-prompts', help='Render a split with one template')
    _add_prompt_arguments(prompts)
    prompts.add_argument('--split', default=config.TRAIN_SPLIT, help='Split to render (default: %(default)s)')
    prompts.add_argument('--inference', action='store_true', help='Render prompts without completions')
    prompts.add_argument('--out', required=True, help='Output JSONL of prompt examples')

    train_cmd = subparsers.add_parser('train', help='Fine-tune a backend on one configuration')
    _add_prompt_arguments(train_cmd)
    train_cmd.add_argument('--backend', choices=BACKEND_TYPES, default='toy', help='Trainer backend')
    train_cmd.add_argument('--config', help='Training configuration (JSON)')
    train_cmd.add_argument('--work-dir', default=config.RUN_ROOT, help='Checkpoint directory (default: %(default)s)')
    train_cmd.add_argument('--out', help='Where to save the model handle (default: <work-dir>/handle.json)')

    evaluate_cmd = subparsers.add_parser('evaluate', help='Translate a split and score it')
    _add_prompt_arguments(evaluate_cmd, required_template=False)
    evaluate_cmd.add_argument('--model', required=True, help='Model handle (handle.json)')
    evaluate_cmd.add_argument('--split', default=config.TEST_SPLIT, help='Split to evaluate (default: %(default)s)')
    evaluate_cmd.add_argument('--comet-endpoint', help='COMET endpoint URL (default: EMOMT_COMET_ENDPOINT)')
    evaluate_cmd.add_argument('--local-comet', action='store_true', help='Run COMET in-process (unbabel-comet)')
    evaluate_cmd.add_argument('--out', help='Write scores JSON here')

    report = subparsers.add_parser('report', help='Run an experiment or re-render a saved report')
    source = report.add_mutually_exclusive_group(required=True)
    source.add_argument('--spec', help='Experiment spec (JSON)')
    source.add_argument('--from-report', help='Existing report JSON to re-render')
    report.add_argument('--out', help='Report path (.json, .md or text)')
    report.add_argument('--workers', type=int, default=1, help='Rows trained concurrently (default: %(default)s)')
    report.add_argument('--metric', default='comet_dev', help='Selection metric (default: %(default)s)')
    return parser.parse_args(argv)


def cmd_ingest(args):
    corpus = load_corpus(args.manifest)
    if args.out:
        write_manifest(corpus, args.out)
        logging.info(f"Wrote normalized manifest to {args.out}")
    if not args.check:
        print(json.dumps({"utterances": len(corpus), "splits": dict(corpus.split_counts)}, indent=2))


def cmd_annotate(args):
    corpus = load_corpus(args.manifest)
    if args.from_file:
        annotator = FileAnnotator(args.from_file)
    else:
        endpoint = args.endpoint or config.SER_ENDPOINT
        if not endpoint:
            raise UsageError("no annotation source: pass --from-file or --endpoint, or set EMOMT_SER_ENDPOINT")
        annotator = EndpointAnnotator(endpoint, audio_root=args.audio_root)
    annotations = annotate(corpus, annotator)
    if args.out:
        save_annotations(annotations, args.out)
        logging.info(f"Wrote {len(annotations)} annotations to {args.out}")
    if args.stats:
        stats = annotation_stats(annotations, args.threshold)
        print(json.dumps({d.value: s.to_dict() for d, s in stats.items()}, indent=2))


def _annotations_for(args, corpus):
    return load_annotations(args.annotations, corpus) if args.annotations else None


def cmd_build_prompts(args):
    corpus = load_corpus(args.manifest)
    examples = build_training_set(
        corpus, args.split, args.template, dimension=args.dimension,
        annotations=_annotations_for(args, corpus), threshold=args.threshold, inference=args.inference,
    )
    count = write_jsonl(args.out, (e.to_dict() for e in examples))
    logging.info(f"Wrote {count} {args.split} examples to {args.out}")


def cmd_train(args):
    corpus = load_corpus(args.manifest)
    annotations = _annotations_for(args, corpus)
    training_config, backend_options = (
        load_training_config(args.config) if args.config else (TrainingConfig(), {})
    )
    sets = [
        build_training_set(corpus, split, args.template, dimension=args.dimension,
                           annotations=annotations, threshold=args.threshold)
        for split in (config.TRAIN_SPLIT, config.DEV_SPLIT)
    ]
    backend = make_backend(args.backend, work_dir=args.work_dir, **backend_options)
    handle = train(backend, sets[0], sets[1], training_config)
    out = args.out or os.path.join(args.work_dir, "handle.json")
    handle.save(out)
    logging.info(f"Saved model handle to {out} (checkpoint {handle.checkpoint_ref})")


def cmd_evaluate(args):
    handle = ModelHandle.load(args.model)
    corpus = load_corpus(args.manifest)
    result = evaluate_run(
        handle, corpus, args.split, kind=args.template, dimension=args.dimension,
        annotations=_annotations_for(args, corpus),
        comet_client=make_comet_client(args.comet_endpoint, local=args.local_comet),
        threshold=args.threshold,
    )
    scores = scores_to_dict(result)
    if args.out:
        write_json(args.out, scores)
        logging.info(f"Wrote scores to {args.out}")
    print(json.dumps(scores, indent=2))


def cmd_report(args):
    if args.from_report:
        report = load_report(args.from_report)
    else:
        report = run_experiment(load_spec(args.spec), max_workers=args.workers)
    selected = None
    if not report.incomplete:
        selected = select_best(report, args.metric)
        logging.info(f"Selected configuration: {selected}")
    if args.out:
        save_report(report, args.out, selected=selected)
        logging.info(f"Wrote report to {args.out}")
    print(render_table(report, selected=selected), end="")


COMMANDS = {
    'ingest': cmd_ingest,
    'annotate': cmd_annotate,
    'build-prompts': cmd_build_prompts,
    'train': cmd_train,
    'evaluate': cmd_evaluate,
    'report': cmd_report,
}


def main(argv=None):
    """Run one pipeline command; returns the process exit status"""
    args = parse_arguments(argv)

    os.makedirs(args.log_dir, exist_ok=True)
    log_filename = os.path.join(args.log_dir, f"emomt_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log")
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_filename),
            logging.StreamHandler(sys.stdout)
        ]
    )

    if not check_config():
        return 1
    try:
        COMMANDS[args.command](args)
    except (EmomtError, OSError) as e:
        logging.error(f"{args.command} failed: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
