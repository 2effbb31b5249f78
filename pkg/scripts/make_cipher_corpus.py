#!/usr/bin/env python3
"""
Generate the synthetic cipher corpus and a matching annotation file

Usage:
    python scripts/make_cipher_corpus.py --out data [--size 500] [--seed 0]

Writes <out>/manifest.jsonl and <out>/annotations.jsonl.
"""
import argparse
import logging
import os
import sys

from emomt.corpus import write_manifest
from emomt.emotion import save_annotations
from emomt.synthetic import cipher_corpus, random_annotations


def parse_arguments():
    parser = argparse.ArgumentParser(description='Generate a synthetic cipher translation corpus')
    parser.add_argument('--out', required=True, help='Output directory')
    parser.add_argument('--size', type=int, default=500, help='Number of utterances (default: %(default)s)')
    parser.add_argument('--seed', type=int, default=0, help='Random seed (default: %(default)s)')
    parser.add_argument('--shift', type=int, default=3, help='Cipher offset (default: %(default)s)')
    parser.add_argument('--identity', action='store_true', help='Copy task: target equals source')
    return parser.parse_args()


def main():
    args = parse_arguments()
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s',
                        handlers=[logging.StreamHandler(sys.stdout)])

    corpus = cipher_corpus(size=args.size, seed=args.seed, shift=args.shift, identity=args.identity)
    manifest = os.path.join(args.out, "manifest.jsonl")
    annotations = os.path.join(args.out, "annotations.jsonl")
    write_manifest(corpus, manifest)
    save_annotations(random_annotations(corpus, seed=args.seed), annotations)
    logging.info(f"Wrote {len(corpus)} utterances to {manifest} and annotations to {annotations}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
