#!/usr/bin/env python3
"""Render the pairwise embedding cosine-similarity matrix of a sentence under
a trained checkpoint, as text and optionally as a PGM image."""

import argparse

from acnn import evaluate
from acnn.data import Vocabulary, parse_annotated, preprocess
from acnn.model import load_checkpoint


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--sentence", required=True,
                    help="bracket-text sentence, e.g. 'the [ big + big ] dog'")
    ap.add_argument("--pgm", default=None, help="optional output image path")
    args = ap.parse_args()

    ckpt = load_checkpoint(args.checkpoint)
    vocab = Vocabulary(words=ckpt.vocab_words)
    seq = preprocess(parse_annotated(args.sentence))
    ids = vocab.encode(seq.tokens)
    emb = ckpt.tensors["embedding"]
    mat, flagged = evaluate.similarity_heatmap(emb, ids)
    print(evaluate.heatmap_text(mat, tokens=seq.tokens))
    if flagged:
        print(f"zero-norm embeddings at positions: {flagged}")
    if args.pgm:
        evaluate.write_heatmap_pgm(mat, args.pgm)
        print(f"wrote {args.pgm}")


if __name__ == "__main__":
    main()
