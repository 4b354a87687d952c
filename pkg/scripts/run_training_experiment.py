"""Train mask-based enhancers with several losses and compare test scores.

On synthetic data with a few epochs this is a quick sanity run; pointing
it at VoiceBank-DEMAND with 50 epochs reproduces the full comparison.

    python scripts/run_training_experiment.py --losses sg,sisdr --epochs 3
    python scripts/run_training_experiment.py --train-root /data/vbd --test-root /data/vbd \
        --losses sg,fe_hubert,ol_hubert --epochs 50
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from sssrdist.audio_io import build_manifest, holdout_speakers, load_pair
from sssrdist.enhancement import TrainingConfig, enhance, model_from_checkpoint, select_checkpoint, train
from sssrdist.metrics import evaluate_utterance, mean_row
from sssrdist.representations import load_backend
from sssrdist.synthetic import write_voicebank_fixture


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--train-root")
    parser.add_argument("--test-root")
    parser.add_argument("--losses", default="sg,sisdr")
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--checkpoint", default="default", help="checkpoint ref for SSSR losses")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs/training")
    args = parser.parse_args()

    tmp = Path(tempfile.mkdtemp())
    train_root = args.train_root or write_voicebank_fixture(tmp / "train", 24, seed=1, split="train")
    test_root = args.test_root or write_voicebank_fixture(tmp / "test", 8, seed=2, split="test")
    tr, va = holdout_speakers(build_manifest(train_root, "voicebank", "train"), 2, seed=args.seed)
    train_pairs = [load_pair(e) for e in tr.entries]
    valid_pairs = [load_pair(e) for e in va.entries]
    test_pairs = [load_pair(e) for e in build_manifest(test_root, "voicebank", "test").entries]

    for loss in args.losses.split(","):
        backends = {}
        for model_id in ("hubert", "xlsr"):
            if loss.endswith(model_id):
                backends[model_id] = load_backend(model_id, args.checkpoint)
        cfg = TrainingConfig(loss=loss, epochs=args.epochs, seed=args.seed)
        ckpts = train(train_pairs, valid_pairs, cfg, backends=backends, out_dir=Path(args.out) / loss)
        best = select_checkpoint(ckpts)
        model = model_from_checkpoint(best)
        rows = [evaluate_utterance(p.clean, enhance(model, p.noisy), p.id, ("pesq", "stoi", "si_sdr"))
                for p in test_pairs]
        avg = mean_row(rows)
        print(f"{loss:10s} best epoch {best.epoch}  " + "  ".join(f"{k} {v:.3f}" for k, v in avg.items() if v is not None))
    print("noisy input:", np.mean([evaluate_utterance(p.clean, p.noisy, p.id, ("pesq",)).pesq
                                   for p in test_pairs]))


if __name__ == "__main__":
    main()
