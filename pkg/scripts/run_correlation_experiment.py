"""Correlate distances with PESQ, STOI and SNR (or MOS) over a corpus.

Runs spectrogram-only unless ``--backends`` names SSSR models. Without a
corpus argument a synthetic VoiceBank-style set is generated first.

    python scripts/run_correlation_experiment.py --root /data/vbd --split test --backends hubert,xlsr
"""

import argparse
import tempfile
from pathlib import Path

from sssrdist.audio_io import build_manifest, load_pair
from sssrdist.correlation import correlation_report, write_report_csv
from sssrdist.distances import batch_distances, write_records_csv
from sssrdist.metrics import evaluate_utterance
from sssrdist.representations import load_backend
from sssrdist.synthetic import write_voicebank_fixture


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--root", help="corpus root; synthetic data when omitted")
    parser.add_argument("--layout", default="voicebank")
    parser.add_argument("--split", default="test")
    parser.add_argument("--backends", default="", help="comma list, e.g. hubert,xlsr")
    parser.add_argument("--checkpoint", default="default", help="checkpoint ref for every backend")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", default="runs/correlation")
    args = parser.parse_args()

    root = args.root or write_voicebank_fixture(tempfile.mkdtemp(), n_pairs=40, duration=2.0, split=args.split)
    manifest = build_manifest(root, args.layout, args.split)
    backends = [load_backend(m, args.checkpoint) for m in args.backends.split(",") if m]
    records = batch_distances(manifest, backends, ["FE", "OL"], workers=args.workers)

    entries = {e.id: e for e in manifest.entries}
    for rec in records:
        if rec.error is None:
            pair = load_pair(entries[rec.utterance_id])
            row = evaluate_utterance(pair.clean, pair.noisy, rec.utterance_id, ("pesq", "stoi"))
            rec.metrics.update(pesq=row.pesq, stoi=row.stoi)

    out = Path(args.out)
    write_records_csv(records, out / "distances.csv")
    distances = ["d_sg"] + [f"d_{l}_{b.model_id}" for b in backends for l in ("fe", "ol")]
    targets = ["pesq", "stoi", "mos" if args.layout == "nisqa" else "snr_db"]
    report = correlation_report(records, distances, targets)
    write_report_csv(report, out / "report.csv")
    for d in distances:
        cells = "  ".join(f"{t}: {report.cell(d, t).spearman}" for t in targets)
        print(f"{d:16s} spearman  {cells}")


if __name__ == "__main__":
    main()
