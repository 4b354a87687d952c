"""Write a small synthetic corpus in VoiceBank-DEMAND or NISQA layout.

    python scripts/make_fixture.py data/vbd_synth --pairs 40
    python scripts/make_fixture.py data/nisqa_synth --layout nisqa
"""

import argparse

from sssrdist.synthetic import write_nisqa_fixture, write_voicebank_fixture


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("root")
    parser.add_argument("--layout", choices=["voicebank", "nisqa"], default="voicebank")
    parser.add_argument("--pairs", type=int, default=20)
    parser.add_argument("--duration", type=float, default=2.0)
    parser.add_argument("--split", default="test")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if args.layout == "voicebank":
        root = write_voicebank_fixture(args.root, args.pairs, args.seed, args.duration, args.split)
    else:
        root = write_nisqa_fixture(args.root, args.pairs, args.seed, args.duration)
    print(f"wrote {args.pairs} pairs under {root}")


if __name__ == "__main__":
    main()
