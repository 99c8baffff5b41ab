import argparse
import json
import sys


def parse_args(argv):
    parser = argparse.ArgumentParser(description="Summarize a JSON file")
    parser.add_argument("path")
    parser.add_argument("--key", default="name")
    return parser.parse_args(argv)


def summarize(path, key):
    with open(path) as handle:
        records = json.load(handle)
    names = sorted(r[key] for r in records)
    return {"count": len(names), "first": names[0] if names else None}


def main():
    args = parse_args(sys.argv[1:])
    json.dump(summarize(args.path, args.key), sys.stdout, indent=2)


if __name__ == "__main__":
    main()
