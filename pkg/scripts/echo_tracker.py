#!/usr/bin/env python3
"""Loopback external tracker: answers every track request with the prior box.

Speaks the harness wire protocol (one JSON object per line over stdio), so it
doubles as a reference implementation for plugging in real trackers. An
optional constant box shift and per-request delay can be set on the command
line to exercise wall-clock latency measurement:

    echo_tracker.py [--shift DX DY] [--delay SECONDS]
"""
import argparse
import json
import sys
import time


def emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--shift", nargs=2, type=float, default=(0.0, 0.0))
    parser.add_argument("--delay", type=float, default=0.0)
    args = parser.parse_args()

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        kind = msg.get("type")
        if kind == "init":
            emit({"type": "ready"})
        elif kind == "track":
            if args.delay > 0:
                time.sleep(args.delay)
            x, y, w, h = msg["prior"]
            emit({"type": "result", "box": [x + args.shift[0], y + args.shift[1], w, h]})
        elif kind == "quit":
            break
        else:
            emit({"type": "error", "message": f"unknown message type {kind!r}"})
            break


if __name__ == "__main__":
    main()
