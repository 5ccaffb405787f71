"""Minimal trainer stand-in speaking the evaluation wire protocol.

Behaviors are selected by argv so protocol failure modes can be exercised:
  (default)        answer every request with val_loss 0.5
  --die-after N    exit without replying on the N-th request (1-based)
  --garbage        reply with a non-JSON line
  --sleep S        sleep S seconds before each reply
  --bad-version    handshake with an unsupported protocol version
  --loss-field F   read the loss from genome field F (e.g. lr_hint)
"""

import argparse
import json
import math
import sys
import time


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--die-after", type=int, default=0)
    parser.add_argument("--garbage", action="store_true")
    parser.add_argument("--sleep", type=float, default=0.0)
    parser.add_argument("--bad-version", action="store_true")
    parser.add_argument("--loss", type=float, default=0.5)
    args = parser.parse_args()

    version = 99 if args.bad_version else 1
    print(json.dumps({"type": "hello", "protocol_version": version}), flush=True)

    served = 0
    for line in sys.stdin:
        request = json.loads(line)
        served += 1
        if args.die_after and served >= args.die_after:
            return 0
        if args.sleep:
            time.sleep(args.sleep)
        if args.garbage:
            print("this is not json", flush=True)
            continue
        chosen = math.sqrt(request["lr_low"] * request["lr_high"])
        print(
            json.dumps(
                {
                    "type": "result",
                    "request_id": request["request_id"],
                    "status": "ok",
                    "val_loss": args.loss,
                    "train_loss": args.loss,
                    "chosen_lr": chosen,
                    "wall_seconds": 0.0,
                }
            ),
            flush=True,
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
