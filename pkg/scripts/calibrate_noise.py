"""Re-derive the noise model of the shipped profile from the coherence targets.

Usage: python3 scripts/calibrate_noise.py [--iterations N] [--workers N]
Prints the adjusted noise block as JSON; paste it into the profile.
"""

import argparse
import json
from dataclasses import asdict

from pentasense.calibration import calibrate_noise, coherence_times
from pentasense.profile import profile_noise, profile_protocol, profile_rates


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=4)
    ap.add_argument("--workers", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rates, params = profile_rates(), profile_protocol()
    noise = calibrate_noise(rates, profile_noise(), params, args.seed, args.iterations, args.workers)
    print(json.dumps(asdict(noise), indent=2))
    print(coherence_times(rates, noise, params, args.seed, args.workers))


if __name__ == "__main__":
    main()
