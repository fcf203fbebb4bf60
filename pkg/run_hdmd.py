import sys

from dmd_forecasting.cli import main

# This script runs one Hankel-DMD command (analyze, forecast, sweep or synth) and exits with
# status 1 when the command fails. Run `python3 run_hdmd.py <command> --help` for the flags.

if __name__ == "__main__":
    sys.exit(main())
