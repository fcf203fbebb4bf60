import os

from dotenv import load_dotenv

# Values from a local .env file take effect before any default is read.
load_dotenv()

# Sampling and preprocessing
DEFAULT_DT = 0.1
DEFAULT_CUTOFF_HZ = 0.5
DEFAULT_FILTER_TAPS = 101

# Reference wave period of the floating-turbine record, seconds (f = 0.1367 Hz)
REFERENCE_PERIOD = 7.3143

# Full-factorial grid, in multiples of the reference period
LTR_LEVELS = (1.0, 2.0, 4.0, 8.0, 16.0)
LD_LEVELS = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
LTE_LEVELS = (1.0, 2.0, 4.0)
N_TEST_INSTANTS = 250

# Recommended deterministic setting: l_tr = 10 T, l_d = 0.5625 l_tr
RECOMMENDED_LTR = 10.0
RECOMMENDED_LD_RATIO = 0.5625

# Stochastic Hankel-DMD
SHDMD_LTR_RANGE = (4.0, 16.0)
SHDMD_LD_RATIO_RANGE = (0.125, 1.0)
SHDMD_REALIZATIONS = 100
COVERAGE_FACTOR = 2.0

# DMD numerics
RANK_TOLERANCE = 1e-10
JSD_BINS = 50


def _env_float(name, default):
    value = os.getenv(name)
    return float(value) if value not in (None, "") else default


def _env_int(name, default):
    value = os.getenv(name)
    return int(value) if value not in (None, "") else default


LOG_FILE = os.getenv("HDMD_LOG_FILE", "hdmd_execution.log")
OUTPUT_DIR = os.getenv("HDMD_OUTPUT_DIR", "output_files")
WORKERS = _env_int("HDMD_WORKERS", 1)
GROWTH_GUARD = _env_float("HDMD_GROWTH_GUARD", 1.05)
