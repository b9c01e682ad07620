from os import getenv


#: Maximum number of worker processes for parameter sweeps, default the CPU count.
#: Parsed when a sweep starts, so a bad value is reported as a configuration error
THREADS = getenv("CHEMO_THREADS")

#: Negative densities smaller than this in magnitude are clamped to zero
TOL_NEG = float(getenv("CHEMOLAB_TOL_NEG", "1e-12"))

#: Smallest density for which logarithmic functionals are defined
U_FLOOR = float(getenv("CHEMOLAB_U_FLOOR", "1e-30"))

#: Filename for the time series of a run
FILENAME_CSV = getenv("CHEMOLAB_CSV_FILENAME", "trajectory.csv")

#: Filename for the run summary
FILENAME_SUMMARY = getenv("CHEMOLAB_SUMMARY_FILENAME", "summary.json")

#: Filename for stored snapshots
FILENAME_SNAPSHOTS = getenv("CHEMOLAB_SNAPSHOT_FILENAME", "snapshots.npz")

#: Filename for the combined sweep table
FILENAME_SWEEP = getenv("CHEMOLAB_SWEEP_FILENAME", "sweep.csv")
