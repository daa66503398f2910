# Calibration constants and defaults for the timing-chain simulator

# Exact time units. Raw timestamps are integer femtoseconds, series values are
# picoseconds.
FS_PER_S = 10**15
FS_PER_PS = 1000
PS_PER_S = 1e12

# Nominal signal rates (Hz). The clock outputs run at 10 MHz, the signal
# generators multiply them to the 80 MHz laser reference.
CLOCK_RATE_HZ = 10_000_000
LASER_RATE_HZ = 80_000_000

# Default capture: 10 s of 10 MHz comparisons.
DEFAULT_DURATION_S = 10.0
DEFAULT_TAU0_S = 1e-7
MAX_SAMPLES = 200_000_000

# Power-law exponents of the phase PSD S_x(f) ~ f^alpha that the generator supports
SUPPORTED_ALPHAS = (0, -1, -2, -3, -4)

# WR transceiver noise bump. Center frequency is a calibration to the ms-scale
# TDEV maximum, not a measured value.
WR_BUMP_CENTER_HZ = 300.0
WR_BUMP_RELATIVE_BANDWIDTH = 1.0

# Received-power dependence of the bump amplitude (piecewise-linear in dB)
ATTENUATION_PLATEAU_MARGIN_DB = 20.0
ATTENUATION_PLATEAU_JITTER_PS = 0.3
ATTENUATION_THRESHOLD_JITTER_PS = 1.0
LINK_THRESHOLD_DB = 46.0

# Fiber link budget. O-band loss; launch margin sized so the 75 km spool and both
# 60 km hops of the deployed loop hold lock.
FIBER_LOSS_DB_PER_KM = 0.35
LAUNCH_MARGIN_DB = LINK_THRESHOLD_DB

# WR switch discipline loop
SERVO_BANDWIDTH_HZ = 20_000.0
UNCOMPENSATED_DRIFT_FRACTION = 0.0

# Laser locking electronics: ~1000 reference cycles of a 10 MHz clock
PLL_LOOP_BANDWIDTH_HZ = 10_000.0
PLL_DAMPING = 0.7
SG_JITTER_PS = 0.1

# Time tagger and RF chain. Tagger-level numbers are two-channel figures: a
# comparison of one signal split into both channels reads this value.
TAGGER_IRF_PS = 1.6
MEASURED_IRF_PS = 1.7
TAGGER_DEADTIME_NS = 80.0
RF_CHAIN_JITTER_PS = (2.3**2 - 1.7**2) ** 0.5
SPLIT_JITTER_PS = (2.6**2 - 2.3**2) ** 0.5
DIVIDER_RATIO = 8
DIVIDER_JITTER_PS = (3.3**2 - 2.3**2) ** 0.5

# Pairing: fraction of slow-channel tags allowed to go unmatched
MAX_UNMATCHED_FRACTION = 0.10

# Stability analysis
MIN_SUMMANDS_FOR_CI = 8
MIN_NOISE_ID_SAMPLES = 32
MAX_NOISE_ID_SAMPLES = 1_000_000
ONE_SIGMA_LOW_QUANTILE = 0.158655253931457
ONE_SIGMA_HIGH_QUANTILE = 0.841344746068543

# Direct synchronization over the local coax
COAX_WHITE_PM_PS = 0.2
COAX_OSCILLATION_PS = 0.5
COAX_OSCILLATION_HZ = 0.5

# Single-photon wavepackets: 35 ps FWHM coherence time
WAVEPACKET_FWHM_PS = 35.0
WAVEPACKET_SIGMA_PS = 15.0
FWHM_PER_SIGMA = 2.0 * (2.0 * 0.6931471805599453) ** 0.5

# Visibility figures quoted in prose for the stated jitter, kept as annotations
QUOTED_VISIBILITY = {4.0: 0.98, 10.0: 0.90}

# Scenario documents
SCENARIO_SCHEMA_VERSION = 1

# Artifact formatting
FLOAT_FORMAT = "%.10g"
