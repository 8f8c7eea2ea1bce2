# Gibbs-oracle toy model
ORACLE_ROOM = (3.0, 3.0, 2.6)
ORACLE_GRID = 5                 # cells per axis
ORACLE_YAW_BINS = 4
ORACLE_STEPS = 200_000
ORACLE_BURN_IN = 20_000
ORACLE_BETA = 1.0
ORACLE_MOVE_PROBS = (0.4, 0.3, 0.3)   # cell jump, yaw bin, swap
ORACLE_TV_LIMIT = 0.05

# Tidiness sweep
SWEEP_BETAS = (0.5, 1.0, 2.0, 5.0)     # rank-order check on relational energy
SWEEP_PAIR = (0.5, 4.0)                # final total energy lower at the larger beta
SWEEP_SEEDS = 20
SWEEP_ITERS = 5_000

# Contrastive-divergence self-consistency
CD_TRUE_WEIGHTS = (2.0, 1.0, 3.0, 1.0, 0.5, 1.0, 1.5, 0.5)
CD_SCENES = 200
CD_SAMPLE_ITERS = 5_000
CD_MISMATCH_RATIO = 0.10

# Sampling speed
SPEED_SEEDS = 5
SPEED_LIMIT_S = 180.0
STAGED_SEEDS = 20
STAGED_ENERGY_TOL = 0.05
