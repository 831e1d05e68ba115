# Local overrides, loaded after config.<Name>Config. Keep machine-specific values here.
# RADIAL_GRID_POINTS = 4000
# SWEEP_WORKERS = 8
