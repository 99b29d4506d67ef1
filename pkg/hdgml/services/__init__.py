# Discretization, solver and analysis services
