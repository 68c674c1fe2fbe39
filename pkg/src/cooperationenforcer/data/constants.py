endowment = 1.0 # contribution of a cooperator per stage, normalised to e=1
max_players_dense = 20 # 2^n x 2^n dense transition matrices beyond this are not built

stationary_tolerance = 1e-12 # residual ||v^T P - v^T|| accepted from the direct solve
stationary_residual_limit = 1e-10 # largest residual accepted from the power iteration fallback
power_iteration_max_steps = 100_000
cesaro_horizon = 200_000 # default T of the Cesaro average
cesaro_diagnostic_warning = 1e-3 # ||avg(T) - avg(T/2)||_1 above which a warning is logged
perturbation_delta = 1e-6 # p -> delta + (1 - 2 delta) p for the perturbed chain

strictness_slack = 1e-12 # strict inequalities of the enforcing constraints
sampler_margin = 1e-9 # eta, distance kept from every bound by the sampler
payoff_bound_tolerance = 1e-6 # opponent payoffs above R_{c,n-1} + this violate the bound
sampled_first_move = 0.5 # first-move cooperation probability of randomly sampled strategies

learning_rate = 0.1 # alpha
average_reward_rate = 0.01 # beta
epsilon_initial = 0.3
epsilon_decay = 0.9999 # per stage
epsilon_floor = 0.001
learning_horizon = 100_000
convergence_tolerance = 0.05 # final running averages within this of R_{c,n-1} count as converged
