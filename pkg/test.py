import netsym as ns

# A width-50 Gaussian-activation ensemble on two input points
spec = ns.gauss_net(input_dim=2, output_dim=3, width=50)
inputs = ns.InputSet([[0.1, 0.2], [0.3, -0.4]])
rng = ns.RngStream(seed=0)

# Three independent 2-point experiments
experiments = [
    ns.estimate_correlator(spec, inputs, [0, 1], 20_000, rng.child(i), workers=4)
    for i in range(3)
]

# SO(3) invariance of the output correlator
group = ns.GroupSpec("SO", 3)
report = ns.deviation_report(experiments, group, elements=50, rng=rng.child(99))
print(f"mu_M={report.mu_M:.3e} delta_M={report.delta_M:.3e} pass={report.pass_fraction:.2f}")
