"""Chance-constrained DC optimal power flow on the bundled networks.

Each line flow must stay within its rating with probability 1 - eps under
Gaussian wind deviations, with generators sharing the imbalance in fixed
proportions alpha.
"""

import numpy as np

from twosided import opf

eps = 0.05
for name in opf.FIXTURES:
    net = opf.load_fixture(name)
    print(f"{name}: {net.n_bus} buses, {net.n_line} lines, {net.n_gen} generators")
    for mode in opf.MODES:
        rep, _ = opf.solve_cc_opf(net, eps, mode)
        p, alpha = opf.dispatch_from_report(net, rep)
        ev = opf.evaluate_dispatch(net, p, alpha, eps)
        print(f"  {mode:>16}: cost {rep.objective:10.3f}, "
              f"max line violation {ev.line_violation.max():.4f}, alpha {np.round(alpha, 3)}")
    flows, _ = opf.sample_flows(net, p, alpha, 100000, seed=1)
    print(f"  sampled flow sd {np.round(flows.std(axis=0), 3)} vs model {np.round(ev.flow_sd, 3)}\n")
