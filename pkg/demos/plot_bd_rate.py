"""
BD-rate between two curves
==========================

Two synthetic rate-PSNR curves, the BD-rate between them, and the plot
the ``jicd plot`` subcommand produces.
"""

import numpy as np

from jicd.evaluate import RDCurve, bd_rate, plot_curves

anchor = RDCurve.from_arrays([0.1, 0.2, 0.4, 0.8], [26.0, 28.4, 30.5, 32.1])
test = RDCurve.from_arrays([0.08, 0.15, 0.31, 0.66], [26.2, 28.5, 30.7, 32.4])

rep = bd_rate(anchor, test)
print(f"BD-rate {rep.percent:+.2f}% over [{rep.overlap[0]:.2f}, {rep.overlap[1]:.2f}] dB")

# %%
# Doubling every rate at equal quality is a +100% change.

doubled = RDCurve.from_arrays(2 * anchor.rates, anchor.psnrs)
print(f"doubled: {bd_rate(anchor, doubled).percent:+.2f}%")

plot_curves({"anchor": {"denoise": anchor}, "test": {"denoise": test}}, "bd_rate.png",
            title="synthetic curves")
