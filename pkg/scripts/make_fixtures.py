"""Regenerate the bundled fixtures in src/distill_scaling/data.

synthetic_supervised.csv: 73 runs from the reference supervised law, seed 0,
log-normal noise 0.005.
synthetic_distill.csv: 697 runs from the reference distillation law, seed 1,
log-normal noise 0.005, teachers trained at 20 tokens per parameter.
reference_coeffs.json: reference coefficients for both laws.
"""

from pathlib import Path

from distill_scaling import fitting, io, laws

DATA = Path(__file__).resolve().parents[1] / "src" / "distill_scaling" / "data"

SUPERVISED_SEED = 0
DISTILL_SEED = 1
NOISE = 0.005


def main():
    runs = fitting.synthetic_supervised(noise=NOISE, seed=SUPERVISED_SEED)
    io.emit_grid(*io.runs_to_rows(runs), DATA / "synthetic_supervised.csv")
    runs = fitting.synthetic_distill(noise=NOISE, seed=DISTILL_SEED)
    io.emit_grid(*io.runs_to_rows(runs), DATA / "synthetic_distill.csv")
    io.write_json({"supervised": laws.REFERENCE_SUPERVISED.to_dict(),
                   "distill": laws.REFERENCE_DISTILL.to_dict()}, DATA / "reference_coeffs.json")


if __name__ == "__main__":
    main()
