"""Run the three preset configurations through the CLI and summarise them."""
import json
import sys
from pathlib import Path

from nodal_nehari.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]


def main(out_root="runs"):
    codes = {}
    for preset in ("i", "ii", "iii"):
        out = Path(out_root) / f"preset_{preset}"
        codes[preset] = cli(["verify", "--config", str(ROOT / "configs" / f"preset_{preset}.toml"),
                             "--out", str(out)])
        if codes[preset] == 0:
            report = json.loads((out / "solve_report.json").read_text())
            eig = json.loads((out / "eigen.json").read_text())
            S = [report["solutions"][k]["energy"]["S"] for k in ("plus", "minus", "nodal")]
            print(f"preset {preset}: lambda = {report['problem']['lambda']:g}, "
                  f"lambda_A = {eig['lambda_A_estimate']:.5f}, S = ({S[0]:.5f}, {S[1]:.5f}, {S[2]:.5f})")
        else:
            print(f"preset {preset}: exit {codes[preset]}")
    return max(codes.values())


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
