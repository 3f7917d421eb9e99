import pandas as pd
import numpy as np
from pathlib import Path


def generate_sample_data(n=250, out_file="data/sample_prices.csv", start="2023-01-02",
                         s0=70.0, mu=0.02, sigma=1.5, jump_rate=0.02, jump_scale=4.0, seed=42):
    """
    Synthetic daily close prices for offline oil runs: a drifted random walk on
    business days with rare exponential upward jumps, floored above zero.
    """
    rng = np.random.default_rng(seed)

    dates = pd.bdate_range(start=start, periods=n)
    moves = mu + sigma * rng.standard_normal(n - 1)
    jumps = rng.random(n - 1) < jump_rate
    moves[jumps] += rng.exponential(jump_scale, jumps.sum())

    close = np.maximum(s0 + np.concatenate([[0.0], np.cumsum(moves)]), 0.01)

    df = pd.DataFrame({"date": dates.strftime("%Y-%m-%d"), "close": np.round(close, 4)})
    Path(out_file).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(out_file, index=False)
    print(f"[OK] Sample prices generated → {out_file}")
    return Path(out_file)


if __name__ == "__main__":
    generate_sample_data()
