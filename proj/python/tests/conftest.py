import math
import random

import pytest


@pytest.fixture(scope="session")
def toy_csv(tmp_path_factory):
    rng = random.Random(11)
    path = tmp_path_factory.mktemp("data") / "toy.csv"
    with path.open("w") as f:
        f.write("age,score,smoker,region,label\n")
        for _ in range(1500):
            age = round(20 + 50 * rng.random())
            score = rng.gauss(0.0, 1.0)
            smoker = rng.random() < 0.3
            z = 0.04 * (age - 45) + 0.8 * score + (0.7 if smoker else 0.0) - 0.3
            label = 1 if rng.random() < 1.0 / (1.0 + math.exp(-z)) else 0
            f.write(f"{age},{score:.6f},{'yes' if smoker else 'no'},{rng.choice(['north', 'south', 'east'])},{label}\n")
    return path
