"""Generate a pool of models without retraining.

Trains one small MLP on a synthetic 3-class blob problem, then derives
ten more models from it by resampling the low-energy part of each
layer's DCT spectrum and keeping only candidates that pass the
accuracy-based acceptance check. Prints an accuracy parity table and
the generated-vs-trained wall-clock ratio.

Run with:  python3 demos/demo_generate_pool.py
"""

import numpy as np

from mgepool import (
    GeneratorConfig,
    TrainConfig,
    evaluate_accuracy,
    generate_pool,
    make_synthetic,
    mlp,
    split_dataset,
    time_ratio,
    train,
)


def main():
    spec = mlp([2, 64, 3])
    full = make_synthetic("blobs", 600, 3, seed=1, noise=0.12)
    splits = split_dataset(full, {"train": 0.6, "val": 0.2, "test": 0.2}, seed=2)

    base, train_seconds = train(
        spec, splits["train"], TrainConfig(epochs=40, learning_rate=0.01, seed=3))
    base_test = evaluate_accuracy(spec, base.as_float32(), splits["test"])
    print(f"trained base model in {train_seconds:.2f}s, "
          f"test accuracy {base_test:.4f}")

    gcfg = GeneratorConfig(t=0.8, z=0.2, epsilon=0.05, seed=5)
    pool = generate_pool(base, spec, gcfg, splits["val"], count=10)
    print(f"\ngenerated 10 models in {pool.attempts} attempts "
          f"({pool.seconds:.2f}s)\n")

    print("id    val_acc   test_acc   delta_vs_base")
    for cand in pool.candidates:
        test_acc = evaluate_accuracy(spec, cand.params.as_float32(),
                                     splits["test"])
        print(f"{cand.cand_id:<4d}  {cand.accuracy:.4f}    {test_acc:.4f}"
              f"     {test_acc - base_test:+.4f}")

    mean_val = float(np.mean([c.accuracy for c in pool.candidates]))
    print(f"\nmean generated val accuracy: {mean_val:.4f} "
          f"(base: {pool.base_accuracy:.4f})")
    ratio = time_ratio(pool.seconds, train_seconds * 10)
    print(f"Ratio_time (10 generated vs 10 trained): {ratio:.2%}")


if __name__ == "__main__":
    main()
