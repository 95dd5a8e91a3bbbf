"""A complete miniature search-then-train run on synthetic data.

Searches normal/reduction cells with the bi-level relaxation, discretizes
the strongest operations into a genotype, and trains the resulting
network from scratch, all in a couple of minutes on one CPU core.  For
the preset-driven equivalent use the CLI:

    axnas search desk --seed 0 --out genotype.json
    axnas train genotype.json desk --out-dir run/
"""

from axnas import EvalConfig, SearchConfig, run_eval, run_search, synthetic_blobs
from axnas.cells import genotype_to_dict
from axnas.pipeline import AdamConfig, OptimConfig

train, test = synthetic_blobs(num_classes=3, image_size=16, train_size=128,
                              test_size=64, seed=0)
print(f"synthetic dataset: {len(train)} train / {len(test)} test, "
      f"{train.num_classes} classes, {train.image_size}x{train.image_size}")

search_cfg = SearchConfig(
    cells=3, intermediate_nodes=2, init_channels=6, epochs=4,
    warmup_epochs=1, batch_size=16,
    w_opt=OptimConfig(lr0=0.05, momentum=0.9, weight_decay=3e-4),
    a_opt=AdamConfig(lr=3e-4, betas=(0.5, 0.999), weight_decay=1e-3),
    seed=0,
)
result = run_search(search_cfg, train)
print(f"\nsearch took {result.seconds:.0f}s; per-epoch validation accuracy: "
      + ", ".join(f"{row['val_acc']:.0f}%" for row in result.log))

print("\ndiscretized genotype:")
doc = genotype_to_dict(result.genotype)
for kind in ("normal", "reduce"):
    print(f"  {kind}:")
    for j, node in enumerate(doc[kind]):
        print(f"    node {j + 2}: " + ", ".join(f"{op}({src})" for src, op in node))

eval_cfg = EvalConfig(
    cells=3, init_channels=6, epochs=8, batch_size=32,
    w_opt=OptimConfig(lr0=0.05, momentum=0.9, weight_decay=3e-4),
    drop_path_prob=0.2, cutout_size=4, aux_weight=0.4, seed=1,
)
final = run_eval(result.genotype, eval_cfg, train, test)
print(f"\nfinal training took {final.seconds:.0f}s; "
      f"test accuracy {final.test_accuracy:.1f}%, "
      f"{final.param_count} parameters")
