# %% [markdown]
# Training against two oracles
#
# A decoder is only trustworthy if it (a) learns separable data and
# (b) does not "learn" pure noise beyond what max-selection over epochs
# explains.  Both are checked here on small data so this runs in a minute.

# %%
import numpy as np

from letterdec.harness import TrainConfig, make_folds, noise_floor_bound, train_one_fold
from letterdec.models import ModelConfig, build_model
from letterdec.synth import synth_dataset

cfg = ModelConfig.for_arch("EEGNet")
print(build_model(cfg).summary().to_dict()["total_params"], "parameters")

# %% [markdown]
# Noise-free templates: fold 0 should hit (or nearly hit) 100%.

# %%
ds = synth_dataset(snr=1.0, n_per_class=40, seed=0, noise_scale=0.0)
plan = make_folds(ds, k=10, seed=0)
r = train_one_fold(cfg, ds, plan, 0, TrainConfig(max_epochs=30))
print(f"best {r.best_val_accuracy:.1f}% at epoch {r.epoch_of_best}")

# %% [markdown]
# Pure noise.  The best-of-epochs accuracy sits above 1/26 simply because we
# take a maximum, and the binomial bound says how far above is plausible.

# %%
noise = synth_dataset(snr=0.0, n_per_class=10, seed=3)
plan = make_folds(noise, k=10, seed=0)
for fold in range(3):
    r = train_one_fold(cfg, noise, plan, fold, TrainConfig(patience=3, max_epochs=10))
    bound = noise_floor_bound(len(plan.val_indices(fold)), r.n_evaluations)
    print(f"fold {fold}: best {r.best_val_accuracy:5.2f}%  bound {bound:5.2f}%  "
          f"curve {np.round(r.val_accuracy_curve, 1).tolist()}")
