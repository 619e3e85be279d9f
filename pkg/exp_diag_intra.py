"""Seed-0 diagnostic: translator movement + warm-start effect on the intra phase."""
import sys
import time

import numpy as np
import torch

from uwadapt.adapt import (
    TrainConfig,
    build_inter_nets,
    build_intra_nets,
    split_easy_hard,
    train_inter,
    train_intra,
)
from uwadapt.fixtures import make_desk_data
from uwadapt.imagecore import denormalize
from uwadapt.networks import image_to_tensor, tensor_to_image
from uwadapt.pipeline import _run_enhancer, _train_scorer_variant
from uwadapt.ruiqa import predict

t0 = time.time()
el = lambda: f"[{time.time() - t0:.0f}s]"

data = make_desk_data(0, image_size=64)
scorer = _train_scorer_variant("RUIQA", data, seed=0)
print("scorer ready", el(), flush=True)

n_critic = int(sys.argv[1]) if len(sys.argv) > 1 else 1
cfg = TrainConfig(epochs=20, decay_epochs=10, seed=0, n_critic=n_critic)
print(f"n_critic={n_critic}")
nets = build_inter_nets(12, seed=cfg.seed)
train_inter(list(data.synth_train), list(data.real_train), nets, config=cfg)
print("inter trained", el(), flush=True)

split = split_easy_hard(list(data.real_train), scorer, nets.enhancer, lam=0.5)

is_heavy = lambda image_id: int(image_id[-3:]) % 5 >= 3
easy_heavy = sum(is_heavy(e.example.image_id) for e in split.easy)
hard_heavy = sum(is_heavy(h.example.image_id) for h in split.hard)
print(
    f"split: easy {len(split.easy)} ({easy_heavy} heavy) mean {np.mean([e.score for e in split.easy]):.2f}, "
    f"hard {len(split.hard)} ({hard_heavy} heavy) mean {np.mean([h.score for h in split.hard]):.2f}, "
    f"thr {split.threshold:.2f}"
)

raw_score = lambda ex: predict(scorer, denormalize(ex.x))
easy_raw = np.mean([raw_score(e.example) for e in split.easy])
hard_raw = np.mean([raw_score(h.example) for h in split.hard])
print(f"raw-input scores: easy {easy_raw:.2f}, hard {hard_raw:.2f}")
print(f"eval heavy: {sum(is_heavy(ex.image_id) for ex in data.real_eval)}/{len(data.real_eval)}")


def eval_breakdown(enh_intra, threshold):
    full, sub_i, sub_a = [], [], []
    for ex in data.real_eval:
        img = denormalize(ex.x)
        out_inter = _run_enhancer(nets.enhancer, img)
        s_inter = predict(scorer, out_inter)
        if enh_intra is None or s_inter >= threshold:
            full.append(s_inter)
        else:
            s_intra = predict(scorer, _run_enhancer(enh_intra, img))
            full.append(s_intra)
            sub_i.append(s_inter)
            sub_a.append(s_intra)
    subm = (np.mean(sub_i), np.mean(sub_a)) if sub_i else (float("nan"),) * 2
    return np.mean(full), len(sub_i), subm


def translator_probe(tag, translator):
    translator.eval()
    moves, t_scores = [], []
    with torch.no_grad():
        for e in split.easy:
            x = image_to_tensor(e.example.x)
            xt = translator(x)
            moves.append(float((xt - x).abs().mean()))
            t_scores.append(predict(scorer, denormalize(tensor_to_image(xt))))
    print(
        f"  {tag}: |T(x)-x| {np.mean(moves):.4f}, raw-score T(easy) {np.mean(t_scores):.2f} "
        f"(easy raw {easy_raw:.2f}, hard raw {hard_raw:.2f})"
    )


ite_mean, _, _ = eval_breakdown(None, 0.0)
print(f"ITE routed mean {ite_mean:.3f} {el()}", flush=True)
translator_probe("inter-T untrained-for-intra", nets.translator)

for tag, kwargs in (("fresh-T", {}), ("warm-T", {"translator_init": nets.translator})):
    intra = build_intra_nets(nets.enhancer, nets.features, seed=cfg.seed, **kwargs)
    train_intra(split, intra, config=cfg)
    mean_all, n_routed, (si, sa) = eval_breakdown(intra.enhancer, split.threshold)
    translator_probe(f"{tag} after intra", intra.translator)
    print(
        f"{tag}: ITA routed mean {mean_all:.3f} vs ITE {ite_mean:.3f} | "
        f"routed-to-intra n={n_routed}: inter-would-give {si:.3f} -> intra-gives {sa:.3f} {el()}",
        flush=True,
    )
print("done", el())
