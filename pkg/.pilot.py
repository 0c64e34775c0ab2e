"""Pilot calibration run for the acceptance thresholds (not shipped)."""
import time

import numpy as np

from adformer.data import NormStats, default_spec, generate, normalize
from adformer.detection import ThresholdSpec, score_series, select_threshold, predict
from adformer.discrepancy import DiscrepancyConfig
from adformer.evaluation import contrast_statistic, point_adjust, prf, roc_auc
from adformer.model import ModelConfig, init_params
from adformer.training import TrainConfig, fit

start = time.time()
mcfg = ModelConfig(window=50, input_dim=1, d_model=64, layers=2, heads=4,
                   lambda_=3.0)

for seed in (0, 1, 2):
    spec = default_spec(seed=100 + seed)
    train, val, test = generate(spec)
    stats = NormStats.from_train(train)
    train_n, val_n, test_n = (normalize(ts, stats) for ts in (train, val, test))

    results = {}
    for strategy in ("minimax", "max_only", "recon_only"):
        t0 = time.time()
        tcfg = TrainConfig(lr=1e-3, batch_size=8, max_epochs=10, patience=3,
                           seed=seed, strategy=strategy)
        params, log = fit(train_n.values, val_n.values, mcfg, tcfg)
        t_train = time.time() - t0
        ss_val = score_series(val_n.values, params, mcfg)
        ss_test = score_series(test_n.values, params, mcfg, keep_series_maps=True)
        delta = select_threshold(ss_val.scores, ThresholdSpec(mode="ratio_r", r=0.01))
        adjusted = point_adjust(predict(ss_test.scores, delta), test.labels)
        f = prf(adjusted, test.labels)
        _, auc = roc_auc(ss_test.scores, test.labels, ss_val.scores)
        con = contrast_statistic(ss_test, test.labels)
        results[strategy] = (f.f1, auc, con.ratio)
        print(f"seed {seed} {strategy:10s} f1={f.f1:.3f} auc={auc:.3f} "
              f"contrast={con.ratio:.3f} (p={f.precision:.3f} r={f.recall:.3f}) "
              f"epochs={len(log.epochs)} recon {log.epochs[0].recon_loss:.4f}->"
              f"{log.epochs[-1].recon_loss:.4f} [{t_train:.1f}s]")
        if strategy == "minimax":
            # recon-only criterion on the SAME minimax model
            ss_val_r = score_series(val_n.values, params, mcfg, criterion="recon_only")
            ss_test_r = score_series(test_n.values, params, mcfg, criterion="recon_only")
            d_r = select_threshold(ss_val_r.scores, ThresholdSpec(mode="ratio_r", r=0.01))
            adj_r = point_adjust(predict(ss_test_r.scores, d_r), test.labels)
            f_r = prf(adj_r, test.labels)
            print(f"          recon-criterion on minimax model: f1={f_r.f1:.3f}")
            # sigma medians at pattern_seasonal points vs normal
            ev = [e for e in spec.events if e.kind == "pattern_seasonal"][0]
            seas = np.zeros(len(test), dtype=bool)
            seas[ev.position:ev.position + ev.extent] = True
            med_a = np.median(ss_test.sigma[seas])
            med_n = np.median(ss_test.sigma[test.labels == 0])
            print(f"          sigma medians: seasonal {med_a:.4f} vs normal {med_n:.4f} "
                  f"({'OK' if med_a < med_n else 'X'})")

print(f"total {time.time() - start:.1f}s")
