//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use pop_core::classifier::{
    out_of_fold_probs, HeadModel, Label, LabeledDataset, ProbabilityMatrix, Sample, TrainConfig,
};
use pop_core::confident::{confident_joint, prune, self_confidence_thresholds, ConfidentReport};
use pop_core::embedding::SynthEmbeddingSpec;
use pop_core::expansion::ExpansionMode;
use pop_core::forecast::{
    arima_forecast, drift_forecast, fit_ar, last_forecast, ses_forecast, ArimaOrder, ForecastRequest,
};
use pop_core::metrics::{edit_distance_eps, erp_threshold, mae, mape, wape};
use pop_core::nmf::{fit_nmf, AttributeMatrix, NmfConfig};
use pop_core::series::WeekIndex;
use pop_core::signal::{form_signal, SignalVariant, StepImages};
use pop_core::synthetic::{run_experiment, SyntheticConfig, SyntheticReport};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    check((a - b).abs() <= tol, format!("{what}: {a} vs {b} (tol {tol})"))
}

fn dataset(labels: &[Label]) -> LabeledDataset {
    LabeledDataset::new(
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| Sample {
                image_id: format!("s{}", i + 1),
                embedding: vec![0.0],
                label,
                step_k: 1,
            })
            .collect(),
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// 1. Confident joint against a double-loop oracle

struct Oracle {
    t: [f64; 2],
    c: [[usize; 2]; 2],
    pruned: BTreeSet<usize>,
}

fn cl_oracle(p: &[[f64; 2]], y: &[usize]) -> Oracle {
    let mut t = [0.0; 2];
    for l in 0..2 {
        let mut sum = 0.0;
        let mut n = 0;
        for i in 0..p.len() {
            if y[i] == l {
                sum += p[i][l];
                n += 1;
            }
        }
        t[l] = sum / n as f64;
    }
    let mut c = [[0; 2]; 2];
    let mut pruned = BTreeSet::new();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..p.len() {
                if y[k] == i && p[k][j] >= t[j] {
                    c[i][j] += 1;
                    if i != j {
                        pruned.insert(k);
                    }
                }
            }
        }
    }
    Oracle { t, c, pruned }
}

fn c1_confident_joint_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..200 {
        let n = rng.random_range(2..=200);
        let coarse = instance % 2 == 0;
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                let (a, b): (f64, f64) = if coarse {
                    (rng.random_range(0..=20) as f64, rng.random_range(0..=20) as f64)
                } else {
                    (rng.random(), rng.random())
                };
                let s = if a + b > 0.0 { a + b } else { 1.0 };
                if a + b > 0.0 {
                    [a / s, b / s]
                } else {
                    [0.5, 0.5]
                }
            })
            .collect();
        let mut y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        y[0] = 0;
        y[1] = 1;
        y.shuffle(&mut rng);
        let labels: Vec<Label> = y.iter().map(|&l| Label::from_index(l)).collect();
        let p = ProbabilityMatrix::from_rows(rows.clone());
        let oracle = cl_oracle(&rows, &y);
        let t = self_confidence_thresholds(&p, &labels).map_err(|e| e.to_string())?;
        let cj = confident_joint(&p, &labels, t).map_err(|e| e.to_string())?;
        let report = ConfidentReport::from_probs(&dataset(&labels), &p).map_err(|e| e.to_string())?;
        let pruned: BTreeSet<String> = oracle.pruned.iter().map(|i| format!("s{}", i + 1)).collect();
        check(
            t == oracle.t,
            format!("instance {instance}: thresholds {t:?} vs {:?}", oracle.t),
        )?;
        check(
            cj.counts == oracle.c,
            format!("instance {instance}: C {:?} vs {:?}", cj.counts, oracle.c),
        )?;
        check(
            cj.off_diagonal() == oracle.pruned,
            format!("instance {instance}: pruned set differs"),
        )?;
        check(
            report.pruned_ids == pruned,
            format!("instance {instance}: report pruned ids differ"),
        )?;
    }
    Ok("200 instances match exactly".into())
}

// ---------------------------------------------------------------------------
// 2. Worked six-sample example

fn c2_worked_example() -> Outcome {
    use Label::{Fashionable as P, Unfashionable as N};
    let labels = [P, P, P, N, N, N];
    let pos = [0.9, 0.8, 0.2, 0.3, 0.1, 0.85];
    let p = ProbabilityMatrix::from_rows(pos.iter().map(|&a| [a, 1.0 - a]).collect());
    let ds = dataset(&labels);
    let report = ConfidentReport::from_probs(&ds, &p).map_err(|e| e.to_string())?;
    close(report.thresholds[0], 0.633333333333, 1e-9, "t+")?;
    close(report.thresholds[1], 0.583333333333, 1e-9, "t-")?;
    check(
        report.confident_joint == [[2, 1], [1, 2]],
        format!("C = {:?}", report.confident_joint),
    )?;
    let expected: BTreeSet<String> = ["s3", "s6"].iter().map(|s| s.to_string()).collect();
    check(report.pruned_ids == expected, format!("pruned {:?}", report.pruned_ids))?;
    let kept = prune(&ds, &report).map_err(|e| e.to_string())?;
    check(kept.len() == 4, format!("{} samples kept", kept.len()))?;
    Ok(format!(
        "t+ = {:.5}, t- = {:.5}, C = {:?}, pruned = {:?}",
        report.thresholds[0], report.thresholds[1], report.confident_joint, report.pruned_ids
    ))
}

// ---------------------------------------------------------------------------
// 3. Flipped-label recovery on separable blobs

fn c3_noisy_label_recovery() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let spec = SynthEmbeddingSpec {
            seed,
            dim: 16,
            centroid_sep: 6.0,
            noise_sigma: 1.0,
        };
        let ids: Vec<String> = (0..520).map(|i| format!("b{i:03}")).collect();
        let store = spec
            .generate(ids.iter().enumerate().map(|(i, id)| (id.as_str(), i % 2)))
            .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let mut order: Vec<usize> = (0..520).collect();
        order.shuffle(&mut rng);
        let flipped: BTreeSet<usize> = order[..52].iter().copied().collect();
        let samples = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let class = (i % 2) ^ usize::from(flipped.contains(&i));
                Sample {
                    image_id: id.clone(),
                    embedding: store.lookup(id).unwrap().to_vec(),
                    label: Label::from_index(class),
                    step_k: 1,
                }
            })
            .collect();
        let ds = LabeledDataset::new(samples).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let p = out_of_fold_probs(&ds, 5, &cfg).map_err(|e| e.to_string())?;
        let report = ConfidentReport::from_probs(&ds, &p).map_err(|e| e.to_string())?;
        let pruned: BTreeSet<usize> = (0..520).filter(|&i| report.pruned_ids.contains(&ids[i])).collect();
        let caught = pruned.intersection(&flipped).count() as f64 / 52.0;
        let clean_pruned = pruned.difference(&flipped).count() as f64 / 468.0;
        ok &= caught >= 0.70 && clean_pruned <= 0.05;
        lines.push(format!(
            "seed {seed}: {:.1}%/{:.1}%",
            100.0 * caught,
            100.0 * clean_pruned
        ));
    }
    let msg = format!("flips caught / clean pruned: {}", lines.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------------------
// 4. Signal forming

fn step(pos: &[&[f64]], neg: &[&[f64]]) -> StepImages {
    StepImages {
        positives: pos.iter().map(|v| v.to_vec()).collect(),
        negatives: neg.iter().map(|v| v.to_vec()).collect(),
    }
}

fn c4_signal_forming() -> Outcome {
    let week = WeekIndex(100);
    let err = |e: pop_core::Error| e.to_string();
    // Raw cosine, newest step first in `steps`, oldest first in the output.
    let steps = vec![
        step(&[&[1.0, 0.0], &[0.0, 1.0]], &[&[0.0, 2.0]]),
        step(&[&[1.0, 1.0]], &[]),
        step(&[&[-1.0, 0.0]], &[&[3.0, 0.0]]),
    ];
    let s = form_signal("p", week, &[1.0, 0.0], &steps, None, SignalVariant::NoLearning).map_err(err)?;
    let want = [-1.0, std::f64::consts::FRAC_1_SQRT_2, 0.5];
    for (a, b) in s.series.values().iter().zip(want) {
        close(*a, b, 1e-9, "raw cosine mean")?;
    }
    check(s.series.start() == 97, format!("start week {}", s.series.start()))?;

    // An empty step is interpolated between its neighbours.
    let gap = vec![steps[0].clone(), StepImages::default(), steps[2].clone()];
    let s = form_signal("p", week, &[1.0, 0.0], &gap, None, SignalVariant::NoLearning).map_err(err)?;
    close(s.series.values()[1], -0.25, 1e-9, "interpolated gap")?;

    // Through a head whose hidden layer is the identity followed by ReLU.
    let mut head = HeadModel::zeros(2, 2);
    head.hidden_weights = Array2::eye(2);
    let one = vec![step(&[&[-1.0, 2.0]], &[&[2.0, 1.0]])];
    let s = form_signal(
        "p",
        week,
        &[1.0, 0.5],
        &one,
        Some(&head),
        SignalVariant::PositiveAndNegative,
    )
    .map_err(err)?;
    close(
        s.series.values()[0],
        1.0 / (1.25f64.sqrt() * 2.0),
        1e-9,
        "head positive channel",
    )?;
    let neg = s.negative.as_ref().ok_or("missing negative channel")?;
    close(
        neg.values()[0],
        2.5 / (1.25f64.sqrt() * 5f64.sqrt()),
        1e-9,
        "head negative channel",
    )?;

    // Scale invariance and length on random data.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let d = rng.random_range(2..10);
        let k_past = rng.random_range(1..30);
        let vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| normal.sample(rng)).collect() };
        let probe = vec(&mut rng);
        let mut steps: Vec<StepImages> = (0..k_past)
            .map(|_| StepImages {
                positives: (0..rng.random_range(0..4)).map(|_| vec(&mut rng)).collect(),
                negatives: Vec::new(),
            })
            .collect();
        let any = rng.random_range(0..k_past);
        steps[any].positives.push(vec(&mut rng));
        let scale = |v: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
            let c = rng.random_range(0.01..100.0);
            v.iter().map(|x| x * c).collect()
        };
        let scaled_probe = scale(&probe, &mut rng);
        let scaled_steps: Vec<StepImages> = steps
            .iter()
            .map(|s| StepImages {
                positives: s.positives.iter().map(|v| scale(v, &mut rng)).collect(),
                negatives: Vec::new(),
            })
            .collect();
        let a = form_signal("r", week, &probe, &steps, None, SignalVariant::NoLearning).map_err(err)?;
        let b = form_signal("r", week, &scaled_probe, &scaled_steps, None, SignalVariant::NoLearning).map_err(err)?;
        check(
            a.series.len() == k_past && b.series.len() == k_past,
            "length differs from k_past",
        )?;
        for (x, y) in a.series.values().iter().zip(b.series.values()) {
            worst = worst.max((x - y).abs());
        }
    }
    check(worst <= 1e-12, format!("scale invariance off by {worst:e}"))?;
    Ok(format!(
        "hand fixtures within 1e-9, scale invariance max diff {worst:.1e}, lengths = k_past"
    ))
}

// ---------------------------------------------------------------------------
// 5. Gradient check

fn c5_gradient_check() -> Outcome {
    let (dim, hidden, n, wd, h) = (6, 5, 20, 1e-3, 1e-5);
    let mut worst: f64 = 0.0;
    for point in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + point);
        let model = HeadModel::init(dim, hidden, point).map_err(|e| e.to_string())?;
        let x = Array2::from_shape_simple_fn((n, dim), || rng.random_range(-2.0..2.0));
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let (_, grad) = model.loss_and_gradient(x.view(), &y, wd);
        let analytic = grad.to_flat();
        let theta = model.to_flat();
        let mut probe = model.clone();
        for i in 0..theta.len() {
            let mut t = theta.clone();
            t[i] = theta[i] + h;
            probe.set_flat(&t);
            let up = probe.loss_and_gradient(x.view(), &y, wd).0;
            t[i] = theta[i] - h;
            probe.set_flat(&t);
            let down = probe.loss_and_gradient(x.view(), &y, wd).0;
            let numeric = (up - down) / (2.0 * h);
            // Floor keeps vanishing gradients from dividing rounding noise by zero.
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    let msg = format!("max relative error {worst:.2e} over 10 points");
    if worst < 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------------------
// 6. Metrics

fn ed_brute(a: &[f64], b: &[f64], eps: f64) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let subst = ed_brute(ra, rb, eps) + usize::from((x - y).abs() > eps);
            subst.min(ed_brute(ra, b, eps) + 1).min(ed_brute(a, rb, eps) + 1)
        }
    }
}

fn c6_metrics() -> Outcome {
    let e = |r: pop_core::Result<f64>| r.map_err(|e| e.to_string());
    let (gt, pred) = ([10.0, 20.0, 30.0], [12.0, 18.0, 33.0]);
    close(e(wape(&gt, &pred))?, 11.6666667, 1e-7, "wape")?;
    close(e(mae(&gt, &pred))?, 2.3333333, 1e-7, "mae")?;
    close(e(wape(&gt, &gt))?, 0.0, 1e-7, "wape identical")?;
    close(e(wape(&gt, &gt.map(|v| 3.0 * v)))?, 200.0, 1e-7, "wape 3x")?;
    close(e(mae(&[4.0], &[6.5]))?, 2.5, 1e-7, "mae single point")?;
    close(e(mape(&[1.0, 2.0], &[2.0, 1.0]))?, 0.75, 1e-7, "mape")?;
    close(e(mape(&gt, &gt.map(|v| 2.0 * v)))?, 1.0, 1e-7, "mape 2x")?;
    close(e(erp_threshold(&[0.0, 0.5], &[0.0, 0.56], 0.03))?, 0.5, 1e-7, "erp")?;
    close(
        e(erp_threshold(&gt, &gt.map(|v| v + 5.0), 0.03))?,
        1.0,
        1e-7,
        "erp all different",
    )?;
    close(e(erp_threshold(&gt, &gt, 0.03))?, 0.0, 1e-7, "erp identical")?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..500 {
        let series = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..rng.random_range(0..=8))
                .map(|_| rng.random_range(0..12) as f64 * 0.01)
                .collect()
        };
        let (a, b) = (series(&mut rng), series(&mut rng));
        let fast = edit_distance_eps(&a, &b, 0.03);
        let slow = ed_brute(&a, &b, 0.03);
        check(fast == slow, format!("trial {trial}: {a:?} vs {b:?}: {fast} != {slow}"))?;
    }
    Ok("hand examples within 1e-7, 500 edit-distance trials equal the recursion".into())
}

// ---------------------------------------------------------------------------
// 7. Forecasters and NMF

fn simulate_ar1(phi: f64, n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut y = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..n + 200 {
        y = phi * y + noise.sample(&mut rng);
        if t >= 200 {
            out.push(y);
        }
    }
    out
}

fn c7_forecasters_and_nmf() -> Outcome {
    let e = |e: pop_core::Error| e.to_string();
    let mut phis = Vec::new();
    for seed in 0..5 {
        let fit = fit_ar(&simulate_ar1(0.8, 500, 0.1, seed), 1, 1).map_err(e)?;
        close(fit.phi[0], 0.8, 0.05, &format!("AR(1) seed {seed}"))?;
        phis.push(format!("{:.3}", fit.phi[0]));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let order = ArimaOrder::new(0, 1, 0).map_err(e)?;
    for _ in 0..50 {
        let n = rng.random_range(3..40);
        let hist: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let req = ForecastRequest::new(hist, rng.random_range(1..8)).map_err(e)?;
        let last = last_forecast(&req).map_err(e)?.values;
        check(
            ses_forecast(&req, Some(1.0)).map_err(e)?.values == last,
            "SES(alpha=1) differs from Last",
        )?;
        check(
            arima_forecast(&req, Some(order), 0).map_err(e)?.values == last,
            "ARIMA(0,1,0) differs from Last",
        )?;
    }
    let drift = |h: Vec<f64>, steps| drift_forecast(&ForecastRequest::new(h, steps).unwrap()).map(|r| r.values);
    check(
        drift(vec![2.0, 4.0, 6.0], 2).map_err(e)? == [8.0, 10.0],
        "drift [2,4,6]",
    )?;
    check(drift(vec![0.0, 1.0], 3).map_err(e)? == [2.0, 3.0, 4.0], "drift [0,1]")?;
    check(drift(vec![5.0; 4], 2).map_err(e)? == [5.0, 5.0], "drift constant")?;

    let mut worst_rank1: f64 = 0.0;
    let mut steps_checked = 0;
    for trial in 0..10 {
        let (r, c) = (rng.random_range(2..8), rng.random_range(2..10));
        let u: Vec<f64> = (0..r).map(|_| rng.random_range(0.1..1.0)).collect();
        let v: Vec<f64> = (0..c).map(|_| rng.random_range(0.1..1.0)).collect();
        let a = AttributeMatrix::new(
            Array2::from_shape_fn((r, c), |(i, j)| u[i] * v[j]),
            (0..r).map(|i| format!("a{i}")).collect(),
            (0..c).map(|j| format!("i{j}")).collect(),
        )
        .map_err(e)?;
        let cfg = NmfConfig {
            seed: trial,
            ..NmfConfig::default()
        };
        let model = fit_nmf(&a, 1, &cfg).map_err(e)?;
        worst_rank1 = worst_rank1.max(model.relative_error(&a));

        let noisy = AttributeMatrix::new(
            Array2::from_shape_simple_fn((r + 2, c + 3), || rng.random::<f64>()),
            (0..r + 2).map(|i| format!("a{i}")).collect(),
            (0..c + 3).map(|j| format!("i{j}")).collect(),
        )
        .map_err(e)?;
        let k = rng.random_range(1..=2.min(r + 2));
        let model = fit_nmf(
            &noisy,
            k,
            &NmfConfig {
                seed: trial,
                max_iter: 500,
                tol: 0.0,
            },
        )
        .map_err(e)?;
        // Multiplicative updates never increase the objective; allow for rounding only.
        let slack = 1e-14 * noisy.values.iter().map(|x| x * x).sum::<f64>();
        for w in model.objective_history.windows(2) {
            check(
                w[1] <= w[0] + slack,
                format!("objective rose from {} to {}", w[0], w[1]),
            )?;
            steps_checked += 1;
        }
    }
    check(worst_rank1 < 1e-6, format!("rank-1 relative error {worst_rank1:e}"))?;
    Ok(format!(
        "AR(1) phi = [{}]; SES(1) and ARIMA(0,1,0) equal Last; drift exact; NMF rank-1 error {worst_rank1:.1e}, {steps_checked} monotone steps",
        phis.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// 8 and 9. Synthetic experiment

const MODES: [ExpansionMode; 3] = [
    ExpansionMode::Standard,
    ExpansionMode::MisalignedPast,
    ExpansionMode::NoExpansion,
];

fn synthetic_runs() -> Result<Vec<SyntheticReport>, String> {
    (100..105u64)
        .map(|seed| {
            run_experiment(
                &SyntheticConfig {
                    seed,
                    ..SyntheticConfig::default()
                },
                &MODES,
            )
            .map_err(|e| e.to_string())
        })
        .collect()
}

fn wape_of(r: &SyntheticReport, m: ExpansionMode) -> f64 {
    r.mode(m).expect("mode was run").wape
}

fn c8_pop_gain(runs: &[SyntheticReport]) -> Outcome {
    let mut wins = 0;
    let mut lines = Vec::new();
    for r in runs {
        let gain = r.relative_gain(ExpansionMode::Standard).expect("standard was run");
        wins += usize::from(gain >= 0.05);
        lines.push(format!(
            "{}: {:.2}->{:.2} ({:+.1}%)",
            r.seed,
            r.wape_without_pop,
            wape_of(r, ExpansionMode::Standard),
            -100.0 * gain
        ));
    }
    let msg = format!("{wins}/5 seeds gain >= 5%: {}", lines.join(", "));
    if wins >= 4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c9_ablation_order(runs: &[SyntheticReport]) -> Outcome {
    let le = |a: f64, b: f64| a <= b * 1.01;
    let mut wins = 0;
    let mut lines = Vec::new();
    for r in runs {
        let [s, m, n] = MODES.map(|mode| wape_of(r, mode));
        let ordered = le(s, m) && le(m, n);
        wins += usize::from(ordered);
        lines.push(format!(
            "{}: {s:.2}/{m:.2}/{n:.2}{}",
            r.seed,
            if ordered { "" } else { " x" }
        ));
    }
    let msg = format!(
        "{wins}/5 seeds standard <= misaligned <= no_expansion: {}",
        lines.join(", ")
    );
    if wins >= 4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------------------
// 10. Byte-identical CLI output trees

fn pop(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pop"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(
        out.status.success(),
        format!(
            "`pop {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ),
    )
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn pipeline(dir: &Path) -> Result<(), String> {
    pop(
        dir,
        &[
            "synthetic",
            "--seeds",
            "21",
            "--n-train",
            "4",
            "--n-test",
            "2",
            "--export",
            "world",
        ],
    )?;
    let common = ["--out-dir", "out", "--seed", "11", "--jobs", "2"];
    let probes = ["--probes", "world/probes.json", "--k-past", "16"];
    let run = |cmd: &str, extra: &[&str]| -> Result<(), String> {
        let args: Vec<&str> = common
            .iter()
            .chain([cmd].iter())
            .chain(probes.iter())
            .chain(extra)
            .copied()
            .collect();
        pop(dir, &args)
    };
    let emb = ["--embeddings", "world/embeddings.csv"];
    for mode in ["standard", "misaligned-past", "no-expansion"] {
        run(
            "mine",
            &["--mode", mode, "--fixtures", "world/fixtures", "--m-per-query", "6"],
        )?;
    }
    run("clean", &[&emb[..], &["--epochs", "20", "--hidden", "16"]].concat())?;
    run(
        "clean",
        &[
            &emb[..],
            &["--mode", "misaligned-past", "--epochs", "20", "--hidden", "16"],
        ]
        .concat(),
    )?;
    for variant in ["pop", "negative", "pos-neg", "no-learning"] {
        run("signal", &[&emb[..], &["--variant", variant]].concat())?;
    }
    run("signal", &[&emb[..], &["--misaligned-past"]].concat())?;
    run("signal", &[&emb[..], &["--mode", "no-expansion"]].concat())?;
    let signal = "out/signal/standard/pop/probe-000.csv";
    pop(
        dir,
        &[
            &common[..],
            &["forecast", "--series", signal, "--method", "arima", "--horizon", "3"],
        ]
        .concat(),
    )?;
    let manifest = r#"{"series":[{"id":"a","path":"out/signal/standard/pop/probe-000.csv"},{"id":"b","path":"out/signal/standard/no-learning/probe-001.csv"}],"methods":["mean","last","drift","ses","ar:1","arima"],"horizon":2,"seed":5}"#;
    std::fs::write(dir.join("batch.json"), manifest).map_err(|e| e.to_string())?;
    pop(dir, &[&common[..], &["evaluate", "--manifest", "batch.json"]].concat())
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (da, db) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&da, &db] {
        std::fs::create_dir(d).map_err(|e| e.to_string())?;
        pipeline(d)?;
    }
    let (a, b) = (tree(&da), tree(&db));
    check(a.len() > 100, format!("only {} files written", a.len()))?;
    check(
        a.keys().eq(b.keys()),
        format!("file lists differ: {} vs {} files", a.len(), b.len()),
    )?;
    let differing: Vec<&String> = a.keys().filter(|k| a[*k] != b[*k]).collect();
    check(
        differing.is_empty(),
        format!("{} files differ, first {:?}", differing.len(), differing.first()),
    )?;
    Ok(format!(
        "{} files ({} bytes) from export to evaluation identical across runs",
        a.len(),
        a.values().map(Vec::len).sum::<usize>()
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, started: Instant, outcome: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("[PASS] {n:>2} {name} ({secs:.1}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {n:>2} {name} ({secs:.1}s): {msg}");
            }
        }
    };
    let t = Instant::now();
    report(1, "confident joint oracle", t, c1_confident_joint_oracle());
    let t = Instant::now();
    report(2, "worked confident-learning example", t, c2_worked_example());
    let t = Instant::now();
    report(3, "noisy-label recovery", t, c3_noisy_label_recovery());
    let t = Instant::now();
    report(4, "signal forming", t, c4_signal_forming());
    let t = Instant::now();
    report(5, "gradient check", t, c5_gradient_check());
    let t = Instant::now();
    report(6, "metric oracles", t, c6_metrics());
    let t = Instant::now();
    report(7, "forecaster recovery and NMF", t, c7_forecasters_and_nmf());
    let t = Instant::now();
    match synthetic_runs() {
        Ok(runs) => {
            report(8, "POP gain on the synthetic harness", t, c8_pop_gain(&runs));
            report(9, "ablation ordering", t, c9_ablation_order(&runs));
        }
        Err(e) => {
            report(8, "POP gain on the synthetic harness", t, Err(e.clone()));
            report(9, "ablation ordering", t, Err(e));
        }
    }
    let t = Instant::now();
    report(10, "determinism of CLI output trees", t, c10_determinism());
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
