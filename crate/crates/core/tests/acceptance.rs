//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails unexpectedly.
//!
//! Criterion 3 is known to be red: the published pair J = 0.51, D = 0.67 is
//! not consistent with D = 2J/(1+J) at two decimals (2·0.51/1.51 = 0.6755).
//! The check still runs in full; only that exact discrepancy is tolerated.

use std::path::Path;
use std::time::Instant;

use drunet::cli::{self, gradcheck, RunConfig};
use drunet::data::{
    balance_sources, color_blob_samples, encode_confidence, make_input, read_gray_bytes, rgb_to_hsv,
    select_subset_md5, write_color_blob_dataset, write_confidence_png, write_rgb_png, AugmentParams,
    DatasetManifest, ManifestEntry, Split, DEFAULT_SIZE,
};
use drunet::loss::{dice_from_jaccard, evaluate, jaccard_loss, jaccard_loss_grad};
use drunet::models::{count_params, BlockKind, ModelConfig, Network, Variant};
use drunet::training::{
    evaluate_network, run_scenario, train_with_validation, Checkpoint, Control, EarlyStopping, Scenario,
    StopReason, TrainConfig,
};
use drunet::{Error, Rng, Tensor};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn check(ok: bool, what: &str, failures: &mut Vec<String>) {
    if !ok {
        failures.push(what.to_string());
    }
}

fn summarize(failures: Vec<String>, ok_detail: String) -> Verdict {
    if failures.is_empty() {
        verdict(true, ok_detail)
    } else {
        verdict(false, failures.join("; "))
    }
}

fn cli_run(args: &[&str]) -> (i32, String) {
    let mut buf = Vec::new();
    let code = cli::run(std::iter::once("drunet").chain(args.iter().copied()), &mut buf);
    (code, String::from_utf8_lossy(&buf).into_owned())
}

// 1 ---------------------------------------------------------------------------

fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let mut rows = gradcheck::layer_suite(&gradcheck::SEEDS).expect("layer suite");
    let layers = rows.len();
    rows.extend(gradcheck::network_suite(gradcheck::NETWORK_SAMPLES, 0).expect("network suite"));
    let secs = start.elapsed().as_secs_f64();
    let mut failures: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} rel {:.2e}", r.name, r.max_rel_error))
        .collect();
    check(rows.iter().take(layers).all(|r| r.runs >= 3), "fewer than 3 seeds", &mut failures);
    check(
        rows.iter().skip(layers).all(|r| r.checked >= 200),
        "fewer than 200 network parameters",
        &mut failures,
    );
    check(secs < 120.0, "slower than 2 minutes", &mut failures);
    let worst_layer = rows.iter().take(layers).map(|r| r.max_rel_error).fold(0.0, f64::max);
    let worst_net = rows.iter().skip(layers).map(|r| r.max_rel_error).fold(0.0, f64::max);
    summarize(
        failures,
        format!("{layers} layer types worst {worst_layer:.2e} < 1e-4; networks worst {worst_net:.2e} < 1e-3; {secs:.1}s"),
    )
}

// 2 ---------------------------------------------------------------------------

fn oracle_loss(p: &[f64], t: &[f64]) -> f64 {
    let mut tp = 0.0;
    let mut t2 = 0.0;
    let mut p2 = 0.0;
    for k in 0..p.len() {
        tp += t[k] * p[k];
        t2 += t[k] * t[k];
        p2 += p[k] * p[k];
    }
    let den = t2 + p2 - tp;
    if den == 0.0 {
        0.0
    } else {
        1.0 - tp / den
    }
}

fn oracle_grad(p: &[f64], t: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    (0..p.len())
        .map(|k| {
            let mut up = p.to_vec();
            let mut down = p.to_vec();
            up[k] += h;
            down[k] -= h;
            (oracle_loss(&up, t) - oracle_loss(&down, t)) / (2.0 * h)
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn jaccard_oracle() -> Verdict {
    let mut failures = Vec::new();
    let t = Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap();
    let p = Tensor::from_vec(&[2], vec![0.5, 0.5]).unwrap();
    check(jaccard_loss(&p, &t).unwrap() == 0.5, "fixture loss", &mut failures);
    check(jaccard_loss_grad(&p, &t).unwrap().data() == [-1.0, 0.5], "fixture gradient", &mut failures);

    let mut rng = Rng::new(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 1 + rng.below(24);
        // Interior points keep the central difference inside [0, 1].
        let p: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.01, 0.99)).collect();
        let t: Vec<f64> = (0..n).map(|_| (rng.uniform() < 0.5) as u8 as f64).collect();
        let (pt, tt) = (Tensor::from_vec(&[n], p.clone()).unwrap(), Tensor::from_vec(&[n], t.clone()).unwrap());
        worst = worst.max(rel(jaccard_loss(&pt, &tt).unwrap(), oracle_loss(&p, &t)));
        let g = jaccard_loss_grad(&pt, &tt).unwrap();
        for (a, b) in g.data().iter().zip(oracle_grad(&p, &t)) {
            worst = worst.max(rel(*a, b));
        }
    }
    check(worst < 1e-6, &format!("max relative error {worst:.2e}"), &mut failures);
    summarize(failures, format!("fixture exact; 100 random instances max rel {worst:.2e} < 1e-6"))
}

// 3 ---------------------------------------------------------------------------

const TABLE_PAIRS: [(f64, f64); 7] = [
    (0.55, 0.71),
    (0.51, 0.67),
    (0.44, 0.61),
    (0.80, 0.89),
    (0.83, 0.91),
    (0.88, 0.94),
    (0.89, 0.94),
];

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Jaccard interval `[lo, hi)` whose implied Dice rounds to `d`.
fn consistent_jaccard(d: f64) -> (f64, f64) {
    let inv = |x: f64| x / (2.0 - x);
    (inv(d - 0.005), inv(d + 0.005))
}

fn metric_identity() -> (Verdict, Vec<f64>) {
    let mut failures = Vec::new();
    let mut mismatched = Vec::new();
    for (j, d) in TABLE_PAIRS {
        let implied = dice_from_jaccard(j);
        if round2(implied) != d {
            let (lo, hi) = consistent_jaccard(d);
            mismatched.push(j);
            failures.push(format!(
                "J {j:.2} implies D {implied:.4} -> {:.2}, not {d:.2} (D {d:.2} needs J in [{lo:.4}, {hi:.4}), \
                 which overlaps J {j:.2}'s rounding interval [{:.3}, {:.3}))",
                round2(implied),
                j - 0.005,
                j + 0.005
            ));
        }
    }

    let mut rng = Rng::new(7);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = 1 + rng.below(4);
        let side = 2 + rng.below(10);
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for _ in 0..n {
            let p: Vec<f64> = (0..side * side).map(|_| rng.uniform()).collect();
            let t: Vec<f64> = (0..side * side).map(|_| (rng.uniform() < 0.4) as u8 as f64).collect();
            preds.push(Tensor::from_vec(&[side, side], p).unwrap());
            truths.push(Tensor::from_vec(&[side, side], t).unwrap());
        }
        let r = evaluate(&preds, &truths).unwrap();
        worst = worst.max((r.agg_dice - dice_from_jaccard(r.agg_jaccard)).abs());
    }
    if worst > 1e-15 {
        failures.push(format!("aggregate identity off by {worst:.1e}"));
        // Not a published pair: marks a genuine regression.
        mismatched.push(f64::NAN);
    }
    let consistent = TABLE_PAIRS.len() - mismatched.iter().filter(|j| !j.is_nan()).count();
    let tail = format!("{consistent}/7 published pairs consistent; aggregate D = 2J/(1+J) within {worst:.1e}");
    let v = if failures.is_empty() {
        verdict(true, tail)
    } else {
        verdict(false, format!("{}; {tail}", failures.join("; ")))
    };
    (v, mismatched)
}

// 4 ---------------------------------------------------------------------------

const TARGET_JACCARD: f64 = 0.95;

fn overfit_config(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 300,
        patience: 300,
        seed,
        augment: AugmentParams::none(),
        ..TrainConfig::for_scenario(Scenario::DirectTraining)
    }
}

/// Epoch at which training-set Jaccard first exceeds the target.
fn epochs_to_target(net: &mut Network, set: &[drunet::data::Sample], cfg: &TrainConfig) -> Option<usize> {
    let mut hit = None;
    train_with_validation(net, set, set, cfg, |n, r| {
        if evaluate_network(n, set, cfg.batch_size)?.agg_jaccard > TARGET_JACCARD {
            hit = Some(r.epoch);
            return Ok(Control::Stop);
        }
        Ok(Control::Continue)
    })
    .expect("training runs");
    hit
}

fn overfit() -> Verdict {
    let set = color_blob_samples(8, 32, 1);
    let mut failures = Vec::new();
    let mut parts = Vec::new();
    for variant in [Variant::Unet, Variant::DenseResidualUnet] {
        let mut net = Network::new(&ModelConfig::toy(variant), 0).unwrap();
        let start = Instant::now();
        let hit = epochs_to_target(&mut net, &set, &overfit_config(0));
        let secs = start.elapsed().as_secs_f64();
        match hit {
            Some(e) => parts.push(format!("{} epoch {e} ({secs:.0}s)", variant.as_str())),
            None => failures.push(format!("{} never reached J > {TARGET_JACCARD}", variant.as_str())),
        }
        check(secs < 600.0, &format!("{} slower than 10 minutes", variant.as_str()), &mut failures);
        if variant == Variant::DenseResidualUnet {
            let blocks = net.blocks();
            let count = |k: BlockKind| blocks.iter().filter(|b| b.kind == k).count();
            check(count(BlockKind::DenseEncode) > 0, "no dense blocks", &mut failures);
            check(count(BlockKind::Residual) == 4, "residual blocks != 4", &mut failures);
            check(count(BlockKind::FullyConnected) == 1, "no FC bottleneck", &mut failures);
        }
    }
    summarize(
        failures,
        format!("{}; dense blocks, 4 residual blocks, FC bottleneck present", parts.join(", ")),
    )
}

// 5, 6, 8, 10 share one synthetic dataset and CLI runs -------------------------

struct CliRuns {
    dir: tempfile::TempDir,
}

impl CliRuns {
    fn path(&self, rel: &str) -> String {
        self.dir.path().join(rel).to_string_lossy().into_owned()
    }

    fn setup() -> CliRuns {
        let dir = tempfile::tempdir().unwrap();
        write_color_blob_dataset(&dir.path().join("data"), &[(Split::Train, 6), (Split::Eval, 2)], 40, 11).unwrap();
        CliRuns { dir }
    }

    fn train(&self, command: &str, out: &str, extra: &[&str]) -> i32 {
        let manifest = self.path("data/manifest.tsv");
        let out = self.path(out);
        let mut args = vec![
            command,
            "--manifest",
            &manifest,
            "--out",
            &out,
            "--seed",
            "3",
            "--set",
            "train.max_epochs=3",
            "--set",
            "train.patience=2",
            "--set",
            "train.batch_size=4",
        ];
        args.extend_from_slice(extra);
        cli_run(&args).0
    }

    fn read(&self, rel: &str) -> Vec<u8> {
        std::fs::read(self.dir.path().join(rel)).unwrap_or_default()
    }

    fn log(&self, rel: &str) -> String {
        String::from_utf8(self.read(rel)).unwrap()
    }
}

const TOY_UNET: [&str; 4] = ["--set", "model.scale=toy", "--set", "model.variant=unet"];

fn scenario_semantics(runs: &CliRuns) -> Verdict {
    let mut failures = Vec::new();

    // Direct transfer evaluates without touching parameters.
    let ckpt = Checkpoint::load(runs.path("train_a/checkpoint.drus")).unwrap();
    let before = ckpt.to_bytes().unwrap();
    let eval = color_blob_samples(3, 32, 5);
    let cfg = TrainConfig::for_scenario(Scenario::DirectTransfer);
    let out = run_scenario(&cfg, &ckpt.model, &[], &eval, Some(&ckpt)).unwrap();
    check(out.checkpoint.params == ckpt.params, "direct_transfer changed parameters", &mut failures);
    check(ckpt.to_bytes().unwrap() == before, "direct_transfer mutated its input", &mut failures);
    check(out.training.is_none(), "direct_transfer trained", &mut failures);

    // Learning rates from the effective-config logs.
    check(
        runs.log("train_a/run.log").contains("\ntrain.learning_rate=0.01\n"),
        "train log lacks lr 0.01",
        &mut failures,
    );
    check(
        runs.log("finetune/run.log").contains("\ntrain.learning_rate=0.001\n"),
        "finetune log lacks lr 0.001",
        &mut failures,
    );

    // Fine-tuning a converged checkpoint beats training from scratch.
    let model = ModelConfig::toy(Variant::Unet);
    let pre_set = color_blob_samples(16, 32, 999);
    let mut pre = Network::new(&model, 77).unwrap();
    let pre_cfg = TrainConfig {
        max_epochs: 150,
        patience: 150,
        ..overfit_config(77)
    };
    train_with_validation(&mut pre, &pre_set, &pre_set, &pre_cfg, |_, _| Ok(Control::Continue)).unwrap();
    let pretrained = Checkpoint::from_network(&pre, 150, None, Rng::new(77).state());

    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..5u64 {
        let set = color_blob_samples(8, 32, seed + 1);
        let mut direct = Network::new(&model, seed).unwrap();
        let d = epochs_to_target(&mut direct, &set, &overfit_config(seed));
        let mut tuned = pretrained.to_network().unwrap();
        for p in tuned.params_mut() {
            p.velocity.fill(0.0);
        }
        let ft_cfg = TrainConfig {
            scenario: Scenario::FineTuning,
            learning_rate: Scenario::FineTuning.default_learning_rate(),
            ..overfit_config(seed)
        };
        let f = epochs_to_target(&mut tuned, &set, &ft_cfg);
        if let (Some(f), Some(d)) = (f, d) {
            if f < d {
                wins += 1;
            }
        } else if f.is_some() {
            wins += 1;
        }
        let show = |e: Option<usize>| e.map_or("-".to_string(), |e| e.to_string());
        pairs.push(format!("{}/{}", show(f), show(d)));
    }
    check(wins >= 4, &format!("fine-tuning faster in only {wins}/5 seeds"), &mut failures);
    summarize(
        failures,
        format!(
            "transfer bitwise unchanged; lr 0.01/0.001 logged; fine-tune/direct epochs {} ({wins}/5)",
            pairs.join(" ")
        ),
    )
}

fn early_stopping() -> Verdict {
    let mut failures = Vec::new();
    let mut es = EarlyStopping::new(2);
    let obs: Vec<_> = [1.0, 0.9, 0.95, 0.96]
        .iter()
        .enumerate()
        .map(|(i, &l)| es.observe(i + 1, l))
        .collect();
    check(obs.iter().position(|o| o.stop) == Some(3), "does not stop after epoch 4", &mut failures);
    check(es.best_epoch() == 2, "best epoch is not 2", &mut failures);

    // The trainer hands back the checkpoint of the best validation epoch.
    let set = color_blob_samples(10, 32, 3);
    let mut net = Network::new(&ModelConfig::toy(Variant::Unet), 4).unwrap();
    let cfg = TrainConfig {
        patience: 2,
        max_epochs: 40,
        learning_rate: 0.2,
        ..overfit_config(4)
    };
    let out = train_with_validation(&mut net, &set[..7], &set[7..], &cfg, |_, _| Ok(Control::Continue)).unwrap();
    let best = out
        .history
        .epochs
        .iter()
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
        .unwrap();
    check(out.best.epochs_completed == out.best_epoch, "checkpoint epoch differs", &mut failures);
    check(best.epoch == out.best_epoch, "best epoch is not the minimum", &mut failures);
    if out.stop == StopReason::EarlyStopping {
        check(out.epochs_run == out.best_epoch + 2, "stopped at the wrong epoch", &mut failures);
    }
    let restored = Checkpoint::from_network(&net, out.best_epoch, out.best.best_val_loss, out.best.rng);
    check(restored.params == out.best.params, "network not restored to best", &mut failures);

    let defaults = RunConfig::resolve(&[], Scenario::DirectTraining).unwrap().echo();
    check(defaults.contains("train.max_epochs=500\n"), "max_epochs default", &mut failures);
    check(defaults.contains("train.patience=50\n"), "patience default", &mut failures);
    summarize(
        failures,
        format!(
            "fixture stops after epoch 4 with epoch 2; trainer run stopped {:?} at {} with best {}; defaults 500/50 echoed",
            out.stop, out.epochs_run, out.best_epoch
        ),
    )
}

// 7 ---------------------------------------------------------------------------

fn channel_stats(t: &Tensor, c: usize) -> (f64, f64) {
    let plane = t.len() / t.shape()[0];
    let x = &t.data()[c * plane..(c + 1) * plane];
    let mean = x.iter().sum::<f64>() / plane as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / plane as f64;
    (mean, var.sqrt())
}

fn standardized(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    x.iter().map(|v| if std < 1e-8 { 0.0 } else { (v - mean) / std }).collect()
}

fn pipeline_fidelity() -> Verdict {
    let mut failures = Vec::new();
    let mut rng = Rng::new(9);
    let (h, w) = (20, 15);
    let mut data: Vec<f64> = (0..3 * h * w).map(|_| rng.uniform()).collect();
    // A constant blue channel exercises the zero-variance branch.
    data[2 * h * w..].fill(0.3);
    let rgb = Tensor::from_vec(&[3, h, w], data).unwrap();
    let x = make_input(&rgb).unwrap();
    check(x.shape() == [6, h, w], "not 6 channels", &mut failures);

    let hsv = rgb_to_hsv(&rgb).unwrap();
    let plane = h * w;
    let mut order_err = 0.0f64;
    for c in 0..6 {
        let src = if c < 3 { &rgb.data()[c * plane..(c + 1) * plane] } else { &hsv.data()[(c - 3) * plane..(c - 2) * plane] };
        for (a, b) in x.data()[c * plane..(c + 1) * plane].iter().zip(standardized(src)) {
            order_err = order_err.max((a - b).abs());
        }
        let (mean, std) = channel_stats(&x, c);
        check(mean.abs() < 1e-9, &format!("channel {c} mean {mean:e}"), &mut failures);
        check(std == 0.0 || (std - 1.0).abs() <= 1e-6, &format!("channel {c} std {std}"), &mut failures);
    }
    check(order_err < 1e-9, "channel order is not R,G,B,H,S,V", &mut failures);

    let refs = [
        ([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]),
        ([0.0, 1.0, 0.0], [1.0 / 3.0, 1.0, 1.0]),
        ([0.5, 0.5, 0.5], [0.0, 0.0, 0.5]),
    ];
    for (src, want) in refs {
        let got = rgb_to_hsv(&Tensor::from_vec(&[3, 1, 1], src.to_vec()).unwrap()).unwrap();
        let err = got.data().iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        check(err < 1e-9, &format!("HSV of {src:?} off by {err:e}"), &mut failures);
    }

    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("odd.png");
    let mask = dir.path().join("odd_mask.png");
    write_rgb_png(&img, &Tensor::full(&[3, 45, 70], 0.25).unwrap()).unwrap();
    drunet::data::write_mask_png(&mask, &Tensor::full(&[45, 70], 1.0).unwrap()).unwrap();
    let s = drunet::data::load_sample(&img, &mask, DEFAULT_SIZE, "odd").unwrap();
    check(s.image6.shape() == [6, 128, 128] && s.mask.shape() == [128, 128], "default size", &mut failures);
    summarize(
        failures,
        "6 channels R,G,B,H,S,V standardized; HSV references exact; 45x70 -> 128x128".into(),
    )
}

// 8 ---------------------------------------------------------------------------

fn determinism(runs: &CliRuns) -> Verdict {
    let mut failures = Vec::new();
    let a = runs.read("train_a/checkpoint.drus");
    let b = runs.read("train_b/checkpoint.drus");
    check(!a.is_empty() && a == b, "seeded runs differ", &mut failures);
    for f in ["history.tsv", "report.tsv", "run.log"] {
        check(
            runs.read(&format!("train_a/{f}")) == runs.read(&format!("train_b/{f}")),
            &format!("{f} differs"),
            &mut failures,
        );
    }
    let loaded = Checkpoint::from_bytes(&a).unwrap();
    check(loaded.to_bytes().unwrap() == a, "save/load not bitwise", &mut failures);
    let mut corrupt = a.clone();
    let k = corrupt.len() / 2 + 3;
    corrupt[k] ^= 0x10;
    check(
        matches!(Checkpoint::from_bytes(&corrupt), Err(Error::ChecksumMismatch { .. })),
        "corruption not rejected by checksum",
        &mut failures,
    );
    summarize(
        failures,
        format!("two seeded CLI runs byte-identical ({} B checkpoint); round-trip bitwise; corruption rejected", a.len()),
    )
}

// 9 ---------------------------------------------------------------------------

fn dataset_procedures() -> Verdict {
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    // Published MD5 digests of the single-byte contents.
    let fixtures = [
        ("f1.bin", "a", "0cc175b9c0f1b6a831c399e269772661"),
        ("f2.bin", "b", "92eb5ffee6ae2fec3ad71c777531578f"),
        ("f3.bin", "c", "4a8a08f09d37b73795649038408b5f33"),
        ("f4.bin", "d", "8277e0910d750195b448797616e091ad"),
        ("f5.bin", "e", "e1671797c52e15f763380b45e841ec32"),
    ];
    let mut paths = Vec::new();
    for (name, body, _) in fixtures {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        paths.push(p);
    }
    let mut expected: Vec<_> = fixtures.iter().map(|(n, _, d)| (*d, *n)).collect();
    expected.sort();
    let picked = select_subset_md5(&paths, 3).unwrap();
    let picked: Vec<String> = picked.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    let want: Vec<&str> = expected.iter().take(3).map(|(_, n)| *n).collect();
    check(picked == want, &format!("picked {picked:?}, expected {want:?}"), &mut failures);

    let synth = |source: &str, n: usize| {
        let entries = (0..n)
            .map(|i| ManifestEntry {
                image: format!("{source}/{i}.jpg").into(),
                mask: format!("{source}/{i}_mask.png").into(),
                split: Split::Train,
            })
            .collect();
        DatasetManifest::new(source, entries)
    };
    let sources = [synth("lfw", 1500), synth("lvs", 800), synth("hgr", 899)];
    let merged = balance_sources(&sources, &[1000, 721, 899], 5).unwrap();
    let mut images: Vec<_> = merged.entries.iter().map(|e| e.image.clone()).collect();
    images.sort();
    images.dedup();
    check(merged.len() == 2620, &format!("{} entries", merged.len()), &mut failures);
    check(images.len() == merged.len(), "duplicates drawn", &mut failures);
    summarize(
        failures,
        format!("MD5 order {want:?}; balanced (1000, 721, 899) -> {} unique entries", merged.len()),
    )
}

// 10 --------------------------------------------------------------------------

fn unique_values(bytes: &[u8]) -> Vec<u8> {
    let mut v = bytes.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn output_encoding(runs: &CliRuns) -> Verdict {
    let mut failures = Vec::new();
    let probe = Tensor::from_vec(&[1, 3], vec![0.0, 1.0, 0.5]).unwrap();
    check(encode_confidence(&probe) == [0, 255, 128], "confidence encoding", &mut failures);
    let path = runs.dir.path().join("probe.png");
    write_confidence_png(&path, &probe).unwrap();
    check(read_gray_bytes(&path).unwrap().2 == [0, 255, 128], "PNG round trip", &mut failures);

    let out = runs.path("predict");
    let ckpt = runs.path("train_a/checkpoint.drus");
    let img = runs.path("data/blob006.png");
    let (code, _) = cli_run(&["predict", "--checkpoint", &ckpt, "--out", &out, &img]);
    check(code == 0, "predict failed", &mut failures);
    let p = Path::new(&out);
    for (file, h, w) in [
        ("blob006_confidence.png", 32, 32),
        ("blob006_mask.png", 32, 32),
        ("blob006_confidence_full.png", 40, 40),
        ("blob006_mask_full.png", 40, 40),
    ] {
        match read_gray_bytes(p.join(file)) {
            Ok((fh, fw, bytes)) => {
                check((fh, fw) == (h, w), &format!("{file} is {fh}x{fw}"), &mut failures);
                if file.contains("mask") {
                    check(
                        unique_values(&bytes).iter().all(|v| *v == 0 || *v == 255),
                        &format!("{file} not binary"),
                        &mut failures,
                    );
                }
            }
            Err(e) => failures.push(format!("{file}: {e}")),
        }
    }
    let (code, _) = cli_run(&["predict", "--checkpoint", &ckpt, "--out", &out, &img, "missing.png"]);
    check(code != 0, "missing image did not fail the run", &mut failures);
    check(p.join("blob006_mask.png").exists(), "good image not written", &mut failures);
    summarize(
        failures,
        "0->0, 1->255, 0.5->128; masks only {0,255}; 32x32 and 40x40 maps; bad file reported".into(),
    )
}

// 11 --------------------------------------------------------------------------

fn parameter_accounting() -> Verdict {
    let mut failures = Vec::new();
    let tiny = ModelConfig {
        stage_filters: vec![2, 4],
        input_size: 8,
        fc_width: 3,
        ..ModelConfig::toy(Variant::Unet)
    };
    let conv = |i: usize, o: usize| 9 * i * o + o;
    let fc = |k: usize, n: usize| k * n + n;
    let hand_tiny = conv(6, 2) + conv(2, 2) + conv(2, 4) + conv(4, 4)
        + fc(16, 3) + fc(3, 16)
        + conv(8, 4) + conv(4, 4) + conv(6, 2) + conv(2, 2)
        + conv(2, 1);
    let hand_toy = conv(6, 8) + conv(8, 8) + conv(8, 16) + conv(16, 16)
        + fc(1024, 32) + fc(32, 1024)
        + conv(32, 16) + conv(16, 16) + conv(24, 8) + conv(8, 8)
        + conv(8, 1);
    check(count_params(&tiny).unwrap() == hand_tiny, "tiny fixture", &mut failures);
    check(count_params(&ModelConfig::toy(Variant::Unet)).unwrap() == hand_toy, "toy fixture", &mut failures);
    let large = count_params(&ModelConfig::paper(Variant::UnetLarge)).unwrap();
    check((120_000_000..=180_000_000).contains(&large), &format!("unet_large {large}"), &mut failures);
    let (code, text) = cli_run(&["params", "--set", "model.variant=unet_large"]);
    check(code == 0 && text.contains(&format!("total parameters: {large} ")), "params command", &mut failures);
    summarize(
        failures,
        format!("hand counts {hand_tiny} and {hand_toy} exact; unet_large {large} in [120M, 180M]"),
    )
}

type Criterion<'a> = Box<dyn FnOnce() -> Verdict + 'a>;

fn main() {
    let runs = CliRuns::setup();
    let train_a = runs.train("train", "train_a", &TOY_UNET);
    let train_b = runs.train("train", "train_b", &TOY_UNET);
    let ckpt = runs.path("train_a/checkpoint.drus");
    let finetune = runs.train("finetune", "finetune", &["--checkpoint", &ckpt]);
    assert_eq!((train_a, train_b, finetune), (0, 0, 0), "CLI training runs failed");

    let mut known_red = Vec::new();
    let criteria: Vec<(usize, &str, Criterion)> = vec![
        (1, "gradient correctness", Box::new(gradient_correctness)),
        (2, "soft-Jaccard oracle", Box::new(jaccard_oracle)),
        (
            3,
            "metric identity",
            Box::new(|| {
                let (v, mismatched) = metric_identity();
                known_red = mismatched;
                v
            }),
        ),
        (4, "overfit trainability", Box::new(overfit)),
        (5, "scenario semantics", Box::new(|| scenario_semantics(&runs))),
        (6, "early stopping", Box::new(early_stopping)),
        (7, "pipeline fidelity", Box::new(pipeline_fidelity)),
        (8, "determinism and persistence", Box::new(|| determinism(&runs))),
        (9, "dataset procedures", Box::new(dataset_procedures)),
        (10, "output encoding", Box::new(|| output_encoding(&runs))),
        (11, "parameter accounting", Box::new(parameter_accounting)),
    ];

    let mut unexpected = Vec::new();
    for (n, name, run) in criteria {
        let v = run();
        println!("{} criterion {n:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass && n != 3 {
            unexpected.push(n);
        }
    }
    // Criterion 3 may only fail on the one published pair that is itself
    // inconsistent; any other mismatch is a real regression.
    let metric_regressed = known_red.iter().any(|&j| j != 0.51);
    if !unexpected.is_empty() || metric_regressed {
        eprintln!("unexpected failures: {unexpected:?}, metric pairs {known_red:?}");
        std::process::exit(1);
    }
}
