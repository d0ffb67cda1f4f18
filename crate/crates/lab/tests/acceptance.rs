//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

#[path = "../../core/tests/oracles/detection.rs"]
mod detection_oracle;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nuce_core::data::{generate_synthetic, group_kfold, GroupedDataset, SynthConfig};
use nuce_core::detection::{
    average_precision, coco_thresholds, iou, map_suite, BBox, DetectionSet, ScoredBox,
};
use nuce_core::gradcheck::{run_suite, Instance, Perturbation};
use nuce_core::losses::{
    center_loss, cross_entropy_loss, focal_loss, nuce_loss, nuce_loss_matrix_form, one_hot_labels,
    LossConfig, LossKind, LossOutput,
};
use nuce_core::metrics::{confusion, per_class, prf1, Averaging, ConfusionMatrix};
use nuce_core::trainer::{train, Schedule, TrainConfig};
use nuce_core::DenseMatrix;
use nuce_lab::commands::{self, AnchorChoice, PcaOptions};
use nuce_lab::config::{default_sweep_grid, ExperimentConfig};
use nuce_lab::csv_io::write_csv;
use nuce_lab::model_io::save_model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nuce-lab"))
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nuce-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest deviation in value, gradient w.r.t. H and gradient w.r.t. W.
fn output_gap(a: &LossOutput, b: &LossOutput) -> f64 {
    (a.total - b.total)
        .abs()
        .max(max_abs_diff(&a.grad_h, &b.grad_h))
        .max(max_abs_diff(&a.grad_w, &b.grad_w))
}

fn c1_gradient_suite() -> Outcome {
    let rows = run_suite(0, 25, Perturbation::default()).map_err(|e| e.to_string())?;
    let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    for r in &rows {
        ensure(
            r.passed() && r.instances >= 20,
            format!(
                "{}:{} rel err {:e}",
                r.loss.name(),
                r.block.name(),
                r.max_rel_error
            ),
        )?;
    }
    ensure(
        rows.len() == 13,
        format!("expected 13 (loss, block) rows, got {}", rows.len()),
    )?;
    let start = Instant::now();
    let status = bin()
        .arg("gradcheck")
        .output()
        .map_err(|e| e.to_string())?
        .status;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(
        status.code() == Some(0),
        format!("gradcheck exit {:?}", status.code()),
    )?;
    ensure(elapsed < 10.0, format!("gradcheck took {elapsed:.2}s"))?;
    Ok(format!(
        "13 blocks × 25 instances, worst rel err {worst:.2e}, CLI exit 0 in {elapsed:.2}s"
    ))
}

fn c2_reduction_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let inst = Instance::random(&mut rng);
        let (h, w, y, a) = (&inst.h, &inst.w, &inst.y, &inst.a);
        let ce = cross_entropy_loss(h, w, y).map_err(|e| e.to_string())?;
        let plain = LossConfig::nuce(1.0, 0.0, 0.0).unwrap();
        let gaps = [
            output_gap(&nuce_loss(h, w, y, a, &plain).unwrap(), &ce),
            output_gap(&focal_loss(h, w, y, 0.0).unwrap(), &ce),
            output_gap(&center_loss(h, w, y, a, 0.0).unwrap(), &ce),
        ];
        let per = nuce_loss(h, w, y, a, &inst.cfg).unwrap();
        let mat = nuce_loss_matrix_form(h, w, y, a, &inst.cfg).unwrap();
        let matrix_gap = output_gap(&per, &mat).max(max_abs_diff(&per.grad_a, &mat.grad_a));
        for g in gaps.into_iter().chain([matrix_gap]) {
            worst = worst.max(g);
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("50 instances, max deviation {worst:.1e}"))
}

fn c3_contract_zero() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inst = Instance::random(&mut rng);
    let labels = one_hot_labels(&inst.y).unwrap();
    let rows: Vec<Vec<f64>> = labels.iter().map(|&k| inst.a.anchor(k).to_vec()).collect();
    let h = DenseMatrix::from_rows(&rows).unwrap();
    let out = nuce_loss(&h, &inst.w, &inst.y, &inst.a, &inst.cfg).unwrap();
    ensure(
        out.contract_term == 0.0,
        format!("contract term {}", out.contract_term),
    )?;
    Ok("features at anchors give contract_term == 0".into())
}

fn c4_defaults(out: &Path) -> Outcome {
    let cfg = ExperimentConfig::default();
    let t = cfg.train_config(0).map_err(|e| e.to_string())?;
    let l = t.loss;
    ensure(
        l.kind == LossKind::Nuce && l.lambda_r == 1.0 && l.lambda_c == 0.5 && l.gamma == 2.0,
        format!("loss defaults {l:?}"),
    )?;
    ensure(
        t.learning_rate == 1e-3
            && t.batch_size == 128
            && t.epochs == 10
            && t.schedule == Schedule::Cosine,
        format!("train defaults {t:?}"),
    )?;
    ensure(
        t == TrainConfig {
            seed: 0,
            ..TrainConfig::default()
        },
        "config defaults differ from trainer defaults",
    )?;
    let six = vec![
        (0.5, 0.5, 2.0),
        (1.0, 0.0, 2.0),
        (1.0, 0.5, 1.0),
        (1.0, 0.5, 2.0),
        (1.0, 1.0, 2.0),
        (1.5, 0.5, 2.0),
    ];
    ensure(
        cfg.sweep_grid().unwrap() == six && default_sweep_grid() == six,
        "default grid",
    )?;

    // the CLI runs exactly those six rows when no grid is configured
    let conf = out.join("small.toml");
    std::fs::write(
        &conf,
        "[data]\nn_total = 1500\npositive_rate = 0.05\nn_groups = 20\n[train]\nepochs = 2\n[experiment]\nfolds = 2\nseeds = [0]\n",
    )
    .unwrap();
    let status = bin()
        .args(["sweep", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(out.join("sweep"))
        .output()
        .map_err(|e| e.to_string())?
        .status;
    ensure(status.success(), format!("sweep exit {:?}", status.code()))?;
    let table = std::fs::read_to_string(out.join("sweep/sweep.csv")).unwrap();
    let mut grid: Vec<(f64, f64, f64)> = table
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l
                .split(',')
                .skip(1)
                .take(3)
                .map(|v| v.parse().unwrap())
                .collect();
            (f[0], f[1], f[2])
        })
        .collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ensure(grid == six, format!("sweep rows {grid:?}"))?;
    Ok(
        "λ_r=1, λ_c=0.5, γ=2, lr=1e-3, batch 128, 10 epochs, cosine; sweep runs the six grid rows"
            .into(),
    )
}

fn c5_imbalance(out: &Path) -> Outcome {
    let start = Instant::now();
    let output = bin()
        .arg("ablation")
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(
        output.status.success(),
        String::from_utf8_lossy(&output.stderr).to_string(),
    )?;
    let table = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "macro_f1").unwrap();
    let runs_col = header.iter().position(|&h| h == "runs").unwrap();
    let f1 = |label: &str| -> (f64, usize) {
        let line = table
            .lines()
            .find(|l| l.starts_with(&format!("{label},")))
            .unwrap();
        let f: Vec<&str> = line.split(',').collect();
        (f[col].parse().unwrap(), f[runs_col].parse().unwrap())
    };
    let (ce, n) = f1("cross_entropy");
    let (uw, _) = f1("uncertainty_weighting");
    let (full, _) = f1("full_nuce");
    let detail =
        format!("macro-F1 CE {ce:.4}, UW {uw:.4}, NUCE {full:.4} over {n} runs in {elapsed:.1}s");
    ensure(n == 15, format!("{detail}: expected 15 runs"))?;
    ensure(elapsed < 300.0, format!("{detail}: too slow"))?;
    ensure(
        full >= uw && uw >= ce,
        format!("{detail}: ordering NUCE ≥ UW ≥ CE violated"),
    )?;
    ensure(
        full - ce >= 0.02,
        format!("{detail}: NUCE − CE below 2 points"),
    )?;
    Ok(detail)
}

fn c6_embedding(out: &Path) -> Outcome {
    let ds = generate_synthetic(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let fold = &group_kfold(&ds, 5, 0).unwrap()[0];
    let (tr, va) = (ds.subset(&fold.train), ds.subset(&fold.val));
    let val_csv = out.join("val.csv");
    write_csv(&va, &val_csv).unwrap();
    let ratio = |name: &str, loss: LossConfig| -> Result<f64, String> {
        let cfg = TrainConfig {
            loss,
            ..TrainConfig::default()
        };
        let report = train(&tr, &va, &cfg).map_err(|e| e.to_string())?;
        let model = out.join(format!("{name}.json"));
        save_model(&report.params, &model).unwrap();
        let (_, stats) = commands::pca(&PcaOptions {
            model,
            data: val_csv.clone(),
            anchors: AnchorChoice::Centroids,
            out: out.join(name),
        })
        .map_err(|e| e.to_string())?;
        Ok(stats.fisher_ratio.unwrap_or(f64::INFINITY))
    };
    let nuce = ratio("nuce", LossConfig::default())?;
    let ce = ratio("ce", LossConfig::nuce(1.0, 0.0, 0.0).unwrap())?;
    let detail = format!("fisher ratio NUCE {nuce:.4} vs CE {ce:.4} on seed 0, fold 0");
    ensure(nuce > ce, detail.clone())?;
    Ok(detail)
}

fn random_box(rng: &mut impl Rng) -> BBox {
    let x0 = rng.gen_range(0..8) as f64;
    let y0 = rng.gen_range(0..8) as f64;
    BBox::new(
        x0,
        y0,
        x0 + rng.gen_range(1..5) as f64,
        y0 + rng.gen_range(1..5) as f64,
    )
    .unwrap()
}

fn random_sets(rng: &mut impl Rng) -> Vec<DetectionSet> {
    loop {
        let sets: Vec<DetectionSet> = (0..rng.gen_range(1..=5))
            .map(|i| {
                let gt = (0..rng.gen_range(0..=4)).map(|_| random_box(rng)).collect();
                let pred = (0..rng.gen_range(0..=4))
                    .map(|_| ScoredBox {
                        bbox: random_box(rng),
                        confidence: rng.gen_range(0..=10) as f64 / 10.0,
                    })
                    .collect();
                DetectionSet::new(format!("img{i}"), gt, pred).unwrap()
            })
            .collect();
        if sets.iter().any(|s| !s.ground_truth.is_empty()) {
            return sets;
        }
    }
}

fn c7_detection(out: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let sets = random_sets(&mut rng);
        for t in coco_thresholds().into_iter().chain([0.25]) {
            let fast = average_precision(&sets, t).unwrap();
            worst = worst.max((fast - detection_oracle::brute_force_ap(&sets, t)).abs());
        }
    }
    ensure(
        worst < 1e-12,
        format!("AP deviates from brute force by {worst:e}"),
    )?;

    let b = |x0, y0, x1, y1| BBox::new(x0, y0, x1, y1).unwrap();
    ensure(
        iou(&b(0.0, 0.0, 2.0, 2.0), &b(1.0, 1.0, 3.0, 3.0)) == 1.0 / 7.0,
        "iou != 1/7",
    )?;

    let fixture = out.join("worked.jsonl");
    std::fs::write(
        &fixture,
        concat!(
            r#"{"image":"a","gt":[[0,0,10,10],[50,50,60,60]],"pred":[[0,0,10,10,0.9],[100,100,110,110,0.8],[50,50,60,60,0.7]]}"#,
            "\n"
        ),
    )
    .unwrap();
    let status = bin()
        .args(["detect-eval", "--input"])
        .arg(&fixture)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?
        .status;
    ensure(status.success(), "detect-eval failed on the worked example")?;
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("detection_metrics.json")).unwrap())
            .unwrap();
    let ap50 = doc["mAP@50"].as_f64().unwrap();
    ensure(
        (ap50 - 5.0 / 6.0).abs() < 1e-12,
        format!("worked example mAP@50 {ap50}"),
    )?;
    let direct = map_suite(&[DetectionSet::new(
        "a".into(),
        vec![b(0.0, 0.0, 10.0, 10.0), b(50.0, 50.0, 60.0, 60.0)],
        vec![],
    )
    .unwrap()])
    .unwrap();
    ensure(direct.map50 == 0.0, "no predictions must give AP 0")?;
    Ok(format!("100 random instances within {worst:.1e} of brute force; worked example AP@0.5 = {ap50:.4}; IoU = 1/7"))
}

fn c8_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let k = rng.gen_range(2..6);
        let counts: Vec<u64> = (0..k * k).map(|_| rng.gen_range(0..50)).collect();
        let cm = ConfusionMatrix::from_counts(k, counts).unwrap();
        if cm.total() == 0 {
            continue;
        }
        let w = prf1(&cm, Averaging::Weighted).unwrap();
        ensure(
            (w.recall - w.accuracy).abs() < 1e-12,
            format!("weighted recall {} vs accuracy {}", w.recall, w.accuracy),
        )?;
    }
    // balanced: every class has the same support
    for _ in 0..200 {
        let k = rng.gen_range(2..5);
        let per = rng.gen_range(1..20);
        let truth: Vec<usize> = (0..k).flat_map(|c| std::iter::repeat_n(c, per)).collect();
        let pred: Vec<usize> = truth.iter().map(|_| rng.gen_range(0..k)).collect();
        let cm = confusion(&truth, &pred, k).unwrap();
        let (m, w) = (
            prf1(&cm, Averaging::Macro).unwrap(),
            prf1(&cm, Averaging::Weighted).unwrap(),
        );
        for (a, b) in [
            (m.precision, w.precision),
            (m.recall, w.recall),
            (m.f1, w.f1),
        ] {
            ensure(
                (a - b).abs() < 1e-12,
                format!("macro {a} vs weighted {b} under balance"),
            )?;
        }
    }
    let cm = ConfusionMatrix::from_counts(2, vec![4, 1, 2, 3]).unwrap();
    let c = per_class(&cm).unwrap()[1];
    ensure(
        c.precision == 0.75 && c.recall == 0.6,
        format!("hand example {c:?}"),
    )?;
    ensure(
        (c.f1 - 2.0 * 0.45 / 1.35).abs() < 1e-12,
        format!("hand F1 {}", c.f1),
    )?;
    Ok(format!(
        "weighted recall == accuracy, macro == weighted when balanced; hand example F1 {:.4}",
        c.f1
    ))
}

fn c9_split_hygiene() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..1000 {
        let n = rng.gen_range(4..150);
        let n_groups = rng.gen_range(2..=n.min(40)) as u64;
        let groups: Vec<u64> = (0..n)
            .map(|_| rng.gen_range(0..n_groups) * 13 + 1)
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let ds = GroupedDataset::new(DenseMatrix::zeros(n, 1), labels, groups, 2).unwrap();
        let distinct = ds.distinct_groups().len();
        let k = rng.gen_range(2..=distinct.clamp(2, 10));
        if distinct < k {
            continue;
        }
        let folds = group_kfold(&ds, k, trial).map_err(|e| e.to_string())?;
        let mut covered = vec![0u32; n];
        for f in &folds {
            let tg: BTreeSet<u64> = f.train.iter().map(|&i| ds.groups()[i]).collect();
            let vg: BTreeSet<u64> = f.val.iter().map(|&i| ds.groups()[i]).collect();
            ensure(
                tg.is_disjoint(&vg),
                format!("trial {trial}: group on both sides"),
            )?;
            for &i in &f.val {
                covered[i] += 1;
            }
        }
        ensure(
            covered.iter().all(|&c| c == 1),
            format!("trial {trial}: val folds do not partition rows"),
        )?;
    }
    Ok("1000 random datasets, no group on both sides of any fold".into())
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

fn c10_determinism(out: &Path) -> Outcome {
    let conf = out.join("det.toml");
    std::fs::write(
        &conf,
        "[data]\nn_total = 1200\npositive_rate = 0.05\nn_groups = 12\n[train]\nepochs = 3\n[experiment]\nfolds = 3\nseeds = [4]\n[sweep]\nlambda_c = [0.0, 0.5]\n",
    )
    .unwrap();
    let jsonl = out.join("det.jsonl");
    std::fs::write(
        &jsonl,
        "{\"image\":\"a\",\"gt\":[[0,0,4,4]],\"pred\":[[0,0,4,5,0.6],[1,1,5,5,0.6]]}\n{\"image\":\"b\",\"gt\":[],\"pred\":[[2,2,3,3,0.2]]}\n",
    )
    .unwrap();
    let run = |tag: &str| -> Result<PathBuf, String> {
        let root = out.join(tag);
        let c = conf.to_str().unwrap();
        let r = root.to_str().unwrap().to_string();
        let invocations: Vec<Vec<String>> = vec![
            vec![
                "train".into(),
                "--config".into(),
                c.into(),
                "--out".into(),
                format!("{r}/train"),
            ],
            vec![
                "ablation".into(),
                "--config".into(),
                c.into(),
                "--out".into(),
                format!("{r}/ablation"),
            ],
            vec![
                "sweep".into(),
                "--config".into(),
                c.into(),
                "--out".into(),
                format!("{r}/sweep"),
            ],
            vec![
                "generate".into(),
                "--config".into(),
                c.into(),
                "--out".into(),
                format!("{r}/data"),
            ],
            vec![
                "gradcheck".into(),
                "--seed".into(),
                "5".into(),
                "--out".into(),
                format!("{r}/grad"),
            ],
            vec![
                "detect-eval".into(),
                "--input".into(),
                jsonl.to_str().unwrap().into(),
                "--tau".into(),
                "0.1,0.5".into(),
                "--out".into(),
                format!("{r}/detect"),
            ],
            vec![
                "pca".into(),
                "--model".into(),
                format!("{r}/train/models/seed4_fold0.json"),
                "--data".into(),
                format!("{r}/data/dataset.csv"),
                "--out".into(),
                format!("{r}/pca"),
            ],
        ];
        for args in invocations {
            let o = bin().args(&args).output().map_err(|e| e.to_string())?;
            ensure(
                o.status.success(),
                format!("{} failed: {}", args[0], String::from_utf8_lossy(&o.stderr)),
            )?;
        }
        Ok(root)
    };
    let (a, b) = (read_tree(&run("first")?), read_tree(&run("second")?));
    ensure(a.len() == b.len(), "different file sets")?;
    for ((pa, ba), (pb, bb)) in a.iter().zip(&b) {
        ensure(
            pa == pb && ba == bb,
            format!("{} differs between reruns", pa.display()),
        )?;
    }
    Ok(format!(
        "{} output files byte-identical across reruns of all commands",
        a.len()
    ))
}

fn main() {
    let root = scratch("suite");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 gradient suite", Box::new(c1_gradient_suite)),
        ("2 reduction identities", Box::new(c2_reduction_identities)),
        (
            "3 contract term zero at anchors",
            Box::new(c3_contract_zero),
        ),
        (
            "4 defaults and sweep grid",
            Box::new({
                let d = root.join("c4");
                move || c4_defaults(&d)
            }),
        ),
        (
            "5 imbalance ordering",
            Box::new({
                let d = root.join("c5");
                move || c5_imbalance(&d)
            }),
        ),
        (
            "6 embedding structure",
            Box::new({
                let d = root.join("c6");
                move || c6_embedding(&d)
            }),
        ),
        (
            "7 detection evaluator",
            Box::new({
                let d = root.join("c7");
                move || c7_detection(&d)
            }),
        ),
        ("8 metric identities", Box::new(c8_metrics)),
        ("9 split hygiene", Box::new(c9_split_hygiene)),
        (
            "10 determinism",
            Box::new({
                let d = root.join("c10");
                move || c10_determinism(&d)
            }),
        ),
    ];
    for n in [4, 5, 6, 7, 10] {
        std::fs::create_dir_all(root.join(format!("c{n}"))).unwrap();
    }
    let mut failures = 0;
    for (name, check) in &criteria {
        let result =
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|p| {
                Err(p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()))
            });
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    let _ = std::fs::remove_dir_all(&root);
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
