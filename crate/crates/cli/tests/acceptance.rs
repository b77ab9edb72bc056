//! Acceptance criteria. Each test prints one PASS/FAIL line to stderr.
//! Tests share a lock so the timed runs do not compete for cores.

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use fmdl::locfuse::{fuse_maps, FusionWeights};
use fmdl::losses::{
    bce, bce_grad, classification_loss, mask_loss, mask_loss_grad, mask_loss_sample, noise_loss, noise_loss_grad,
    noise_loss_sample, total_loss, Reduction,
};
use fmdl::maps::{NoiseMapSet, SegMapSet};
use fmdl::maskgen::BinaryMask;
use fmdl::metrics::{average_precision, confusion_rates, eer, iinc, iou, pbca, roc_auc, ScoredSample};
use fmdl::residual::{extract_residual, residual_stats, shrink_coefficient};
use fmdl::resize;
use fmdl::synthbench::{generate_pair, procedural_texture, SpliceSpec};
use fmdl::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u8, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {id} {name}: {tag} ({detail})");
    assert!(ok, "criterion {id} failed: {detail}");
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---- 1. metric oracles ----

fn mask(bits: &[f64], h: usize, w: usize) -> BinaryMask<f64> {
    BinaryMask::new(Tensor::from_vec(1, h, w, bits.to_vec()).unwrap()).unwrap()
}

#[test]
fn criterion_1_metric_oracles() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut set_mismatch = 0usize;
    let instances = 250;
    for _ in 0..instances {
        let n = rng.random_range(2..=100);
        let levels = rng.random_range(2..25);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let samples: Vec<ScoredSample<f64>> = scores.iter().zip(&labels).map(|(&s, &l)| ScoredSample::new(s, l)).collect();
        let thr = rng.random_range(0.0..1.0);
        let rates = confusion_rates(&samples, thr).unwrap();
        let (acc, fpr, fnr) = oracles::confusion(&scores, &labels, thr);
        for d in [
            roc_auc(&samples).unwrap() - oracles::auc(&scores, &labels),
            eer(&samples).unwrap() - oracles::eer(&scores, &labels),
            average_precision(&samples).unwrap() - oracles::average_precision(&scores, &labels),
            rates.acc - acc,
            rates.fpr.unwrap() - fpr.unwrap(),
            rates.fnr.unwrap() - fnr.unwrap(),
        ] {
            worst = worst.max(d.abs());
        }

        let (h, w) = (rng.random_range(1..=10), rng.random_range(1..=10));
        let density = [0.0, 0.05, 0.3, 0.7, 1.0];
        let (dp, dg) = (density[rng.random_range(0..5)], density[rng.random_range(0..5)]);
        let p: Vec<f64> = (0..h * w).map(|_| f64::from(u8::from(rng.random_bool(dp)))).collect();
        let g: Vec<f64> = (0..h * w).map(|_| f64::from(u8::from(rng.random_bool(dg)))).collect();
        let (pm, gm) = (mask(&p, h, w), mask(&g, h, w));
        set_mismatch += usize::from(iou(&pm, &gm).unwrap() != oracles::iou(&p, &g, w));
        set_mismatch += usize::from(pbca(&pm, &gm).unwrap() != oracles::pbca(&p, &g));
        set_mismatch += usize::from(iinc(&pm, &gm).unwrap() != oracles::iinc(&p, &g, w));
    }
    let elapsed = t0.elapsed();
    let ok = worst < 1e-9 && set_mismatch == 0 && elapsed < Duration::from_secs(30);
    verdict(
        1,
        "metric oracles",
        ok,
        &format!("{instances} instances, max rank |d| {worst:.1e}, set mismatches {set_mismatch}, {}", secs(elapsed)),
    );
}

// ---- 2. loss oracles and gradients ----

type Planes = Vec<Vec<f64>>;

fn seg(rng: &mut ChaCha8Rng, sz: [usize; 3], binary: bool) -> (SegMapSet<f64>, Planes) {
    let mut planes = Vec::new();
    let maps = sz.map(|s| {
        let t = Tensor::from_fn(1, s, s, |_, _, _| {
            if binary {
                f64::from(u8::from(rng.random_bool(0.4)))
            } else {
                rng.random_range(0.01..0.99)
            }
        });
        planes.push(t.as_slice().to_vec());
        t
    });
    (SegMapSet { maps }, planes)
}

fn noise(rng: &mut ChaCha8Rng, sz: [usize; 3]) -> (NoiseMapSet<f64>, Planes) {
    let mut planes = Vec::new();
    let maps = sz.map(|s| {
        let t = Tensor::from_fn(3, s, s, |_, _, _| rng.random_range(-0.2..0.2));
        planes.push(t.as_slice().to_vec());
        t
    });
    (NoiseMapSet { maps }, planes)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn criterion_2_loss_oracles() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=4);
        let s = rng.random_range(2..=8);
        let sz = [s, (s / 2).max(1), (s / 4).max(1)];
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let l_c = classification_loss(&probs, &labels).unwrap();
        worst = worst.max((l_c - oracles::classification_loss(&probs, &labels)).abs());

        let (mut sp, mut sg, mut op, mut og) = (vec![], vec![], vec![], vec![]);
        let (mut np, mut ng, mut onp, mut ong) = (vec![], vec![], vec![], vec![]);
        for _ in 0..n {
            let ((p, pp), (g, gp)) = (seg(&mut rng, sz, false), seg(&mut rng, sz, true));
            sp.push(p);
            sg.push(g);
            op.push(pp);
            og.push(gp);
            let ((p, pp), (g, gp)) = (noise(&mut rng, sz), noise(&mut rng, sz));
            np.push(p);
            ng.push(g);
            onp.push(pp);
            ong.push(gp);
        }
        let l_b = mask_loss(&sp, &sg).unwrap();
        let want_b = oracles::mask_loss(&op, &og);
        worst = worst.max((l_b - want_b).abs());
        let l_n = noise_loss(&np, &ng, Reduction::Mean).unwrap();
        let want_n = oracles::noise_loss(&onp, &ong, true);
        worst = worst.max((l_n - want_n).abs());
        worst = worst.max((noise_loss(&np, &ng, Reduction::Sum).unwrap() - oracles::noise_loss(&onp, &ong, false)).abs());

        let (l1, l2) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let total = total_loss(l_c, l_n, l_b, l1, l2).unwrap().total;
        let want_total = oracles::classification_loss(&probs, &labels) + l1 * want_n + l2 * want_b;
        worst = worst.max((total - want_total).abs());
    }

    let mut worst_grad: f64 = 0.0;
    let sz = [4, 2, 1];
    let (mut p, _) = seg(&mut rng, sz, false);
    let (g, _) = seg(&mut rng, sz, true);
    let grad = mask_loss_grad(&p, &g, 1.0).unwrap();
    let h = 1e-6;
    for j in 0..3 {
        for k in 0..p.maps[j].len() {
            let orig = p.maps[j].as_slice()[k];
            p.maps[j].as_mut_slice()[k] = orig + h;
            let up = mask_loss_sample(&p, &g).unwrap();
            p.maps[j].as_mut_slice()[k] = orig - h;
            let down = mask_loss_sample(&p, &g).unwrap();
            p.maps[j].as_mut_slice()[k] = orig;
            worst_grad = worst_grad.max(rel((up - down) / (2.0 * h), grad[j].as_slice()[k]));
        }
    }
    let (mut q, _) = noise(&mut rng, sz);
    let (r, _) = noise(&mut rng, sz);
    let grad = noise_loss_grad(&q, &r, Reduction::Mean, 1.0).unwrap();
    let h = 1e-7;
    for j in 0..3 {
        for k in 0..q.maps[j].len() {
            let orig = q.maps[j].as_slice()[k];
            q.maps[j].as_mut_slice()[k] = orig + h;
            let up = noise_loss_sample(&q, &r, Reduction::Mean).unwrap();
            q.maps[j].as_mut_slice()[k] = orig - h;
            let down = noise_loss_sample(&q, &r, Reduction::Mean).unwrap();
            q.maps[j].as_mut_slice()[k] = orig;
            worst_grad = worst_grad.max(rel((up - down) / (2.0 * h), grad[j].as_slice()[k]));
        }
    }
    for _ in 0..50 {
        let (pr, c) = (rng.random_range(0.02..0.98), f64::from(rng.random_range(0u8..2)));
        let h = 1e-6;
        let fd = (bce(pr + h, c) - bce(pr - h, c)) / (2.0 * h);
        worst_grad = worst_grad.max(rel(fd, bce_grad(pr, c)));
    }
    let elapsed = t0.elapsed();
    let ok = worst < 1e-9 && worst_grad < 1e-4 && elapsed < Duration::from_secs(60);
    verdict(
        2,
        "loss oracles",
        ok,
        &format!("max |d| {worst:.1e}, max gradient rel err {worst_grad:.1e}, {}", secs(elapsed)),
    );
}

// ---- 3. residual filter ----

#[test]
fn criterion_3_residual_filter() {
    let _g = serial();
    let t0 = Instant::now();
    let texture = |seed: u64| procedural_texture(&mut ChaCha8Rng::seed_from_u64(seed), 64);
    let img = texture(1);
    let identity = extract_residual(&img, 0.0).unwrap().residual.as_slice().iter().all(|&v| v == 0.0);
    let flat = Tensor::<f64>::filled(3, 64, 64, 131.0);
    let constant = extract_residual(&flat, 5.0)
        .unwrap()
        .residual
        .as_slice()
        .iter()
        .all(|v| v.abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut expanded = 0usize;
    for _ in 0..1000 {
        let c: f64 = rng.random_range(-400.0..400.0);
        let out = shrink_coefficient(c, rng.random_range(0.0..300.0), rng.random_range(0.0..300.0));
        expanded += usize::from(out.abs() > c.abs() + 1e-12);
    }

    let normal = Normal::new(0.0, 5.0).unwrap();
    let mut corr = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let mut noisy = texture(500 + seed);
        let added: Vec<f64> = (0..noisy.len()).map(|_| normal.sample(&mut rng)).collect();
        for (v, n) in noisy.as_mut_slice().iter_mut().zip(&added) {
            *v += n;
        }
        let r = extract_residual(&noisy, 5.0).unwrap();
        corr += oracles::correlation(r.residual.as_slice(), &added);
    }
    corr /= 20.0;
    let elapsed = t0.elapsed();
    let ok = identity && constant && expanded == 0 && corr > 0.5 && elapsed < Duration::from_secs(60);
    verdict(
        3,
        "residual filter",
        ok,
        &format!(
            "identity {identity}, constant {constant}, expansions {expanded}/1000, mean AWGN correlation {corr:.3}, {}",
            secs(elapsed)
        ),
    );
}

// ---- 4. map fusion ----

#[test]
fn criterion_4_fusion() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut m = |s: usize| Tensor::from_fn(1, s, s, |_, _, _| rng.random_range(0.0..1.0));
    let set = SegMapSet {
        maps: [m(16), m(8), m(4)],
    };
    let deep = FusionWeights::normalized(0.0, 0.0, 1.0).unwrap();
    let exact = fuse_maps(&set, 64, 64, &deep).unwrap() == resize::bilinear(&set.maps[2], 64, 64);

    let fused = fuse_maps(&set, 64, 64, &FusionWeights::default()).unwrap();
    let planes: Vec<(Vec<f64>, usize, usize)> = set
        .maps
        .iter()
        .map(|m| (m.as_slice().to_vec(), m.height(), m.width()))
        .collect();
    let mut worst: f64 = 0.0;
    for y in 0..64 {
        for x in 0..64 {
            let want = oracles::fuse_pixel(&planes, [0.1, 0.2, 0.7], 64, 64, y, x);
            worst = worst.max((fused.get(0, y, x) - want).abs());
        }
    }
    verdict(
        4,
        "map fusion",
        exact && worst < 1e-9,
        &format!("deep-only exact {exact}, default weights max |d| {worst:.1e}"),
    );
}

// ---- 5. residual statistics of fakes and reals ----

#[test]
fn criterion_5_residual_statistics() {
    let _g = serial();
    let t0 = Instant::now();
    let spec = SpliceSpec {
        seed: 505,
        ..SpliceSpec::default()
    };
    let (mut fakes, mut reals) = (0.0, 0.0);
    for i in 0..100 {
        let p = generate_pair::<f64>(&spec, i).unwrap();
        fakes += residual_stats(&extract_residual(&p.fake, 5.0).unwrap()).unwrap().variance;
        reals += residual_stats(&extract_residual(&p.real, 5.0).unwrap()).unwrap().variance;
    }
    let (fakes, reals) = (fakes / 100.0, reals / 100.0);
    let elapsed = t0.elapsed();
    verdict(
        5,
        "residual statistics",
        fakes > reals && elapsed < Duration::from_secs(120),
        &format!("mean variance fake {fakes:.3e} vs real {reals:.3e}, {}", secs(elapsed)),
    );
}

// ---- 6 and 7. command-line runs ----

fn fmdl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmdl")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let o = fmdl(args);
    assert!(
        o.status.success(),
        "fmdl {} failed: {}",
        args.first().unwrap_or(&""),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Every stage kept its best validation epoch, the earliest on ties.
fn selection_is_consistent(summary: &Value) -> bool {
    summary.as_array().unwrap().iter().all(|stage| {
        let mut best: Option<(u64, f64)> = None;
        for e in stage["epochs"].as_array().unwrap() {
            let (epoch, auc) = (e["epoch"].as_u64().unwrap(), e["val_auc"].as_f64().unwrap());
            if best.is_none_or(|(_, b)| auc > b) {
                best = Some((epoch, auc));
            }
        }
        best.map(|(e, _)| e) == stage["selected_epoch"].as_u64()
    })
}

#[test]
fn criterion_6_desk_run() {
    let _g = serial();
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (data, run, ev, loc, rep) = (
        dir.path().join("data"),
        dir.path().join("run"),
        dir.path().join("eval"),
        dir.path().join("loc"),
        dir.path().join("report"),
    );
    let manifest = data.join("manifest.jsonl");
    let ckpt = run.join("model.ckpt");
    run_ok(&["synth", "--count", "400", "--val-count", "100", "--test-count", "100", "--size", "64", "--out", s(&data)]);
    run_ok(&["train", "--manifest", s(&manifest), "--out", s(&run)]);
    run_ok(&[
        "eval", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--split", "test", "--out", s(&ev), "--name",
        "desk",
    ]);
    run_ok(&[
        "localize", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--split", "test", "--out", s(&loc),
    ]);
    run_ok(&["report", s(&ev.join("report.json")), "--out", s(&rep)]);
    let elapsed = t0.elapsed();

    let report = read_json(&ev.join("report.json"));
    let auc = report["detection"]["auc"].as_f64().unwrap();
    let iou = report["localization"]["iou"].as_f64().unwrap();
    let selection = selection_is_consistent(&read_json(&run.join("summary.json")));
    let maps = std::fs::read_dir(&loc)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    let table = std::fs::read_to_string(rep.join("report.csv")).unwrap();
    let reported = table.lines().nth(1).is_some_and(|l| l.starts_with("desk,200,"));

    let ok = auc >= 0.95 && iou >= 0.6 && selection && maps == 200 && reported && elapsed < Duration::from_secs(20 * 60);
    verdict(
        6,
        "desk run",
        ok,
        &format!(
            "test AUC {auc:.4}, IoU {iou:.4}, selection {selection}, {maps} maps, report row {reported}, {}",
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_7_noise_loss_ablation() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = data.join("manifest.jsonl");
    run_ok(&["synth", "--count", "24", "--val-count", "8", "--test-count", "8", "--size", "32", "--out", s(&data)]);
    let mut reports = Vec::new();
    for (name, lambda) in [("lambda1_0", "0.0"), ("lambda1_1", "1.0")] {
        let run = dir.path().join(name);
        let ev = dir.path().join(format!("{name}_eval"));
        let set = format!("lambda1={lambda}");
        run_ok(&[
            "train", "--manifest", s(&manifest), "--out", s(&run), "--set", "input_size=32", "--set", "epochs_step1=1",
            "--set", "epochs_step2=1", "--set", &set,
        ]);
        run_ok(&[
            "eval", "--checkpoint", s(&run.join("model.ckpt")), "--manifest", s(&manifest), "--out", s(&ev), "--name",
            name,
        ]);
        reports.push(ev.join("report.json"));
    }
    let rep = dir.path().join("report");
    run_ok(&["report", s(&reports[0]), s(&reports[1]), "--out", s(&rep)]);
    let csv = std::fs::read_to_string(rep.join("report.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let comparable = rows.len() == 3
        && rows.iter().all(|r| r.len() == rows[0].len())
        && rows[1][0] == "lambda1_0"
        && rows[2][0] == "lambda1_1"
        && rows[1..].iter().all(|r| r[1..].iter().all(|c| c.parse::<f64>().is_ok()));
    verdict(
        7,
        "noise loss ablation",
        comparable,
        &format!("{} rows with {} columns", rows.len().saturating_sub(1), rows[0].len()),
    );
}
