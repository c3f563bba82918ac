//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use spca::bench::{run_experiment, terrain_corpus, ExperimentConfig, ExperimentKind, MetricsRow};
use spca::matops::Matrix;
use spca::satc::{
    blockize, deblockize, encode_pgm, image_codec_train, parse_pgm, read_bank, read_stream, write_bank, write_pgm,
    write_stream, BankConfig, TransformKind,
};
use spca::spca::{bcd_spca_fit, ecd_spca_fit, pca_basis, scalar_lasso, spca_cost, SpcaConfig, SpcaModel};
use spca::synth::{gen_sparse_basis, sample_gaussian};
use spca::vq::{lloyd_train, DEFAULT_MAX_ITERS, DEFAULT_TOL};

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, Check, Option<Duration>); 11] = [
        ("scalar lasso closed form", scalar_lasso_oracle, Some(Duration::from_secs(1))),
        ("monotone cost traces", monotone_traces, Some(Duration::from_secs(30))),
        ("zero-penalty PCA limit", pca_limit, None),
        ("reconstruction MSE vs q", mse_vs_q, Some(Duration::from_secs(300))),
        ("reconstruction MSE vs SNR", mse_vs_snr, Some(Duration::from_secs(300))),
        ("support recovery vs n", support_vs_n, Some(Duration::from_secs(600))),
        ("cross-validation curve shape", cv_curve, None),
        ("Lloyd quantizer", lloyd, None),
        ("rate-distortion ordering", rate_distortion, None),
        ("image pipeline", image_pipeline, None),
        ("CLI determinism", determinism, None),
    ];
    let mut failed = 0;
    for (k, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(detail), Some(limit)) if elapsed > *limit => {
                Err(format!("{detail}; took {:.1} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs()))
            }
            (o, _) => o,
        };
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name}: {detail} [{:.1} s]", k + 1, elapsed.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn experiment(kind: ExperimentKind, tweak: impl FnOnce(&mut ExperimentConfig)) -> Result<Vec<MetricsRow>, String> {
    let mut cfg = ExperimentConfig::preset(kind);
    tweak(&mut cfg);
    run_experiment(&cfg).map_err(|e| e.to_string())
}

fn lookup<'a>(rows: &'a [MetricsRow], sweep: f64, method: &str, metric: &str) -> Result<&'a MetricsRow, String> {
    rows.iter()
        .find(|r| r.sweep_value == sweep && r.method == method && r.metric == metric)
        .ok_or_else(|| format!("missing row {sweep},{method},{metric}"))
}

fn sweep_values(rows: &[MetricsRow], method: &str, metric: &str) -> Vec<f64> {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.metric == metric)
        .map(|r| r.sweep_value)
        .collect();
    v.dedup();
    v
}

/// Golden-section minimization of a convex function on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

fn scalar_lasso_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut zeros = 0;
    for _ in 0..1000 {
        let inner = rng.random_range(-5.0..5.0);
        let h2 = rng.random_range(0.0..5.0);
        let mu = rng.random_range(0.05..3.0);
        let bhat = rng.random_range(-2.0..2.0);
        let lambda = if rng.random_bool(0.25) { 0.0 } else { rng.random_range(0.0..12.0) };
        let closed = scalar_lasso(inner, h2, mu, bhat, lambda).map_err(|e| e.to_string())?;
        let f = |c: f64| h2 * c * c - 2.0 * inner * c + mu * (c - bhat).powi(2) + lambda * c.abs();
        let bound = (inner.abs() + mu * bhat.abs()) / (h2 + mu) + 1.0;
        let brute = golden_min(f, -bound, bound);
        worst = worst.max((closed - brute).abs());
        zeros += usize::from(closed == 0.0);
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:.2e} > 1e-6"))?;
    Ok(format!("1000 instances ({zeros} thresholded to zero), max deviation {worst:.1e}"))
}

fn check_trace(model: &SpcaModel, x: &Matrix, cfg: &SpcaConfig, label: &str) -> Result<(), String> {
    for (k, w) in model.cost_trace.windows(2).enumerate() {
        ensure(w[1] - w[0] <= 1e-10 * w[0].abs(), || {
            format!("{label}: cost rose from {} to {} at sweep {}", w[0], w[1], k + 1)
        })?;
    }
    ensure(model.converged, || format!("{label}: no convergence in {} sweeps", model.sweeps))?;
    let direct = spca_cost(x, &model.b, &model.c, cfg).map_err(|e| e.to_string())?;
    let last = model.final_cost();
    ensure((direct - last).abs() <= 1e-8 * direct.abs().max(1e-300), || {
        format!("{label}: reported final cost {last} but direct evaluation gives {direct}")
    })
}

fn monotone_traces() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut sweeps = (0, 0);
    for inst in 0..100 {
        let p = rng.random_range(3..=20);
        let n = rng.random_range(5..=100);
        let q = rng.random_range(1..=p.min(5));
        let mix = gaussian(p, p, &mut rng);
        let x = mix.matmul(&gaussian(p, n, &mut rng)).map_err(|e| e.to_string())?;
        let lambda = 10f64.powf(rng.random_range(-3.0..0.0));
        let mu = [1.0, 10.0, 100.0][inst % 3];
        let mut cfg = SpcaConfig::new(q, lambda).with_mu(mu).with_max_sweeps(100_000);
        if inst % 2 == 1 {
            cfg = cfg.with_weights(Matrix::from_fn(p, q, |_, _| rng.random_range(0.5..2.0)));
        }
        let ecd = ecd_spca_fit(&x, &cfg, None).map_err(|e| e.to_string())?;
        check_trace(&ecd, &x, &cfg, &format!("instance {inst} ECD"))?;
        let bcd = bcd_spca_fit(&x, &cfg, None).map_err(|e| e.to_string())?;
        check_trace(&bcd, &x, &cfg, &format!("instance {inst} BCD"))?;
        sweeps.0 += ecd.sweeps;
        sweeps.1 += bcd.sweeps;
    }
    Ok(format!(
        "100 instances, both solvers converged; mean sweeps ECD {:.1}, BCD {:.1}",
        sweeps.0 as f64 / 100.0,
        sweeps.1 as f64 / 100.0
    ))
}

fn projector(u: &Matrix) -> Matrix {
    u.matmul(&u.transpose()).expect("square product")
}

fn pca_limit() -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let r = 2 + (seed as usize % 4);
        let model = gen_sparse_basis(14, r, 2, 0.8, seed).map_err(|e| e.to_string())?;
        let (_, x) = sample_gaussian(&model, 100, seed + 100, false).map_err(|e| e.to_string())?;
        let reference = projector(&pca_basis(&x, r).map_err(|e| e.to_string())?);
        let cfg = SpcaConfig::new(r, 0.0).with_mu(100.0);
        for solver in [ecd_spca_fit, bcd_spca_fit] {
            let fitted = solver(&x, &cfg, None).map_err(|e| e.to_string())?;
            let basis = fitted.basis.ok_or("fit collapsed to zero")?;
            worst = worst.max(projector(&basis).sub(&reference).map_err(|e| e.to_string())?.frobenius_norm());
        }
    }
    ensure(worst <= 1e-3, || format!("projector difference {worst:.2e} > 1e-3"))?;
    Ok(format!("20 seeds, both solvers, max projector difference {worst:.1e}"))
}

fn mse_vs_q() -> Result<String, String> {
    let rows = experiment(ExperimentKind::MseVsQ, |c| c.mc_runs = c.mc_runs.max(50))?;
    let scale = lookup(&rows, 1.0, "pca", "jrec")?.value;
    // at q = r all three curves are zero up to rounding
    let slack = 1e-12 * scale;
    let mut margins = Vec::new();
    for q in sweep_values(&rows, "ecd", "jrec") {
        let ecd = lookup(&rows, q, "ecd", "jrec")?.value;
        let pca = lookup(&rows, q, "pca", "jrec")?.value;
        let clair = lookup(&rows, q, "clairvoyant", "jrec")?.value;
        ensure(ecd <= pca + slack, || format!("q={q}: ECD {ecd:.5} > PCA {pca:.5}"))?;
        ensure(ecd - clair <= 2.0 * (pca - clair) + slack, || {
            format!("q={q}: ECD gap {:.4} exceeds twice the PCA gap {:.4}", ecd - clair, pca - clair)
        })?;
        margins.push(format!("{:.3}", pca - ecd));
    }
    Ok(format!("ECD below PCA and within the gap bound at every q; PCA−ECD = [{}]", margins.join(", ")))
}

fn mse_vs_snr() -> Result<String, String> {
    let rows = experiment(ExperimentKind::MseVsSnr, |c| c.mc_runs = c.mc_runs.max(100))?;
    let mut notes = Vec::new();
    for snr in sweep_values(&rows, "ecd", "jrec") {
        let ecd = lookup(&rows, snr, "ecd", "jrec")?.value;
        let pca = lookup(&rows, snr, "pca", "jrec")?.value;
        ensure(ecd <= pca, || format!("{snr} dB: ECD {ecd:.4} > PCA {pca:.4}"))?;
        notes.push(format!("{snr} dB {ecd:.4}/{pca:.4}"));
    }
    Ok(format!("ECD/PCA: {}", notes.join(", ")))
}

fn support_vs_n() -> Result<String, String> {
    let rows = experiment(ExperimentKind::SupportVsN, |c| c.mc_runs = c.mc_runs.max(50))?;
    let ns = sweep_values(&rows, "ecd", "support_prob");
    ensure(ns == [100.0, 1000.0, 10000.0], || format!("unexpected n grid {ns:?}"))?;
    let mut probs = Vec::new();
    for &n in &ns {
        let pca = lookup(&rows, n, "pca", "support_prob")?.value;
        ensure(pca == 0.0, || format!("n={n}: PCA support probability {pca} ≠ 0"))?;
        probs.push(lookup(&rows, n, "ecd", "support_prob")?.value);
    }
    ensure(probs.windows(2).all(|w| w[1] >= w[0]), || format!("not non-decreasing: {probs:?}"))?;
    let last = probs[probs.len() - 1];
    ensure(last >= 0.9, || format!("probability {last} < 0.9 at n=10⁴"))?;
    Ok(format!("ECD probability {probs:?} over n = 10², 10³, 10⁴; PCA 0"))
}

fn cv_curve() -> Result<String, String> {
    let rows = experiment(ExperimentKind::CvCurve, |_| {})?;
    let curve: Vec<&MetricsRow> = rows.iter().filter(|r| r.method == "spca" && r.metric == "cv_jrec").collect();
    ensure(curve.len() >= 3, || "curve has fewer than three points".into())?;
    let pca = lookup(&rows, 0.0, "pca", "cv_jrec")?.value;
    let trace = lookup(&rows, 0.0, "sample", "trace")?.value;
    let first = curve[0].value;
    let last = curve[curve.len() - 1].value;
    let (imin, min) = curve
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.value))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    ensure((first - pca).abs() <= 0.05 * pca, || format!("smallest λ gives {first:.4}, PCA {pca:.4}"))?;
    ensure((last - trace).abs() <= 0.01 * trace, || format!("largest λ gives {last:.4}, trace {trace:.4}"))?;
    ensure(imin > 0 && imin + 1 < curve.len() && min < first && min < last, || {
        format!("minimum {min:.4} at grid index {imin} is not interior")
    })?;
    Ok(format!(
        "first {first:.3} vs PCA {pca:.3}, last {last:.3} vs trace {trace:.3}, minimum {min:.3} at λ={:.3}",
        curve[imin].sweep_value
    ))
}

/// Centroids of the two-level quantizer of N(0,1), by fixed-point iteration with numeric integrals.
fn two_level_gaussian_oracle() -> (f64, f64) {
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
        let m = 20_000;
        let h = (b - a) / m as f64;
        let inner: f64 = (1..m).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        (f(a) + f(b) + inner) * h / 3.0
    };
    let cond_mean = |a: f64, b: f64| simpson(&|t| t * pdf(t), a, b) / simpson(&pdf, a, b);
    let (mut lo, mut hi) = (-0.3, 1.7);
    for _ in 0..100 {
        let cut = 0.5 * (lo + hi);
        lo = cond_mean(-12.0, cut);
        hi = cond_mean(cut, 12.0);
    }
    (lo, hi)
}

fn lloyd() -> Result<String, String> {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..=4);
        let n = rng.random_range(50..=500);
        let rate = rng.random_range(1..=5);
        let data = gaussian(dim, n, &mut rng);
        let cb = lloyd_train(&data, rate, seed, DEFAULT_TOL, DEFAULT_MAX_ITERS).map_err(|e| e.to_string())?;
        for w in cb.distortion_trace.windows(2) {
            ensure(w[1] <= w[0] * (1.0 + 1e-12), || format!("seed {seed}: distortion rose {} → {}", w[0], w[1]))?;
        }
    }
    let (lo, hi) = two_level_gaussian_oracle();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let data = gaussian(1, 100_000, &mut rng);
    let cb = lloyd_train(&data, 1, 7, DEFAULT_TOL, DEFAULT_MAX_ITERS).map_err(|e| e.to_string())?;
    let mut c = [cb.centroid(0)[0], cb.centroid(1)[0]];
    c.sort_by(f64::total_cmp);
    ensure((c[0] - lo).abs() <= 0.02 && (c[1] - hi).abs() <= 0.02, || {
        format!("centroids {c:?} vs oracle ({lo:.4}, {hi:.4})")
    })?;
    Ok(format!(
        "100 seeds monotone; centroids ({:.4}, {:.4}) vs oracle ({lo:.4}, {hi:.4})",
        c[0], c[1]
    ))
}

fn rate_distortion() -> Result<String, String> {
    let rows = experiment(ExperimentKind::RateDistortion, |c| c.mc_runs = c.mc_runs.max(200))?;
    let rates = sweep_values(&rows, "satc", "distortion");
    for method in ["satc", "pca_tc"] {
        for w in rates.windows(2) {
            let a = lookup(&rows, w[0], method, "distortion")?;
            let b = lookup(&rows, w[1], method, "distortion")?;
            ensure(b.value <= a.value + a.stderr.max(b.stderr), || {
                format!("{method} rises from {:.4} at R={} to {:.4} at R={}", a.value, w[0], b.value, w[1])
            })?;
        }
    }
    let mut notes = Vec::new();
    for &rate in &rates {
        let satc = lookup(&rows, rate, "satc", "distortion")?.value;
        let pca = lookup(&rows, rate, "pca_tc", "distortion")?.value;
        ensure(satc <= pca, || format!("R={rate}: SATC {satc:.4} > PCA-TC {pca:.4}"))?;
        notes.push(format!("R{rate} {satc:.3}/{pca:.3}"));
    }
    Ok(format!("SATC/PCA-TC: {}", notes.join(", ")))
}

fn write_corpus(dir: &Path, count: usize, size: usize) -> Result<(), String> {
    let images = terrain_corpus(count, size, size, 5).map_err(|e| e.to_string())?;
    for (i, img) in images.iter().enumerate() {
        write_pgm(&dir.join(format!("img{i:03}.pgm")), img).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn image_pipeline() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_corpus(dir.path(), 40, 64)?;

    let mut roundtrips = 0;
    for entry in fs::read_dir(dir.path()).map_err(|e| e.to_string())? {
        let bytes = fs::read(entry.map_err(|e| e.to_string())?.path()).map_err(|e| e.to_string())?;
        let img = parse_pgm(&bytes).map_err(|e| e.to_string())?;
        for (bh, bw) in [(8, 8), (5, 7)] {
            let (blocks, grid) = blockize(&img, bh, bw);
            let back = deblockize(&blocks, &grid).map_err(|e| e.to_string())?;
            let exact = back.pixels.iter().zip(&img.pixels).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(exact && encode_pgm(&back) == bytes, || format!("{bh}×{bw} block round trip altered pixels"))?;
            roundtrips += 1;
        }
    }

    let images = spca::bench::read_pgm_dir(dir.path()).map_err(|e| e.to_string())?;
    let mut bank_cfg = BankConfig::new(TransformKind::Spca(SpcaConfig::new(14, 2e-2)), 14, Some(7));
    bank_cfg.seed = 3;
    let bank = image_codec_train(&images[..30], &bank_cfg).map_err(|e| e.to_string())?;
    let (mut bank_bytes, mut stream_bytes) = (Vec::new(), Vec::new());
    write_bank(&bank, &mut bank_bytes).map_err(|e| e.to_string())?;
    for img in &images[30..] {
        let in_process = bank.reconstruct_image(img).map_err(|e| e.to_string())?;
        stream_bytes.clear();
        write_stream(&bank.encode_image(img).map_err(|e| e.to_string())?, &mut stream_bytes)
            .map_err(|e| e.to_string())?;
        let loaded = read_bank(bank_bytes.as_slice()).map_err(|e| e.to_string())?;
        let stream = read_stream(stream_bytes.as_slice()).map_err(|e| e.to_string())?;
        let decoded = loaded.decode_image(&stream).map_err(|e| e.to_string())?;
        let exact = decoded.pixels.iter().zip(&in_process.pixels).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(exact, || "decoding the serialized stream differs from in-process decoding".into())?;
    }

    let rows = experiment(ExperimentKind::ImagePipeline, |c| {
        c.image_dir = Some(dir.path().to_path_buf());
        c.train_images = 30;
    })?;
    let snr = |m: &str| lookup(&rows, 7.0, m, "snr_im").map(|r| r.value);
    let (satc, pca, dct) = (snr("satc")?, snr("pca_tc")?, snr("dct_tc")?);
    ensure(satc >= pca && satc >= dct, || {
        format!("SNR_im SATC {satc:.3} dB, PCA-TC {pca:.3} dB, DCT-TC {dct:.3} dB")
    })?;
    Ok(format!(
        "SNR_im SATC {satc:.2} ≥ PCA-TC {pca:.2}, DCT-TC {dct:.2} dB; {roundtrips} block round trips and 10 stream decodes bit-exact"
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_spca"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("spca {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let images = root.join("images");
    fs::create_dir(&images).map_err(|e| e.to_string())?;
    write_corpus(&images, 8, 32)?;
    let images = images.to_str().ok_or("non-UTF-8 temp path")?.to_string();
    run_cli(&["synth", "--n", "60", "--seed", "4", "--out-dir", root.to_str().unwrap(), "--stem", "d"])?;
    let data = root.join("d.x.csv").to_str().unwrap().to_string();

    let mut jobs: Vec<(String, Vec<String>)> = Vec::new();
    let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    for kind in ExperimentKind::ALL {
        let name = kind.name();
        let mut args = owned(&["experiment", name, "--mc-runs", "3", "--seed", "9"]);
        match kind {
            ExperimentKind::SupportVsN => args.extend(owned(&["--n-train", "100,400"])),
            ExperimentKind::ImagePipeline => args.extend(owned(&["--image-dir", &images, "--train-images", "5"])),
            _ => {}
        }
        jobs.push((name.to_string(), args));
    }
    jobs.push((
        "cv".into(),
        owned(&["cv", "--input", &data, "--q", "2", "--points", "6", "--seed", "9"]),
    ));

    for (name, args) in &jobs {
        let mut outputs = Vec::new();
        for (k, threads) in ["1", "1", "3"].iter().enumerate() {
            let path = root.join(format!("{name}.{k}.csv"));
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            if args[0] == "experiment" {
                full.extend(["--threads", threads]);
            }
            full.extend(["--output", path.to_str().unwrap()]);
            run_cli(&full)?;
            outputs.push(fs::read(&path).map_err(|e| e.to_string())?);
        }
        ensure(outputs.iter().all(|o| *o == outputs[0] && !o.is_empty()), || {
            format!("{name}: CSV differs between identical invocations")
        })?;
    }
    Ok(format!(
        "{} commands each run three times (1, 1 and 3 threads) gave byte-identical CSV",
        jobs.len()
    ))
}
