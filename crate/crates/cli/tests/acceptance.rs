use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use morphline::asymmetry::{asymmetry_report, extract_rois, ssim, ssim_global, AsymmetryReport, SsimParams};
use morphline::dataset::{load_manifest, load_pool, load_record, LandmarkSource, Manifest};
use morphline::fusion::{face_merge, FaceAsset, MergeOptions, MorphSpec, OpType, Pool};
use morphline::ga::{choose_operation, draw_mutation_alpha, run_generation, stream, GaConfig, Outcome, Scorers};
use morphline::geometry::GrayImage;
use morphline::report::{asymmetry_summary, recognition_curves};
use morphline::scoring::{
    build_gallery, check_anonymity, score_forgery, ForgeryScorer, ForgeryStub, Matcher, Verdict,
};

type Check = Result<String, String>;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_morphline"))
}

fn run(args: &[&str]) -> Result<(), String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Corpus {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    drug: PathBuf,
    healthy: PathBuf,
}

fn corpus() -> Corpus {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let (drug, healthy) = (root.join("drug"), root.join("healthy"));
    for (dir, style, seed) in [(&drug, "drug", "1"), (&healthy, "healthy", "2")] {
        run(&["synth-corpus", "--out", dir.to_str().unwrap(), "--n", "10", "--style", style, "--seed", seed, "--size", "128"])
            .unwrap();
    }
    Corpus {
        _tmp: tmp,
        root,
        drug,
        healthy,
    }
}

fn load(dir: &Path, pool: Pool) -> Vec<FaceAsset> {
    load_pool(dir, &LandmarkSource::Sidecar, None, pool).unwrap()
}

fn morph_endpoints(c: &Corpus) -> Check {
    let t = Instant::now();
    let (d, h) = (load(&c.drug, Pool::DrugOriginal), load(&c.healthy, Pool::HealthyGan));
    let mut pairs = 0;
    for i in 0..10 {
        for j in [i, (i + 3) % 10] {
            let one = face_merge(&d[i], &h[j], MorphSpec::Tenths(10), OpType::Crossover, "x", MergeOptions::default())
                .map_err(|e| e.to_string())?;
            let zero = face_merge(&d[i], &h[j], MorphSpec::Tenths(0), OpType::Crossover, "x", MergeOptions::default())
                .map_err(|e| e.to_string())?;
            ensure(one.raster == d[i].raster, format!("alpha 1 differs from drug parent {}", d[i].id))?;
            ensure(zero.raster == h[j].raster, format!("alpha 0 differs from healthy parent {}", h[j].id))?;
            pairs += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("took {secs:.1} s"))?;
    Ok(format!("{pairs} pairs bit-identical at both endpoints in {secs:.2} s"))
}

fn eq1(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    let cxy = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

fn ssim_oracle() -> Check {
    let p = SsimParams::default();
    let mut rng = stream(2024, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut g = || GrayImage::new(8, 8, (0..64).map(|_| rng.random_range(0..=255) as f64).collect()).unwrap();
        let (x, y) = (g(), g());
        let s = ssim(&x, &y, &p).map_err(|e| e.to_string())?;
        worst = worst.max((s - eq1(&x.data, &y.data)).abs());
        ensure((ssim(&x, &x, &p).unwrap() - 1.0).abs() < 1e-9, "ssim(x, x) != 1")?;
        ensure((s - ssim(&y, &x, &p).unwrap()).abs() < 1e-9, "ssim not symmetric")?;
    }
    ensure(worst < 1e-9, format!("max deviation from direct formula {worst:e}"))?;
    Ok(format!("100 random 8x8 pairs, max deviation {worst:.1e}"))
}

fn ssim_contrast() -> Check {
    let p = SsimParams::default();
    let s = ssim(&GrayImage::constant(8, 8, 0.0), &GrayImage::constant(8, 8, 255.0), &p).map_err(|e| e.to_string())?;
    let expected = p.c1() / (255.0 * 255.0 + p.c1());
    ensure((s - expected).abs() < 1e-9, format!("{s} vs {expected}"))?;
    ensure((ssim_global(&[0.0; 4], &[255.0; 4], &p) - expected).abs() < 1e-9, "global path differs")?;
    Ok(format!("SSIM = {s:.6e}, expected {expected:.6e}"))
}

fn op_mix() -> Check {
    let mut rng = stream(7, &[3]);
    let mut crossover = 0;
    let mut off_grid = 0;
    for _ in 0..10_000 {
        match choose_operation(&mut rng, 0.95) {
            OpType::Crossover => crossover += 1,
            _ => {
                let a = draw_mutation_alpha(&mut rng);
                let ten = a.alpha() * 10.0;
                if !a.is_quantized() || (ten - ten.round()).abs() > 1e-12 || !(0.0..=10.0).contains(&ten) {
                    off_grid += 1;
                }
            }
        }
    }
    ensure((9400..=9600).contains(&crossover), format!("crossover count {crossover}"))?;
    ensure(off_grid == 0, format!("{off_grid} mutation alphas off the 0.1 grid"))?;
    Ok(format!("crossover {crossover}/10000, {} mutation alphas all on the grid", 10_000 - crossover))
}

fn cap_and_gate(c: &Corpus) -> Check {
    let out = c.root.join("cap");
    run(&[
        "generate", "--drug-dir", c.drug.to_str().unwrap(), "--healthy-dir", c.healthy.to_str().unwrap(),
        "--out", out.to_str().unwrap(), "--resolution", "native", "--generations", "1", "--max-per-gen", "20",
        "--seed", "11",
    ])?;
    let mpath = out.join("manifest.json");
    let m = load_manifest(&mpath).map_err(|e| e.to_string())?;
    ensure(m.generations[0].accepted == 20 && m.records.len() == 20, format!("accepted {}", m.records.len()))?;

    let drug = load(&c.drug, Pool::DrugOriginal);
    let gallery = build_gallery(&drug, &Matcher::stub()).map_err(|e| e.to_string())?;
    let forgery = ForgeryScorer::stub(ForgeryStub::default());
    for r in &m.records {
        let a = load_record(&mpath, r).map_err(|e| e.to_string())?;
        let f = score_forgery(&a.raster, &forgery, 0.5).map_err(|e| e.to_string())?;
        let k = check_anonymity(&a.raster, &a.landmarks, &gallery, 0.6).map_err(|e| e.to_string())?;
        ensure(f.verdict == Verdict::Real, format!("{} re-scored Fake", r.id))?;
        ensure(k.is_unknown, format!("{} re-scored as identified", r.id))?;
    }

    // every drug original also appears in the healthy pool under another id
    let healthy = load(&c.healthy, Pool::HealthyGan);
    let twins: Vec<FaceAsset> = drug
        .iter()
        .map(|d| FaceAsset {
            id: format!("twin_{}", d.id),
            pool: Pool::HealthyGan,
            ..d.clone()
        })
        .collect();
    let cfg = GaConfig {
        alpha: MorphSpec::Tenths(0),
        max_i: 1000,
        seed: 3,
        ..Default::default()
    };
    let x: Vec<&FaceAsset> = drug.iter().collect();
    let y: Vec<&FaceAsset> = healthy.iter().chain(&twins).collect();
    let g = run_generation(&x, &y, &cfg, 1, &Scorers::stub(), &gallery).map_err(|e| e.to_string())?;
    let dup_attempts: Vec<_> = g
        .attempts
        .iter()
        .filter(|a| a.healthy_parent.starts_with("twin_") && a.alpha_tenths == 0)
        .collect();
    ensure(!dup_attempts.is_empty(), "no duplicate candidates generated")?;
    ensure(
        dup_attempts.iter().all(|a| a.outcome == Outcome::RejectedRecognized && a.min_distance == Some(0.0)),
        "a parent duplicate was not rejected as recognized",
    )?;
    let leaked = g.survivors.iter().filter(|s| drug.iter().any(|d| d.raster == s.asset.raster)).count();
    ensure(leaked == 0, format!("{leaked} duplicates survived"))?;
    Ok(format!(
        "20 accepted, 20 re-scored Real and unknown, {} injected duplicates all rejected",
        dup_attempts.len()
    ))
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(c: &Corpus) -> Check {
    let mut trees = Vec::new();
    for (name, jobs) in [("det1", "1"), ("det8", "8"), ("det1b", "1")] {
        let out = c.root.join(name);
        run(&[
            "generate", "--drug-dir", c.drug.to_str().unwrap(), "--healthy-dir", c.healthy.to_str().unwrap(),
            "--out", out.to_str().unwrap(), "--resolution", "native", "--generations", "3", "--max-per-gen", "12",
            "--seed", "99", "--jobs", jobs,
        ])?;
        trees.push(tree(&out));
    }
    ensure(trees[0] == trees[2], "two --jobs 1 runs differ")?;
    ensure(trees[0] == trees[1], "--jobs 1 and --jobs 8 differ")?;
    Ok(format!("{} files byte-identical across three runs (--jobs 1, 8, 1)", trees[0].len()))
}

fn curve_runs(c: &Corpus) -> Result<(Vec<Manifest>, f64), String> {
    let t = Instant::now();
    let mut manifests = Vec::new();
    for a in 0..=10u8 {
        let out = c.root.join(format!("curve_a{a:02}"));
        run(&[
            "generate", "--drug-dir", c.drug.to_str().unwrap(), "--healthy-dir", c.healthy.to_str().unwrap(),
            "--out", out.to_str().unwrap(), "--resolution", "native", "--generations", "3", "--max-per-gen", "30",
            "--alpha", &a.to_string(), "--seed", "1", "--anonymity-mode", "posthoc", "--forgery-stub", "sharpness",
            "--cohort", "after",
        ])?;
        manifests.push(load_manifest(&out.join("manifest.json")).map_err(|e| e.to_string())?);
    }
    let pattern = c.root.join("curve_a*/manifest.json");
    run(&["stats", pattern.to_str().unwrap(), "--out", c.root.join("stats").to_str().unwrap()])?;
    Ok((manifests, t.elapsed().as_secs_f64()))
}

fn rejection_shape(c: &Corpus, runs: &Result<(Vec<Manifest>, f64), String>) -> Check {
    let (manifests, secs) = runs.as_ref().map_err(|e| e.clone())?;
    ensure(*secs < 300.0, format!("11 runs took {secs:.0} s"))?;
    ensure(c.root.join("stats/rejection.csv").is_file(), "stats did not write rejection.csv")?;
    let mut rows = Vec::new();
    for m in manifests {
        let counts: Vec<usize> = m.generations.iter().map(|g| g.rejected_forgery).collect();
        ensure(counts.len() == 3, format!("alpha {} ran {} generations", m.config.ga.alpha_tenths(), counts.len()))?;
        ensure(
            counts.windows(2).all(|w| w[0] <= w[1]),
            format!("alpha {}: rejections {counts:?} decrease", m.config.ga.alpha_tenths()),
        )?;
        rows.push(format!("{}:{}", m.config.ga.alpha_tenths(), counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("/")));
    }
    let last: Vec<usize> = manifests.iter().map(|m| m.generations[2].rejected_forgery).collect();
    let ends = last[0].max(last[10]);
    ensure(last[1..10].iter().all(|&v| v >= ends), format!("final-generation interior below endpoints {last:?}"))?;
    Ok(format!("forgery rejections per alpha (g1/g2/g3) {} in {secs:.0} s", rows.join(" ")))
}

fn recognition_trend(runs: &Result<(Vec<Manifest>, f64), String>) -> Check {
    let (manifests, _) = runs.as_ref().map_err(|e| e.clone())?;
    let t = recognition_curves(manifests).map_err(|e| e.to_string())?;
    let fr: Vec<f64> = (0..=10u8)
        .map(|a| t.get("after", 1, a).and_then(|c| c.fraction()).unwrap_or(f64::NAN))
        .collect();
    ensure(fr.iter().all(|f| f.is_finite()), format!("empty generation-1 cells {fr:?}"))?;
    ensure(fr.windows(2).all(|w| w[0] <= w[1]), format!("not weakly increasing {fr:.3?}"))?;
    ensure(fr[10] == 1.0, format!("alpha 1 identified fraction {}", fr[10]))?;
    Ok(format!("generation-1 identified fraction by alpha {fr:.2?}"))
}

fn asymmetry(c: &Corpus) -> Check {
    let sym = c.root.join("sym");
    run(&["synth-corpus", "--out", sym.to_str().unwrap(), "--n", "4", "--style", "symmetric", "--seed", "5", "--size", "160"])?;
    let csv = c.root.join("sym.csv");
    run(&["asymmetry", "--dir", sym.to_str().unwrap(), "--out", csv.to_str().unwrap()])?;
    let text = fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let means: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    ensure(means.len() == 4, format!("{} rows", means.len()))?;
    ensure(means.iter().all(|&m| m >= 99.0), format!("symmetric means {means:?}"))?;

    let mut face = load(&sym, Pool::DrugOriginal).remove(0);
    let base = asymmetry_report(&face.raster, &face.landmarks).map_err(|e| e.to_string())?;
    let rc = extract_rois(&face.landmarks).map_err(|e| e.to_string())?[3];
    for y in rc.p1.y.ceil() as u32..=rc.p2.y.floor() as u32 {
        for x in rc.p1.x.ceil() as u32..=rc.p2.x.floor() as u32 {
            let p = face.raster.pixel(x, y);
            face.raster.set_pixel(x, y, p.map(|v| v.saturating_add(60)));
        }
    }
    let pert = asymmetry_report(&face.raster, &face.landmarks).map_err(|e| e.to_string())?;
    ensure(pert.cheeks < base.cheeks, format!("cheeks {} not below {}", pert.cheeks, base.cheeks))?;

    let s = asymmetry_summary(
        &[AsymmetryReport::from_scores(66.5, 83.3, 77.9)],
        &[AsymmetryReport::from_scores(46.4, 69.9, 69.2)],
    )
    .map_err(|e| e.to_string())?;
    for (row, d) in s.rows.iter().zip([-20.1, -13.4, -8.7]) {
        ensure((row.delta - d).abs() < 1e-9, format!("{} delta {}", row.region, row.delta))?;
    }
    let before = AsymmetryReport::from_scores(66.5, 83.3, 77.9);
    ensure((before.mean - 75.9).abs() < 1e-9, format!("mean {}", before.mean))?;
    Ok(format!(
        "symmetric means {:.2?}; cheeks {:.2} -> {:.2} after +60 on the right cheek; reference deltas reproduced",
        means, base.cheeks, pert.cheeks
    ))
}

fn main() {
    let c = corpus();
    let mut failed = 0;
    let mut report = |name: &str, r: Check| match r {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL {name}: {detail}");
        }
    };
    report("morph-endpoints", morph_endpoints(&c));
    report("ssim-oracle", ssim_oracle());
    report("ssim-constant-contrast", ssim_contrast());
    report("ga-op-mix", op_mix());
    report("cap-and-gate-soundness", cap_and_gate(&c));
    report("determinism", determinism(&c));
    let runs = curve_runs(&c);
    report("rejection-curve-shape", rejection_shape(&c, &runs));
    report("recognition-trend", recognition_trend(&runs));
    report("asymmetry", asymmetry(&c));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
