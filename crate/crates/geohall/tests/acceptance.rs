//! Acceptance criteria for the primary pipeline. Each test prints one
//! `criterion N: PASS|FAIL` line straight to stderr, bypassing capture.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use geohall::ght::Dtype;
use geohall::pipeline::{self, EvalOptions, SpanMode};
use geohall::store::{read_manifest, read_trace, write_manifest, write_trace};
use geohall::Error;
use geohall_core::corpus::{build_dataset, Block, Corpus, DatasetSpec, Domain, HallType, PrRecord};
use geohall_core::eval::{auroc, GroupBy};
use geohall_core::geostats::{attention_score, gram_spectrum, hidden_score, matrix_entropy, Statistic};
use geohall_core::mocklm::{mock_extract, DomainScale, Effect, MockConfig};
use geohall_core::pnorm::perturbation_normalize;
use geohall_core::trace::{Matrix, PayloadKind};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u8, what: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {n}: {} - {what} ({detail})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {what} ({detail})");
}

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Matrix {
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    let data = (0..m * d).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    Matrix::new(m, d, data).unwrap()
}

/// HS and ME from a dense SVD of `h`, padding the `m - d` structural zeros
/// and applying the same relative eigenvalue floor.
fn svd_oracle(h: &Matrix) -> (f64, f64) {
    let (m, d) = (h.rows(), h.cols());
    let dm = DMatrix::from_row_slice(m, d, h.data());
    let mut eig: Vec<f64> = dm.svd(false, false).singular_values.iter().map(|s| s * s).collect();
    eig.resize(m, 0.0);
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let floor = 1e-12 * max;
    let hs = eig.iter().map(|&l| l.max(floor).ln()).sum::<f64>() / m as f64;
    let total: f64 = eig.iter().sum();
    let me = -eig
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| (l / total) * (l / total).ln())
        .sum::<f64>();
    (hs, me)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn criterion_1_spectral_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=16);
        let d = rng.random_range(1..=32);
        let h = random_matrix(&mut rng, m, d);
        let spec = gram_spectrum(&h, PayloadKind::Hidden).unwrap();
        let (hs, _) = hidden_score(&spec, m).unwrap();
        let me = matrix_entropy(&spec).unwrap();
        let (hs_o, me_o) = svd_oracle(&h);
        worst = worst.max(rel_err(hs, hs_o)).max(rel_err(me, me_o));
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "HS/ME match a dense SVD oracle on 1000 random matrices",
        worst <= 1e-8 && elapsed < Duration::from_secs(10),
        &format!("max relative error {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_2_closed_forms() {
    let mut worst_me: f64 = 0.0;
    for k in 1..=16usize {
        for m in k..=16 {
            // k orthogonal rows of equal norm, then zero rows
            let d = 16;
            let mut h = Matrix::zeros(m, d);
            for i in 0..k {
                h.row_mut(i)[i] = 2.5;
            }
            let me = matrix_entropy(&gram_spectrum(&h, PayloadKind::Hidden).unwrap()).unwrap();
            worst_me = worst_me.max((me - (k as f64).ln()).abs());
        }
    }

    let mut worst_as: f64 = 0.0;
    for m in 1..=64usize {
        let diag: Vec<f64> = (1..=m).map(|j| 1.0 / j as f64).collect();
        let (score, _) = attention_score(&Matrix::new(1, m, diag).unwrap()).unwrap();
        let factorial: f64 = (1..=m).map(|j| j as f64).product();
        worst_as = worst_as.max((score + factorial.ln() / m as f64).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_hs: f64 = 0.0;
    for _ in 0..200 {
        let m = rng.random_range(1..=12);
        let d = rng.random_range(m..=24);
        let h = random_matrix(&mut rng, m, d);
        let base = hidden_score(&gram_spectrum(&h, PayloadKind::Hidden).unwrap(), m).unwrap().0;
        for c in [0.1, 3.0, 10.0] {
            let mut hc = h.clone();
            hc.scale(c);
            let scaled = hidden_score(&gram_spectrum(&hc, PayloadKind::Hidden).unwrap(), m).unwrap().0;
            worst_hs = worst_hs.max((scaled - base - 2.0 * f64::ln(c)).abs());
        }
    }
    verdict(
        2,
        "ME uniform rank-k, AS causal uniform, HS scale law",
        worst_me <= 1e-12 && worst_as <= 1e-12 && worst_hs <= 1e-8,
        &format!("ME {worst_me:.1e}, AS {worst_as:.1e}, HS {worst_hs:.1e}"),
    );
}

fn brute_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut score = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                score += 1.0;
            } else if p == n {
                score += 0.5;
            }
        }
    }
    score / (pos.len() * neg.len()) as f64
}

#[test]
fn criterion_3_auroc_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut tied_sets = 0;
    for i in 0..200 {
        let np = rng.random_range(1..=500);
        let nn = rng.random_range(1..=500);
        // every other set draws from a small integer grid to force ties
        let draw = |rng: &mut ChaCha8Rng| {
            if i % 2 == 0 {
                rng.random_range(0..8) as f64
            } else {
                rng.random_range(-1.0..1.0)
            }
        };
        let pos: Vec<f64> = (0..np).map(|_| draw(&mut rng)).collect();
        let neg: Vec<f64> = (0..nn).map(|_| draw(&mut rng)).collect();
        if pos.iter().any(|p| neg.contains(p)) {
            tied_sets += 1;
        }
        if auroc(&pos, &neg).unwrap().to_bits() != brute_auroc(&pos, &neg).to_bits() {
            mismatches += 1;
        }
    }
    verdict(
        3,
        "rank AUROC equals pairwise brute force bit for bit",
        mismatches == 0 && tied_sets >= 100,
        &format!("{mismatches} mismatches over 200 sets, {tied_sets} with ties"),
    );
}

/// Published incorrectness magnitudes per domain and level.
fn offset_range(domain: Domain, level: u8) -> (i64, i64) {
    match (domain, level) {
        (Domain::Math, 1) => (1, 9),
        (Domain::Math, 2) => (10, 99),
        (Domain::Math, 3) => (100, 999),
        (Domain::History, 1) => (1, 5),
        (Domain::History, 2) => (6, 20),
        (Domain::History, 3) => (21, 50),
        (Domain::Counting, l) => (l as i64, l as i64),
        _ => unreachable!(),
    }
}

#[test]
fn criterion_4_dataset_counts_and_ranges() {
    let corpus = Corpus::bundled(1).unwrap();
    let spec = DatasetSpec {
        seed: 1,
        ..DatasetSpec::default()
    };
    let ds = build_dataset(&spec, &corpus).unwrap();
    let mut baselines: HashMap<Block, usize> = HashMap::new();
    for r in ds.baselines() {
        *baselines.entry(r.block().unwrap()).or_default() += 1;
    }
    let counts = [Block::Math, Block::History, Block::Counting, Block::All].map(|b| baselines[&b]);
    let counts_ok = counts == [400, 70, 80, 225];

    let by_id: HashMap<&str, &PrRecord> = ds.records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let baseline_of = |r: &PrRecord| {
        let parts: Vec<&str> = r.record_id.splitn(3, '-').collect();
        by_id[format!("{}-{}-baseline-0", parts[0], parts[1]).as_str()]
    };
    let (mut offsets, mut offsets_ok) = (0, 0);
    let (mut reps, mut reps_ok) = (0, 0);
    let (mut truncs, mut truncs_ok) = (0, 0);
    for r in ds.records.iter().filter(|r| r.perturbation_offset.is_none()) {
        let domain = r.source_domain().unwrap();
        match r.hall_type {
            HallType::Incorrectness => {
                offsets += 1;
                let (lo, hi) = offset_range(domain, r.level);
                let mag = r.answer_offset.abs();
                let truth = corpus.find(&r.qa_ref).unwrap().answer;
                if (lo..=hi).contains(&mag) && r.rendered_answer() == Some(truth + r.answer_offset) {
                    offsets_ok += 1;
                }
            }
            HallType::Incoherence => {
                reps += 1;
                if r.response_text.matches("The answer to '").count() == r.level as usize + 1 {
                    reps_ok += 1;
                }
            }
            HallType::Incompleteness => {
                truncs += 1;
                let full = baseline_of(r).response_text.chars().count() as f64;
                let kept = r.response_text.chars().count() as f64;
                let ratio = 1.0 - 0.1 * r.level as f64;
                if (kept - ratio * full).abs() <= 1.0 {
                    truncs_ok += 1;
                }
            }
            _ => {}
        }
    }
    verdict(
        4,
        "corpus sizes, offset ranges, repetition counts, truncation ratios",
        counts_ok && offsets == offsets_ok && reps == reps_ok && truncs == truncs_ok && offsets > 0,
        &format!(
            "baselines {counts:?}; offsets {offsets_ok}/{offsets}; repetitions {reps_ok}/{reps}; truncations {truncs_ok}/{truncs}"
        ),
    );
}

#[test]
fn criterion_5_normalization_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_moment, mut worst_affine, mut worst_perm): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..500 {
        let k = rng.random_range(2..=12);
        let sib: Vec<f64> = (0..k).map(|_| rng.random_range(-50.0..50.0)).collect();
        let z: Vec<f64> = sib.iter().map(|&s| perturbation_normalize(s, &sib).unwrap()).collect();
        let mean = z.iter().sum::<f64>() / k as f64;
        let sd = (z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64).sqrt();
        worst_moment = worst_moment.max(mean.abs()).max((sd - 1.0).abs());

        let base = rng.random_range(-80.0..80.0);
        let z0 = perturbation_normalize(base, &sib).unwrap();
        let (a, b) = (rng.random_range(0.01..100.0), rng.random_range(-100.0..100.0));
        let moved: Vec<f64> = sib.iter().map(|s| a * s + b).collect();
        let za = perturbation_normalize(a * base + b, &moved).unwrap();
        worst_affine = worst_affine.max((za - z0).abs() / z0.abs().max(1.0));

        let mut shuffled = sib.clone();
        shuffled.reverse();
        shuffled.rotate_left(rng.random_range(0..k));
        let zp = perturbation_normalize(base, &shuffled).unwrap();
        worst_perm = worst_perm.max((zp - z0).abs() / z0.abs().max(1.0));
    }
    verdict(
        5,
        "sibling z-scores have mean 0 and std 1; affine and permutation invariance",
        worst_moment <= 1e-9 && worst_affine <= 1e-9 && worst_perm <= 1e-9,
        &format!("moments {worst_moment:.1e}, affine {worst_affine:.1e}, permutation {worst_perm:.1e}"),
    );
}

fn run_hs_eval(dir: &Path, records: &[PrRecord], mock: &MockConfig, normalized: bool) -> geohall_core::eval::EvalReport {
    let traces = dir.join("traces");
    let entries = pipeline::mock_extract_all(records, mock, PayloadKind::Hidden, Dtype::F32, &traces).unwrap();
    let mut profiles = pipeline::compute_stats(&traces, &[Statistic::Hs], SpanMode::Full).unwrap();
    if normalized {
        profiles = pipeline::normalize_stats(&profiles, &entries).unwrap();
    }
    let labeled = pipeline::label_profiles(profiles, &entries).unwrap();
    let opts = EvalOptions {
        normalized,
        group_by: GroupBy::Block,
        baseline_relative: false,
    };
    pipeline::evaluate(&labeled, &[Statistic::Hs], opts).unwrap().report
}

#[test]
fn criterion_6_pipeline_separation() {
    let corpus = Corpus::bundled(6).unwrap();
    let effects: Vec<Effect> = (1..=3)
        .map(|level| Effect {
            hall_type: HallType::Incorrectness,
            level,
            target_layer: 5,
            hidden_scale: 3.0,
            attn_diag_shift: 0.0,
        })
        .collect();
    // d exceeds every baseline/incorrectness sequence length, so no Gram
    // matrix is rank deficient
    let mock = MockConfig {
        hidden_dim: 64,
        seed: 6,
        effects,
        ..MockConfig::default()
    };
    let spec = DatasetSpec {
        domains: vec![Block::All],
        types: vec![HallType::Incorrectness],
        seed: 6,
        ..DatasetSpec::default()
    };
    let tmp = tempfile::tempdir().unwrap();

    let plain = build_dataset(
        &DatasetSpec {
            include_perturbations: false,
            ..spec.clone()
        },
        &corpus,
    )
    .unwrap();
    let report = run_hs_eval(&tmp.path().join("a"), &plain.records, &mock, false);
    let injected: Vec<(u8, Option<usize>, f64)> = report.cells.iter().map(|c| (c.level, c.best_layer, c.best_auroc)).collect();
    let injected_ok = injected.len() == 3 && injected.iter().all(|&(_, l, a)| l == Some(5) && a >= 0.95);

    let shifted_mock = MockConfig {
        domain_scales: vec![
            DomainScale {
                domain: Domain::History,
                scale: 5.0,
            },
            DomainScale {
                domain: Domain::Counting,
                scale: 25.0,
            },
        ],
        ..mock
    };
    let full = build_dataset(&spec, &corpus).unwrap();
    let raw = run_hs_eval(&tmp.path().join("b"), &full.records, &shifted_mock, false);
    let norm = run_hs_eval(&tmp.path().join("c"), &full.records, &shifted_mock, true);
    let raw_best: Vec<f64> = raw.cells.iter().map(|c| c.best_auroc).collect();
    let norm_best: Vec<f64> = norm.cells.iter().map(|c| c.best_auroc).collect();
    let shift_ok = raw_best.len() == 3
        && norm_best.len() == 3
        && raw_best.iter().all(|&a| a < 0.7)
        && norm_best.iter().all(|&a| a >= 0.95)
        && norm.cells.iter().all(|c| c.statistic == Statistic::HsNorm);

    let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join("/");
    verdict(
        6,
        "layer-5 effect found; domain shift breaks raw HS, HS-Norm recovers",
        injected_ok && shift_ok,
        &format!(
            "injected (level, layer, auroc) {injected:?}; pooled raw HS {}, HS-Norm {}",
            fmt(&raw_best),
            fmt(&norm_best)
        ),
    );
}

#[test]
fn criterion_7_trace_format() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let ds = build_dataset(
        &DatasetSpec {
            domains: vec![Block::History],
            ..DatasetSpec::default()
        },
        &Corpus::bundled(0).unwrap(),
    )
    .unwrap();
    let mock = MockConfig::default();
    let mut entries = Vec::new();
    let mut originals = Vec::new();
    for r in ds.records.iter().take(40) {
        // scaled siblings leave the f32 grid; the identity is checked on f32 traces
        let mut t = mock_extract(r, &mock).unwrap();
        for h in &mut t.layers {
            h.data_mut().iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
        entries.push(write_trace(dir, &t, &r.labels(), Dtype::F32).unwrap());
        originals.push(t);
    }
    write_manifest(dir, &mut entries).unwrap();
    let manifest = read_manifest(dir).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let identical = originals.iter().all(|t| {
        let e = manifest.iter().find(|e| e.record_id == t.record_id).unwrap();
        let back = read_trace(dir, e).unwrap();
        back.layers.len() == t.layers.len()
            && back.layers.iter().zip(&t.layers).all(|(a, b)| bits(a.data()) == bits(b.data()))
            && bits(&back.attn_diag) == bits(&t.attn_diag)
            && back.answer_token_span == t.answer_token_span
    });

    let entry = manifest[0].clone();
    let layer0 = dir.join(&entry.files.layers[0]);
    let pristine = fs::read(&layer0).unwrap();
    let mut outcomes = Vec::new();

    let mut bad = pristine.clone();
    bad[..4].copy_from_slice(b"XXXX");
    fs::write(&layer0, &bad).unwrap();
    outcomes.push(matches!(read_trace(dir, &entry), Err(Error::BadMagic { ref path, .. }) if *path == layer0));

    fs::write(&layer0, &pristine).unwrap();
    let mut wrong_m = entry.clone();
    wrong_m.seq_len += 1;
    outcomes.push(matches!(read_trace(dir, &wrong_m), Err(Error::DimMismatch { ref path, .. }) if *path == layer0));

    fs::write(&layer0, &pristine[..pristine.len() - 3]).unwrap();
    outcomes.push(matches!(read_trace(dir, &entry), Err(Error::Truncated { ref path, .. }) if *path == layer0));

    let mut nan = pristine.clone();
    let n = nan.len();
    nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&layer0, &nan).unwrap();
    outcomes.push(matches!(read_trace(dir, &entry), Err(Error::NonFinitePayload { ref path, .. }) if *path == layer0));

    verdict(
        7,
        "f32 round trip is bitwise; corrupt magic, dims, length and NaN give distinct errors",
        identical && outcomes.iter().all(|&o| o),
        &format!("round trip {identical}, magic/dims/truncated/nan {outcomes:?}"),
    );
}

fn run_cli(out: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_geohall"))
        .args(args)
        .args(["--out-dir", out.to_str().unwrap(), "--seed", "8", "--log-level", "warn"])
        .status()
        .unwrap();
    assert!(status.success(), "geohall {args:?} failed with {status}");
}

#[test]
fn criterion_8_end_to_end_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runtimes = Vec::new();
    for run in ["one", "two"] {
        let out = tmp.path().join(run);
        let start = Instant::now();
        for cmd in [
            &["gen"][..],
            &["mock-extract"],
            &["stats"],
            &["normalize"],
            &["eval"],
            &["eval", "--normalized"],
        ] {
            run_cli(&out, cmd);
        }
        runtimes.push(start.elapsed().as_secs_f64());
    }
    let files = [
        "dataset.jsonl",
        "traces/manifest.jsonl",
        "stats.csv",
        "stats-norm.csv",
        "report.json",
        "report.txt",
        "distributions.csv",
        "report-norm.json",
        "report-norm.txt",
        "distributions-norm.csv",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(tmp.path().join("one").join(f)).unwrap() != fs::read(tmp.path().join("two").join(f)).unwrap())
        .collect();
    verdict(
        8,
        "two default runs from one seed are byte-identical and each takes under 2 minutes",
        differing.is_empty() && runtimes.iter().all(|&t| t < 120.0),
        &format!("differing files {differing:?}, runtimes {runtimes:.1?} s"),
    );
}
